// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "moce/clustering.hpp"
#include "moce/net.hpp"
#include "moce/rng.hpp"
#include "moce/train.hpp"

namespace {

using namespace moce;

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_MatmulBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(7);
  Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    nn::Graph g;
    nn::Value av = g.param(a), bv = g.param(b);
    nn::Value loss = nn::mean_all(nn::square(nn::matmul(av, bv)));
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(av).data.data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(16)->Arg(64)->Arg(128);

void BM_SinkhornProject(benchmark::State& state) {
  Rng rng(11);
  Tensor scores = random_tensor({16, 64}, rng);
  for (auto _ : state) {
    Tensor q = cluster::sinkhorn_project(scores, 0.05, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(q.data.data());
  }
}
BENCHMARK(BM_SinkhornProject)->Arg(3)->Arg(100);

void BM_EncoderForwardBackward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.moe_layers = {2, 3};
  cfg.experts = 4;
  model::MaeNetwork net = model::MaeNetwork::init(cfg, 5);
  Rng rng(3);
  Tensor image = random_tensor({cfg.image_size, cfg.image_size, cfg.channels}, rng);
  for (double& v : image.data) v = 0.5 * (v + 1.0);
  Tensor tokens = model::patchify(image, cfg.patch_size);
  model::MaskSpec mask = model::random_mask(cfg.tokens(), cfg.mask_ratio, 42);
  Tensor centroids = random_tensor({cfg.embed_dim, 8}, rng);
  cluster::normalize_columns(centroids);
  for (auto _ : state) {
    nn::Graph g;
    model::NetBinder binder(net, g, true);
    model::ForwardOptions opt;
    opt.mode = model::RoutingMode::kClusterGate;
    opt.cluster_id = 0;
    opt.centroids = &centroids;
    model::ForwardResult fwd = binder.forward(tokens, mask, opt);
    nn::Value loss = model::mae_loss(fwd.pred, tokens, mask);
    g.backward(loss);
    benchmark::DoNotOptimize(g.value(loss).data[0]);
  }
}
BENCHMARK(BM_EncoderForwardBackward);

}  // namespace

BENCHMARK_MAIN();
