// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/deploy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "moce/gate.hpp"

namespace moce::deploy {

using model::MaeNetwork;
using model::MaskSpec;
using model::ModelConfig;
using model::RoutingMode;

ExpertSelection select_expert(const cluster::ClusterModel& clusters,
                              const MaeNetwork& dense_net, const MaeNetwork& moce_net,
                              const io::Dataset& downstream) {
  if (downstream.count() == 0) throw Error("select_expert: empty downstream dataset");
  const ModelConfig& mc = moce_net.config();
  if (mc.moe_layers.empty()) throw Error("select_expert: network has no expert banks");

  Tensor features = model::extract_features(dense_net, downstream.images());
  std::vector<int> ids = cluster::assign(clusters.centroids, features);

  ExpertSelection sel;
  sel.cluster_histogram.assign(static_cast<std::size_t>(clusters.config.clusters), 0);
  for (int id : ids) sel.cluster_histogram[static_cast<std::size_t>(id)] += 1;
  sel.chosen_cluster = 0;
  for (int c = 1; c < clusters.config.clusters; ++c) {
    if (sel.cluster_histogram[static_cast<std::size_t>(c)] >
        sel.cluster_histogram[static_cast<std::size_t>(sel.chosen_cluster)]) {
      sel.chosen_cluster = c;  // strict >: ties keep the lower index
    }
  }

  for (int block : mc.moe_layers) {
    const Tensor& wg = moce_net.param("encoder.block" + std::to_string(block) + ".mlp.gate.wg");
    model::GateDecision d =
        model::moce_gate(sel.chosen_cluster, clusters.centroids, wg, /*k=*/1, 0.0, nullptr);
    sel.moe_blocks.push_back(block);
    sel.expert_per_layer.push_back(d.chosen[0]);
    sel.gate_weight_per_layer.push_back(d.weights[static_cast<std::size_t>(d.chosen[0])]);
  }
  return sel;
}

MaeNetwork extract_submodel(const MaeNetwork& moce_net, const ExpertSelection& selection) {
  const ModelConfig& mc = moce_net.config();
  if (mc.moe_layers.empty()) throw Error("extract_submodel: network has no expert banks");
  if (mc.active_experts != 1) {
    throw Error("extract_submodel: only K=1 networks extract to a dense model (got K=" +
                std::to_string(mc.active_experts) + ")");
  }
  if (selection.moe_blocks != mc.moe_layers) {
    throw Error("extract_submodel: selection does not cover this network's expert-bank layers");
  }

  ModelConfig dense_cfg = mc;
  dense_cfg.moe_layers.clear();
  MaeNetwork dense(dense_cfg);
  for (auto& [name, tensor] : dense.mutable_params()) {
    std::size_t mlp_pos = name.find(".mlp.");
    bool from_expert = false;
    if (mlp_pos != std::string::npos && name.rfind("encoder.block", 0) == 0) {
      int block = std::stoi(name.substr(std::strlen("encoder.block")));
      auto it = std::find(selection.moe_blocks.begin(), selection.moe_blocks.end(), block);
      if (it != selection.moe_blocks.end()) {
        std::size_t layer = static_cast<std::size_t>(it - selection.moe_blocks.begin());
        int expert = selection.expert_per_layer[layer];
        double w = selection.gate_weight_per_layer[layer];
        std::string suffix = name.substr(mlp_pos + std::strlen(".mlp."));  // w1/b1/w2/b2
        std::string src_name = name.substr(0, mlp_pos) + ".mlp.expert" +
                               std::to_string(expert) + "." + suffix;
        tensor = moce_net.param(src_name);
        // The gate weight folds into the output affine map: w * (W2 h + b2)
        // == (w W2) h + (w b2). Folding into the input affine would not
        // commute with the nonlinearity.
        if (suffix == "w2" || suffix == "b2") {
          for (double& v : tensor.data) v *= w;
        }
        from_expert = true;
      }
    }
    if (!from_expert) tensor = moce_net.param(name);
  }
  return dense;
}

// ---------------------------------------------------------------------------
// Fine-tuning probe.

namespace {

struct Split {
  std::vector<int> train, test;
};

Split seeded_split(int n, double train_fraction, Rng rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  int train_n = std::max(1, std::min(n - 1, static_cast<int>(std::lround(train_fraction * n))));
  Split s;
  s.train.assign(order.begin(), order.begin() + train_n);
  s.test.assign(order.begin() + train_n, order.end());
  return s;
}

struct SgdState {
  std::map<std::string, Tensor> velocity;
};

void sgd_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
              SgdState& state, double lr, double momentum) {
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    Tensor& vel = state.velocity.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      vel.data[i] = momentum * vel.data[i] + git->second.data[i];
      p.data[i] -= lr * vel.data[i];
    }
  }
}

double accuracy_of(const MaeNetwork& net, const std::map<std::string, Tensor>& head,
                   const std::vector<Tensor>& tokens, const std::vector<int>& labels,
                   const std::vector<int>& subset, int n_classes) {
  const ModelConfig& mc = net.config();
  MaskSpec all = MaskSpec::all_visible(mc.tokens());
  int correct = 0;
  for (int idx : subset) {
    nn::Graph g;
    model::NetBinder binder(net, g, /*trainable=*/false);
    model::ForwardOptions opt;
    opt.mode = RoutingMode::kDense;
    opt.with_decoder = false;
    model::ForwardResult fwd = binder.forward(tokens[static_cast<std::size_t>(idx)], all, opt);
    nn::Value logits = nn::add_row_bias(nn::matmul(fwd.pooled, g.constant(head.at("head.w"))),
                                        g.constant(head.at("head.b")));
    const Tensor& lv = g.value(logits);
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (lv.data[static_cast<std::size_t>(c)] > lv.data[static_cast<std::size_t>(best)]) best = c;
    }
    if (best == labels[static_cast<std::size_t>(idx)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(subset.size());
}

double run_grid_point(const MaeNetwork& source_net, const std::vector<Tensor>& tokens,
                      const std::vector<int>& labels, const Split& split, int n_classes,
                      double lr, const FinetuneConfig& cfg) {
  const ModelConfig& mc = source_net.config();
  MaeNetwork net = source_net;  // fine-tuning owns a copy per grid point
  std::map<std::string, Tensor> head;
  head.emplace("head.w", Tensor::zeros({mc.embed_dim, n_classes}));
  head.emplace("head.b", Tensor::zeros({1, n_classes}));

  MaskSpec all = MaskSpec::all_visible(mc.tokens());
  Rng batch_rng = Rng(cfg.seed).fork("probe-batches");
  SgdState opt;
  const int batch = std::min<int>(cfg.batch_size, static_cast<int>(split.train.size()));

  for (int step = 0; step < cfg.steps; ++step) {
    nn::Graph g;
    model::NetBinder binder(net, g, /*trainable=*/true);
    nn::Value head_w = g.param(head.at("head.w"));
    nn::Value head_b = g.param(head.at("head.b"));

    std::vector<nn::Value> pooled_rows;
    std::vector<int> batch_labels;
    for (int b = 0; b < batch; ++b) {
      int idx = split.train[batch_rng.uniform_int(split.train.size())];
      model::ForwardOptions opt_fwd;
      opt_fwd.mode = RoutingMode::kDense;
      opt_fwd.with_decoder = false;
      model::ForwardResult fwd = binder.forward(tokens[static_cast<std::size_t>(idx)], all, opt_fwd);
      pooled_rows.push_back(fwd.pooled);
      batch_labels.push_back(labels[static_cast<std::size_t>(idx)]);
    }
    nn::Value feats = batch == 1 ? pooled_rows[0] : nn::concat_rows(pooled_rows);
    nn::Value logits = nn::add_row_bias(nn::matmul(feats, head_w), head_b);
    nn::Value logp = nn::log_softmax_rows(logits);
    std::vector<int> rows(static_cast<std::size_t>(batch));
    std::iota(rows.begin(), rows.end(), 0);
    nn::Value picked = nn::select_entries(logp, rows, batch_labels);
    nn::Value loss = nn::scale(nn::sum_all(picked), -1.0 / batch);
    if (!std::isfinite(g.value(loss).data[0])) {
      throw Error("finetune_probe: non-finite loss at step " + std::to_string(step));
    }
    g.backward(loss);

    std::map<std::string, Tensor> grads;
    for (const auto& [name, leaf] : binder.leaves()) {
      if (g.has_grad(leaf)) grads.emplace(name, g.grad(leaf));
    }
    grads.emplace("head.w", g.grad(head_w));
    grads.emplace("head.b", g.grad(head_b));
    // End-to-end: backbone and head share one optimizer state (names are
    // disjoint).
    sgd_step(net.mutable_params(), grads, opt, lr, cfg.momentum);
    sgd_step(head, grads, opt, lr, cfg.momentum);
  }
  return accuracy_of(net, head, tokens, labels, split.test, n_classes);
}

}  // namespace

ProbeResult finetune_probe(const MaeNetwork& net, const io::Dataset& task,
                           const FinetuneConfig& cfg, ThreadPool* pool) {
  if (cfg.lr_grid.empty()) throw Error("finetune_probe: empty learning-rate grid");
  if (!net.config().moe_layers.empty()) {
    throw Error("finetune_probe: extract a dense sub-model before fine-tuning");
  }
  std::vector<int> classes = task.distinct_classes();
  if (classes.size() < 2) throw Error("finetune_probe: task dataset has a single class");
  std::map<int, int> label_of;
  for (std::size_t i = 0; i < classes.size(); ++i) label_of[classes[i]] = static_cast<int>(i);

  const ModelConfig& mc = net.config();
  std::vector<Tensor> tokens;
  std::vector<int> labels;
  tokens.reserve(static_cast<std::size_t>(task.count()));
  for (int i = 0; i < task.count(); ++i) {
    tokens.push_back(model::patchify(task.image(i), mc.patch_size));
    labels.push_back(label_of.at(task.class_ids[static_cast<std::size_t>(i)]));
  }
  Split split = seeded_split(task.count(), cfg.train_fraction, Rng(cfg.seed).fork("probe-split"));

  ProbeResult result;
  result.accuracy_per_lr.assign(cfg.lr_grid.size(), 0.0);
  auto run_one = [&](int i) {
    result.accuracy_per_lr[static_cast<std::size_t>(i)] =
        run_grid_point(net, tokens, labels, split, static_cast<int>(classes.size()),
                       cfg.lr_grid[static_cast<std::size_t>(i)], cfg);
  };
  if (pool != nullptr) {
    pool->run_indexed(static_cast<int>(cfg.lr_grid.size()), run_one);
  } else {
    for (std::size_t i = 0; i < cfg.lr_grid.size(); ++i) run_one(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < cfg.lr_grid.size(); ++i) {
    if (result.accuracy_per_lr[i] > result.best_accuracy) {
      result.best_accuracy = result.accuracy_per_lr[i];
      result.best_lr = cfg.lr_grid[i];
    }
  }
  if (result.best_lr == 0.0) result.best_lr = cfg.lr_grid[0];
  return result;
}

// ---------------------------------------------------------------------------

double psnr(const Tensor& reconstruction, const Tensor& target, double max_value) {
  if (!reconstruction.same_shape(target)) {
    throw ShapeError("psnr", reconstruction.shape, target.shape);
  }
  if (!(max_value > 0.0)) throw Error("psnr: max value must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    double d = reconstruction.data[i] - target.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(target.numel());
  if (mse == 0.0) return kPsnrCapDb;
  return 10.0 * std::log10(max_value * max_value / mse);
}

double eval_psnr(const MaeNetwork& net, const io::Dataset& data, double mask_ratio,
                 std::uint64_t seed, RoutingMode mode, const cluster::ClusterModel* clusters,
                 ThreadPool* pool) {
  if (data.count() == 0) throw Error("eval_psnr: empty dataset");
  const ModelConfig& mc = net.config();
  if (mode == RoutingMode::kClusterGate) {
    if (clusters == nullptr ||
        static_cast<int>(clusters->assignments.size()) != data.count()) {
      throw Error("eval_psnr: cluster-gate evaluation needs a cluster model whose assignments "
                  "cover this dataset; extract a sub-model for new data");
    }
  }
  Rng mask_rng = Rng(seed).fork("psnr-masks");
  std::vector<std::uint64_t> mask_seeds(static_cast<std::size_t>(data.count()));
  for (auto& s : mask_seeds) s = mask_rng.next_u64();

  std::vector<double> scores(static_cast<std::size_t>(data.count()), 0.0);
  auto eval_one = [&](int i) {
    Tensor toks = model::patchify(data.image(i), mc.patch_size);
    MaskSpec mask = model::random_mask(mc.tokens(), mask_ratio, mask_seeds[static_cast<std::size_t>(i)]);
    int cluster_id = mode == RoutingMode::kClusterGate
                         ? clusters->assignments[static_cast<std::size_t>(i)]
                         : -1;
    Tensor pred = model::predict_tokens(net, toks, mask, mode, cluster_id,
                                        clusters == nullptr ? nullptr : &clusters->centroids);
    // Masked tokens only: visible positions are inputs, not predictions.
    Tensor pred_masked = Tensor::zeros({static_cast<int>(mask.masked.size()), mc.patch_dim()});
    Tensor target_masked = pred_masked;
    for (std::size_t r = 0; r < mask.masked.size(); ++r)
      for (int c = 0; c < mc.patch_dim(); ++c) {
        pred_masked.at(static_cast<int>(r), c) = pred.at(mask.masked[r], c);
        target_masked.at(static_cast<int>(r), c) = toks.at(mask.masked[r], c);
      }
    scores[static_cast<std::size_t>(i)] = psnr(pred_masked, target_masked, 1.0);
  };
  if (pool != nullptr) {
    pool->run_indexed(data.count(), eval_one);
  } else {
    for (int i = 0; i < data.count(); ++i) eval_one(i);
  }
  double mean = 0.0;
  for (double s : scores) mean += s;
  return mean / static_cast<double>(data.count());
}

}  // namespace moce::deploy
