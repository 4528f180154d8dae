// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>

#include "moce/gate.hpp"
#include "moce/serialize.hpp"

namespace moce::train {

using model::ForwardOptions;
using model::ForwardResult;
using model::GateNoise;
using model::MaeNetwork;
using model::MaskSpec;
using model::ModelConfig;
using model::NetBinder;
using model::RoutingMode;

// ---------------------------------------------------------------------------
// Optimizer and schedule.

AdamW::AdamW(double beta1, double beta2, double weight_decay, double eps)
    : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

namespace {

bool decays(const std::string& name) {
  std::size_t dot = name.rfind('.');
  std::string last = dot == std::string::npos ? name : name.substr(dot + 1);
  return !last.empty() && last[0] == 'w';
}

}  // namespace

void AdamW::step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
                 double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    Tensor& m = m_.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    const Tensor* g = git == grads.end() ? nullptr : &git->second;
    const bool wd = decays(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g == nullptr ? 0.0 : g->data[i];
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
      double update = (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + eps_);
      if (wd) update += weight_decay_ * p.data[i];
      p.data[i] -= lr * update;
    }
  }
}

double cosine_warmup_lr(double peak_lr, long long step, long long total_steps, double warmup_frac) {
  if (total_steps <= 0) return 0.0;
  long long warmup = std::max<long long>(1, std::llround(warmup_frac * total_steps));
  if (step < warmup) return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  double progress = static_cast<double>(step - warmup) /
                    std::max<double>(1.0, static_cast<double>(total_steps - warmup));
  return peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// Expert initialization.

MaeNetwork init_experts(const MaeNetwork& dense, ModelConfig moce_cfg, double noise_std,
                        std::uint64_t seed) {
  const ModelConfig& dcfg = dense.config();
  if (!dcfg.moe_layers.empty()) throw Error("init_experts: source network must be dense");
  moce_cfg.validate();
  if (moce_cfg.embed_dim != dcfg.embed_dim || moce_cfg.encoder_depth != dcfg.encoder_depth ||
      moce_cfg.decoder_dim != dcfg.decoder_dim || moce_cfg.decoder_depth != dcfg.decoder_depth ||
      moce_cfg.image_size != dcfg.image_size || moce_cfg.patch_size != dcfg.patch_size ||
      moce_cfg.channels != dcfg.channels || moce_cfg.heads != dcfg.heads) {
    throw Error("init_experts: expert-bank config is not shape-compatible with the dense source");
  }

  // Fresh seeded init supplies gate weights; everything else is overwritten
  // from the dense source below.
  MaeNetwork net = MaeNetwork::init(moce_cfg, seed);
  Rng base(seed);
  for (auto& [name, tensor] : net.mutable_params()) {
    std::size_t epos = name.find(".mlp.expert");
    if (epos == std::string::npos) {
      if (name.find(".gate.wg") != std::string::npos) continue;  // freshly seeded
      tensor = dense.param(name);
      continue;
    }
    // "encoder.blockI.mlp.expertE.wX" -> dense "encoder.blockI.mlp.wX"
    std::size_t tail = name.find('.', epos + std::strlen(".mlp.expert"));
    std::string dense_name = name.substr(0, epos) + ".mlp" + name.substr(tail);
    const Tensor& src = dense.param(dense_name);
    double std_dev = noise_std;
    if (std_dev < 0.0) {
      double mean = std::accumulate(src.data.begin(), src.data.end(), 0.0) /
                    static_cast<double>(src.numel());
      double var = 0.0;
      for (double x : src.data) var += (x - mean) * (x - mean);
      std_dev = 0.01 * std::sqrt(var / static_cast<double>(src.numel()));
    }
    Rng rng = base.fork(name);
    tensor = src;
    if (std_dev > 0.0) {
      for (double& x : tensor.data) x += rng.normal(0.0, std_dev);
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Shared training loop.

namespace {

struct ImageNodes {
  nn::Value mae;
  nn::Value distill;
  bool has_distill = false;
  std::vector<nn::Value> probs;   // per expert-bank layer
  std::vector<nn::Value> logits;  // per expert-bank layer
  int gate_rows = 0;
};

struct ShardRun {
  std::unique_ptr<nn::Graph> graph;
  std::unique_ptr<NetBinder> binder;
  std::unique_ptr<NetBinder> frozen_binder;  // distillation dense path
  std::vector<ImageNodes> images;
};

struct LoopSetup {
  RoutingMode mode = RoutingMode::kDense;
  const cluster::ClusterModel* clusters = nullptr;
  bool aux_on = false;
  bool distill_on = false;
};

void run_sharded(ThreadPool* pool, int count, const std::function<void(int)>& fn) {
  if (pool != nullptr) {
    pool->run_indexed(count, fn);
  } else {
    for (int i = 0; i < count; ++i) fn(i);
  }
}

TrainResult run_training(MaeNetwork net, const TrainConfig& cfg, const io::Dataset& data,
                         const LoopSetup& setup, ThreadPool* pool) {
  const ModelConfig& mc = net.config();
  const int n = data.count();
  if (n == 0) throw Error("training: empty dataset");
  if (data.height != mc.image_size || data.width != mc.image_size ||
      data.channels != mc.channels) {
    throw Error("training: dataset geometry " + std::to_string(data.height) + "x" +
                std::to_string(data.width) + "x" + std::to_string(data.channels) +
                " does not match the model config");
  }
  if (setup.mode == RoutingMode::kClusterGate) {
    if (setup.clusters == nullptr) throw Error("training: cluster-gate mode needs a cluster model");
    if (static_cast<int>(setup.clusters->assignments.size()) != n) {
      throw Error("training: cluster assignments cover " +
                  std::to_string(setup.clusters->assignments.size()) + " images, dataset has " +
                  std::to_string(n));
    }
  }

  const int batch = std::min(cfg.batch_size, n);
  const int steps_per_epoch = n / batch;
  if (steps_per_epoch == 0) throw Error("training: batch size exceeds dataset");
  const long long total_steps = static_cast<long long>(cfg.epochs) * steps_per_epoch;
  const double peak_lr = cfg.base_lr * cfg.resolved_lr_multiplier();
  const int n_shards = std::max(1, std::min(cfg.shards, batch));
  const std::size_t n_moe = setup.mode == RoutingMode::kDense ? 0 : mc.moe_layers.size();

  // Patchify once; images are revisited every epoch.
  std::vector<Tensor> tokens;
  tokens.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) tokens.push_back(model::patchify(data.image(i), mc.patch_size));

  Rng data_rng = Rng(cfg.seed).fork("data-order");
  Rng mask_rng = Rng(cfg.seed).fork("mask-seeds");
  Rng noise_rng = Rng(cfg.seed).fork("gate-noise");

  AdamW opt(cfg.beta1, cfg.beta2, cfg.weight_decay);
  TrainResult result{std::move(net), {}};
  MaeNetwork& model_net = result.network;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    data_rng.shuffle(order);
    for (int bstep = 0; bstep < steps_per_epoch; ++bstep, ++step) {
      const int* batch_idx = order.data() + static_cast<std::size_t>(bstep) * batch;

      // Serial phase: everything consuming an RNG stream runs in batch order.
      std::vector<MaskSpec> masks(static_cast<std::size_t>(batch));
      std::vector<GateNoise> noises(static_cast<std::size_t>(batch));
      for (int i = 0; i < batch; ++i) {
        masks[static_cast<std::size_t>(i)] =
            model::random_mask(mc.tokens(), mc.mask_ratio, mask_rng.next_u64());
        if (n_moe > 0) {
          noises[static_cast<std::size_t>(i)] = model::draw_gate_noise(
              mc, setup.mode,
              static_cast<int>(masks[static_cast<std::size_t>(i)].visible.size()), noise_rng);
        }
      }

      // Forward, shard-parallel.
      std::vector<ShardRun> shards(static_cast<std::size_t>(n_shards));
      auto shard_range = [&](int s) {
        int lo = static_cast<int>(static_cast<long long>(s) * batch / n_shards);
        int hi = static_cast<int>(static_cast<long long>(s + 1) * batch / n_shards);
        return std::pair<int, int>(lo, hi);
      };
      run_sharded(pool, n_shards, [&](int s) {
        ShardRun& shard = shards[static_cast<std::size_t>(s)];
        shard.graph = std::make_unique<nn::Graph>(cfg.seed);
        shard.binder = std::make_unique<NetBinder>(model_net, *shard.graph, /*trainable=*/true);
        if (setup.distill_on) {
          shard.frozen_binder =
              std::make_unique<NetBinder>(model_net, *shard.graph, /*trainable=*/false);
        }
        auto [lo, hi] = shard_range(s);
        for (int i = lo; i < hi; ++i) {
          const int img = batch_idx[i];
          const MaskSpec& mask = masks[static_cast<std::size_t>(i)];
          ForwardOptions opt;
          opt.mode = setup.mode;
          if (setup.mode == RoutingMode::kClusterGate) {
            opt.cluster_id = setup.clusters->assignments[static_cast<std::size_t>(img)];
            opt.centroids = &setup.clusters->centroids;
          }
          if (n_moe > 0) opt.noise = &noises[static_cast<std::size_t>(i)];
          ForwardResult fwd = shard.binder->forward(tokens[static_cast<std::size_t>(img)], mask, opt);

          ImageNodes nodes;
          nodes.mae = model::mae_loss(fwd.pred, tokens[static_cast<std::size_t>(img)], mask);
          for (const auto& routing : fwd.routing) {
            nodes.probs.push_back(routing.probs);
            nodes.logits.push_back(routing.logits);
            nodes.gate_rows = shard.graph->value(routing.probs).rows();
          }
          if (setup.distill_on) {
            ForwardOptions dopt;
            dopt.mode = RoutingMode::kExpertAverage;
            dopt.with_decoder = false;
            ForwardResult dense_fwd =
                shard.frozen_binder->forward(tokens[static_cast<std::size_t>(img)], mask, dopt);
            nodes.distill =
                model::distill_loss(fwd.pooled, shard.graph->value(dense_fwd.pooled));
            nodes.has_distill = true;
          }
          shard.images.push_back(std::move(nodes));
        }
      });

      // Batch-level gate losses on the concatenated per-image rows; their
      // backward supplies cotangents for the shard graphs.
      double imb_value = 0.0, imp_value = 0.0, load_value = 0.0;
      std::vector<Tensor> prob_cots, logit_cots;  // per layer, batch rows x N
      if (setup.aux_on && n_moe > 0) {
        nn::Graph aux;
        std::vector<nn::Value> prob_leaves, logit_leaves;
        for (std::size_t l = 0; l < n_moe; ++l) {
          int rows_total = 0;
          for (const ShardRun& shard : shards)
            for (const ImageNodes& img : shard.images) rows_total += img.gate_rows;
          Tensor probs_l = Tensor::zeros({rows_total, mc.experts});
          Tensor logits_l = Tensor::zeros({rows_total, mc.experts});
          int row = 0;
          for (const ShardRun& shard : shards)
            for (const ImageNodes& img : shard.images) {
              const Tensor& p = shard.graph->value(img.probs[l]);
              const Tensor& lg = shard.graph->value(img.logits[l]);
              for (int r = 0; r < p.rows(); ++r)
                for (int c = 0; c < mc.experts; ++c) {
                  probs_l.at(row + r, c) = p.at(r, c);
                  logits_l.at(row + r, c) = lg.at(r, c);
                }
              row += p.rows();
            }
          prob_leaves.push_back(aux.param(std::move(probs_l)));
          logit_leaves.push_back(aux.param(std::move(logits_l)));
        }
        nn::Value total;
        bool first = true;
        auto add_term = [&](nn::Value term, double weight) {
          nn::Value weighted = nn::scale(term, weight);
          total = first ? weighted : nn::add(total, weighted);
          first = false;
        };
        for (std::size_t l = 0; l < n_moe; ++l) {
          if (mc.loss_weights.imbalance > 0.0) {
            nn::Value v = model::imbalance_loss(prob_leaves[l]);
            imb_value += aux.value(v).data[0];
            add_term(v, mc.loss_weights.imbalance);
          }
          if (mc.loss_weights.importance > 0.0) {
            nn::Value v = model::importance_loss(prob_leaves[l]);
            imp_value += aux.value(v).data[0];
            add_term(v, mc.loss_weights.importance);
          }
          if (mc.loss_weights.load > 0.0) {
            nn::Value v =
                model::load_loss(logit_leaves[l], mc.resolved_noise_scale(), mc.active_experts);
            load_value += aux.value(v).data[0];
            add_term(v, mc.loss_weights.load);
          }
        }
        if (!first) {
          aux.backward(total);
          for (std::size_t l = 0; l < n_moe; ++l) {
            prob_cots.push_back(aux.has_grad(prob_leaves[l]) ? aux.grad(prob_leaves[l])
                                                             : Tensor::zeros(aux.value(prob_leaves[l]).shape));
            logit_cots.push_back(aux.has_grad(logit_leaves[l])
                                     ? aux.grad(logit_leaves[l])
                                     : Tensor::zeros(aux.value(logit_leaves[l]).shape));
          }
        }
      }

      // Loss bookkeeping.
      double mae_mean = 0.0, distill_mean = 0.0;
      for (const ShardRun& shard : shards)
        for (const ImageNodes& img : shard.images) {
          mae_mean += shard.graph->value(img.mae).data[0];
          if (img.has_distill) distill_mean += shard.graph->value(img.distill).data[0];
        }
      mae_mean /= batch;
      distill_mean /= batch;
      double total_loss = mae_mean + mc.loss_weights.imbalance * imb_value +
                          mc.loss_weights.importance * imp_value +
                          mc.loss_weights.load * load_value +
                          mc.loss_weights.distill * distill_mean;
      if (!std::isfinite(total_loss)) {
        throw Error("training diverged: non-finite loss at step " + std::to_string(step));
      }

      // Backward, shard-parallel, with batch-level cotangents injected.
      run_sharded(pool, n_shards, [&](int s) {
        ShardRun& shard = shards[static_cast<std::size_t>(s)];
        std::vector<std::pair<nn::Value, Tensor>> seeds;
        // Row offset of this shard's first image within the batch matrices.
        int row0 = 0;
        for (int ps = 0; ps < s; ++ps)
          for (const ImageNodes& img : shards[static_cast<std::size_t>(ps)].images)
            row0 += img.gate_rows;
        int row = row0;
        for (const ImageNodes& img : shard.images) {
          seeds.emplace_back(img.mae, Tensor::scalar(1.0 / batch));
          if (img.has_distill && mc.loss_weights.distill > 0.0) {
            seeds.emplace_back(img.distill, Tensor::scalar(mc.loss_weights.distill / batch));
          }
          if (!prob_cots.empty()) {
            for (std::size_t l = 0; l < n_moe; ++l) {
              Tensor pc = Tensor::zeros({img.gate_rows, mc.experts});
              Tensor lc = Tensor::zeros({img.gate_rows, mc.experts});
              for (int r = 0; r < img.gate_rows; ++r)
                for (int c = 0; c < mc.experts; ++c) {
                  pc.at(r, c) = prob_cots[l].at(row + r, c);
                  lc.at(r, c) = logit_cots[l].at(row + r, c);
                }
              seeds.emplace_back(img.probs[l], std::move(pc));
              seeds.emplace_back(img.logits[l], std::move(lc));
            }
          }
          row += img.gate_rows;
        }
        shard.graph->backward_seeded(seeds);
      });

      // Merge gradients in shard order, then step.
      std::map<std::string, Tensor> grads;
      for (const ShardRun& shard : shards) {
        for (const auto& [name, leaf] : shard.binder->leaves()) {
          if (!shard.graph->has_grad(leaf)) continue;
          const Tensor& g = shard.graph->grad(leaf);
          auto [it, fresh] = grads.try_emplace(name, Tensor::zeros(g.shape));
          for (std::size_t i = 0; i < g.numel(); ++i) it->second.data[i] += g.data[i];
        }
      }
      double lr = cosine_warmup_lr(peak_lr, step, total_steps, cfg.warmup_frac);
      opt.step(model_net.mutable_params(), grads, lr);

      result.curve.push_back({step, lr, mae_mean, imb_value, imp_value, load_value, distill_mean,
                              total_loss});
    }
  }
  return result;
}

}  // namespace

TrainResult pretrain_dense(const ModelConfig& model_cfg, const TrainConfig& cfg,
                           const io::Dataset& data, ThreadPool* pool) {
  ModelConfig mc = model_cfg;
  if (!mc.moe_layers.empty()) {
    throw Error("pretrain_dense: model config must not declare expert banks");
  }
  MaeNetwork net = cfg.init_checkpoint.empty()
                       ? MaeNetwork::init(mc, cfg.seed)
                       : io::network_from_checkpoint(io::load_checkpoint(cfg.init_checkpoint));
  if (!cfg.init_checkpoint.empty() && !net.config().moe_layers.empty()) {
    throw Error("pretrain_dense: init checkpoint is an expert-bank network");
  }
  LoopSetup setup;
  setup.mode = RoutingMode::kDense;
  return run_training(std::move(net), cfg, data, setup, pool);
}

TrainResult pretrain_moce(const ModelConfig& model_cfg, const TrainConfig& cfg,
                          const io::Dataset& data, const cluster::ClusterModel* cluster_model,
                          GateMode mode, ThreadPool* pool) {
  ModelConfig mc = model_cfg;
  if (mc.moe_layers.empty()) {
    throw Error("pretrain_moce: model config declares no expert-bank layers");
  }
  if (mode == GateMode::kClusterGate && cluster_model == nullptr) {
    throw Error("pretrain_moce: cluster-gate mode requires a cluster model");
  }

  MaeNetwork net = [&] {
    if (cfg.init_checkpoint.empty()) return MaeNetwork::init(mc, cfg.seed);
    MaeNetwork loaded = io::network_from_checkpoint(io::load_checkpoint(cfg.init_checkpoint));
    if (loaded.config().moe_layers.empty()) {
      return init_experts(loaded, mc, cfg.expert_init_noise, cfg.seed);
    }
    return loaded;
  }();

  LoopSetup setup;
  setup.mode = mode == GateMode::kClusterGate ? RoutingMode::kClusterGate : RoutingMode::kTokenGate;
  setup.clusters = cluster_model;
  const model::LossWeights& w = net.config().loss_weights;
  setup.aux_on = w.imbalance > 0.0 || w.importance > 0.0 || w.load > 0.0;
  setup.distill_on = w.distill > 0.0;
  return run_training(std::move(net), cfg, data, setup, pool);
}

// ---------------------------------------------------------------------------
// Routing analysis.

RoutingTables routing_table(const MaeNetwork& net, const io::Dataset& data,
                            const cluster::ClusterModel* cluster_model, GateMode mode) {
  const ModelConfig& mc = net.config();
  if (mc.moe_layers.empty()) {
    // Degenerate dense case: one all-ones column.
    RoutingTables tables;
    tables.class_labels = data.distinct_classes();
    Tensor t = Tensor::full({static_cast<int>(tables.class_labels.size()), 1}, 1.0);
    tables.moe_blocks = {-1};
    tables.class_by_expert = {t};
    tables.class_expert_counts = {t};
    if (cluster_model != nullptr) {
      tables.cluster_by_expert = {Tensor::full({cluster_model->config.clusters, 1}, 1.0)};
    }
    return tables;
  }
  if (mode == GateMode::kClusterGate && cluster_model == nullptr) {
    throw Error("routing_table: cluster-gate mode requires a cluster model");
  }

  RoutingTables tables;
  tables.moe_blocks = mc.moe_layers;
  tables.class_labels = data.distinct_classes();
  std::map<int, int> class_row;
  for (std::size_t i = 0; i < tables.class_labels.size(); ++i) {
    class_row[tables.class_labels[i]] = static_cast<int>(i);
  }
  const int n_classes = static_cast<int>(tables.class_labels.size());
  const std::size_t n_moe = mc.moe_layers.size();
  const int m = cluster_model == nullptr ? 0 : cluster_model->config.clusters;

  std::vector<Tensor> class_counts(n_moe, Tensor::zeros({n_classes, mc.experts}));
  std::vector<Tensor> cluster_counts(n_moe, Tensor::zeros({std::max(m, 1), mc.experts}));

  if (mode == GateMode::kClusterGate) {
    if (static_cast<int>(cluster_model->assignments.size()) != data.count()) {
      throw Error("routing_table: cluster assignments do not cover the dataset");
    }
    // Decisions depend only on the cluster id; compute each once per layer.
    std::vector<std::vector<int>> expert_of_cluster(n_moe, std::vector<int>(m, 0));
    for (std::size_t l = 0; l < n_moe; ++l) {
      const Tensor& wg =
          net.param("encoder.block" + std::to_string(mc.moe_layers[l]) + ".mlp.gate.wg");
      for (int c = 0; c < m; ++c) {
        model::GateDecision d = model::moce_gate(c, cluster_model->centroids, wg,
                                                 /*k=*/1, 0.0, nullptr);
        expert_of_cluster[l][static_cast<std::size_t>(c)] = d.chosen[0];
        cluster_counts[l].at(c, d.chosen[0]) += 1.0;
      }
    }
    for (int i = 0; i < data.count(); ++i) {
      int cl = cluster_model->assignments[static_cast<std::size_t>(i)];
      int row = class_row.at(data.class_ids[static_cast<std::size_t>(i)]);
      for (std::size_t l = 0; l < n_moe; ++l) {
        class_counts[l].at(row, expert_of_cluster[l][static_cast<std::size_t>(cl)]) += 1.0;
      }
    }
  } else {
    MaskSpec all = MaskSpec::all_visible(mc.tokens());
    for (int i = 0; i < data.count(); ++i) {
      nn::Graph g;
      NetBinder binder(net, g, /*trainable=*/false);
      ForwardOptions opt;
      opt.mode = RoutingMode::kTokenGate;
      opt.with_decoder = false;
      ForwardResult fwd = binder.forward(model::patchify(data.image(i), mc.patch_size), all, opt);
      int row = class_row.at(data.class_ids[static_cast<std::size_t>(i)]);
      int cl = cluster_model == nullptr
                   ? -1
                   : cluster_model->assignments.size() == static_cast<std::size_t>(data.count())
                         ? cluster_model->assignments[static_cast<std::size_t>(i)]
                         : -1;
      for (std::size_t l = 0; l < fwd.routing.size(); ++l) {
        for (const model::GateDecision& d : fwd.routing[l].decisions) {
          class_counts[l].at(row, d.chosen[0]) += 1.0;
          if (cl >= 0) cluster_counts[l].at(cl, d.chosen[0]) += 1.0;
        }
      }
    }
  }

  auto row_normalize = [](const Tensor& counts) {
    Tensor out = counts;
    for (int r = 0; r < out.rows(); ++r) {
      double sum = 0.0;
      for (int c = 0; c < out.cols(); ++c) sum += out.at(r, c);
      if (sum > 0.0) {
        for (int c = 0; c < out.cols(); ++c) out.at(r, c) /= sum;
      }
    }
    return out;
  };
  for (std::size_t l = 0; l < n_moe; ++l) {
    tables.class_expert_counts.push_back(class_counts[l]);
    tables.class_by_expert.push_back(row_normalize(class_counts[l]));
    if (cluster_model != nullptr) {
      tables.cluster_by_expert.push_back(row_normalize(cluster_counts[l]));
    }
  }
  return tables;
}

double mutual_information_nats(const Tensor& joint_counts) {
  double total = 0.0;
  for (double v : joint_counts.data) {
    if (v < 0.0) throw Error("mutual_information: negative count");
    total += v;
  }
  if (total <= 0.0) throw Error("mutual_information: empty joint distribution");
  const int rows = joint_counts.rows(), cols = joint_counts.cols();
  std::vector<double> pr(static_cast<std::size_t>(rows), 0.0);
  std::vector<double> pc(static_cast<std::size_t>(cols), 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      pr[static_cast<std::size_t>(r)] += joint_counts.at(r, c) / total;
      pc[static_cast<std::size_t>(c)] += joint_counts.at(r, c) / total;
    }
  double mi = 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double p = joint_counts.at(r, c) / total;
      if (p > 0.0) mi += p * std::log(p / (pr[static_cast<std::size_t>(r)] * pc[static_cast<std::size_t>(c)]));
    }
  return mi;
}

}  // namespace moce::train
