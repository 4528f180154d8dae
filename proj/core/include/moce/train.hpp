// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moce/clustering.hpp"
#include "moce/dataset.hpp"
#include "moce/net.hpp"
#include "moce/parallel.hpp"

namespace moce::train {

struct TrainConfig {
  int epochs = 25;
  int batch_size = 64;
  double base_lr = 2e-3;
  // Scales base_lr. Negative means "resolve by rule": 0.1 when continuing
  // from an init checkpoint, 1.0 from scratch.
  double lr_multiplier = -1.0;
  double weight_decay = 0.05;
  double beta1 = 0.9, beta2 = 0.95;  // adaptive-moment decay rates
  double warmup_frac = 0.05;         // cosine schedule with linear warmup
  std::uint64_t seed = 1;
  std::string init_checkpoint;        // empty = train from scratch
  double expert_init_noise = -1.0;    // negative: 0.01 * per-tensor std rule
  // Deterministic batch sharding: the batch always splits into this many
  // contiguous shards and gradients merge in shard order, so results do not
  // depend on how many worker threads actually run.
  int shards = 8;

  double resolved_lr_multiplier() const {
    if (lr_multiplier >= 0.0) return lr_multiplier;
    return init_checkpoint.empty() ? 1.0 : 0.1;
  }
};

struct LossRow {
  long long step = 0;
  double lr = 0.0;
  double mae = 0.0;
  double imbalance = 0.0;
  double importance = 0.0;
  double load = 0.0;
  double distill = 0.0;
  double total = 0.0;
};

struct TrainResult {
  model::MaeNetwork network;
  std::vector<LossRow> curve;
};

// Decoupled-weight-decay adaptive moments with linear warmup into a cosine
// schedule. Decay touches weight matrices only (last name component starts
// with 'w'); biases, norms, positional tables and the mask token are exempt.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double weight_decay, double eps = 1e-8);
  void step(std::map<std::string, Tensor>& params,
            const std::map<std::string, Tensor>& grads, double lr);
  long long steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, weight_decay_, eps_;
  long long t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

double cosine_warmup_lr(double peak_lr, long long step, long long total_steps,
                        double warmup_frac);

enum class GateMode { kTokenGate, kClusterGate };

// MAE pre-training of a dense (no expert banks) network.
TrainResult pretrain_dense(const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                           const io::Dataset& data, ThreadPool* pool = nullptr);

// Expands a dense network into an expert-bank network: every expert starts
// from the dense MLP weights plus N(0, noise_std^2); gate weights are freshly
// seeded; all other parameters copy bit-exactly. noise_std < 0 applies the
// 0.01 * per-tensor-std default.
model::MaeNetwork init_experts(const model::MaeNetwork& dense, model::ModelConfig moce_cfg,
                               double noise_std, std::uint64_t seed);

// Pre-training under the combined objective: masked-reconstruction loss plus
// weighted imbalance/importance/load gate losses and the dense-to-expert
// distillation term. Gate noise on, cluster centroids frozen.
TrainResult pretrain_moce(const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                          const io::Dataset& data, const cluster::ClusterModel* cluster_model,
                          GateMode mode, ThreadPool* pool = nullptr);

// Row-stochastic routing proportions, one table per expert-bank layer.
struct RoutingTables {
  std::vector<int> moe_blocks;             // encoder block index per table
  std::vector<int> class_labels;           // row labels of class_by_expert
  std::vector<Tensor> class_by_expert;     // per layer: classes x N
  std::vector<Tensor> cluster_by_expert;   // per layer: m x N
  std::vector<Tensor> class_expert_counts; // per layer: raw joint counts
};

RoutingTables routing_table(const model::MaeNetwork& net, const io::Dataset& data,
                            const cluster::ClusterModel* cluster_model, GateMode mode);

// Mutual information (nats) of the joint distribution given by a
// nonnegative count matrix.
double mutual_information_nats(const Tensor& joint_counts);

}  // namespace moce::train
