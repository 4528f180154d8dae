// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moce/clustering.hpp"
#include "moce/dataset.hpp"
#include "moce/net.hpp"
#include "moce/parallel.hpp"

namespace moce::deploy {

// Outcome of matching a downstream task to its closest cluster.
struct ExpertSelection {
  int chosen_cluster = -1;
  std::vector<long long> cluster_histogram;  // downstream images per cluster
  std::vector<int> moe_blocks;               // expert-bank layers, ascending
  std::vector<int> expert_per_layer;         // argmax expert at each layer
  std::vector<double> gate_weight_per_layer; // its (unrenormalized) gate weight
};

// One inference pass over the downstream set: features from the dense MAE,
// cluster assignment, histogram argmax (ties to the lower cluster id), then
// the noise-free K=1 gate decision of the chosen cluster at every
// expert-bank layer. Deterministic and invariant to dataset order.
ExpertSelection select_expert(const cluster::ClusterModel& clusters,
                              const model::MaeNetwork& dense_net,
                              const model::MaeNetwork& moce_net, const io::Dataset& downstream);

// Folds each chosen expert into a standard dense network: the gate weight
// multiplies the expert's output affine map (w2, b2), which reproduces
// w * E(x) exactly; every other parameter copies unchanged. Requires K = 1.
model::MaeNetwork extract_submodel(const model::MaeNetwork& moce_net,
                                   const ExpertSelection& selection);

struct FinetuneConfig {
  std::vector<double> lr_grid = {0.01, 0.03, 0.1};
  int steps = 200;
  int batch_size = 32;
  double momentum = 0.9;
  double train_fraction = 0.8;  // seeded split when the task has none
  std::uint64_t seed = 1;
};

struct ProbeResult {
  double best_accuracy = 0.0;
  double best_lr = 0.0;
  std::vector<double> accuracy_per_lr;
};

// Attaches a linear classification head on pooled encoder features and
// fine-tunes end to end (SGD with momentum) at every grid point; reports the
// best held-out accuracy. Deterministic per seed.
ProbeResult finetune_probe(const model::MaeNetwork& net, const io::Dataset& task,
                           const FinetuneConfig& cfg, ThreadPool* pool = nullptr);

// 10 log10(max^2 / MSE) in decibels; an exact-zero MSE reports the 99 dB cap
// so downstream CSVs never carry infinities.
double psnr(const Tensor& reconstruction, const Tensor& target, double max_value);
constexpr double kPsnrCapDb = 99.0;

// Masked-reconstruction quality of a checkpointed network over a dataset:
// per image, masks with a seeded spec, predicts, and scores PSNR over the
// masked tokens only. Returns the mean PSNR in dB.
double eval_psnr(const model::MaeNetwork& net, const io::Dataset& data, double mask_ratio,
                 std::uint64_t seed, model::RoutingMode mode,
                 const cluster::ClusterModel* clusters = nullptr,
                 ThreadPool* pool = nullptr);

}  // namespace moce::deploy
