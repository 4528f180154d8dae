// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "moce/graph.hpp"
#include "moce/rng.hpp"
#include "moce/tensor.hpp"

namespace moce::model {

// Sparse routing weights over N experts: the top-K softmax probabilities kept
// unchanged (not renormalized), everything else zero.
struct GateDecision {
  std::vector<double> weights;  // length N, at most K nonzeros
  std::vector<int> chosen;      // nonzero indices, by descending weight (ties: lower index)
};

// Indices of the k largest entries, descending; ties resolve toward the
// lower index. Shared by every routing path so selection is identical
// everywhere.
std::vector<int> topk_indices(std::span<const double> scores, int k);

// Softmax over scores with the top k kept. Scores already include any noise.
GateDecision decide(std::span<const double> probs, int k);

// Gate on a single token embedding x (1 x e): softmax(x W_g^T + noise), top-K.
// noise_rng == nullptr turns noise off; otherwise each logit receives
// N(0, noise_std^2).
GateDecision token_gate(const Tensor& x, const Tensor& gate_weight, int k, double noise_std,
                        Rng* noise_rng);

// Gate on a cluster embedding: identical math, input is centroid column
// `cluster_id`, so the decision is shared by every token of every image in
// that cluster.
GateDecision moce_gate(int cluster_id, const Tensor& centroids, const Tensor& gate_weight, int k,
                       double noise_std, Rng* noise_rng);

// ---------------------------------------------------------------------------
// Gate losses (graph builders; gradients come from the tape).

// -sum_rows (std(row) / mean(row))^2 over a rows x N matrix of softmax
// outputs. Population std. A one-hot row contributes -(N - 1).
nn::Value imbalance_loss(nn::Value gate_matrix);

// Squared coefficient of variation of per-expert summed gate probabilities.
nn::Value importance_loss(nn::Value gate_matrix);

// Squared coefficient of variation of per-expert expected selection counts
// under the Gaussian noise model: count_i = sum_rows Phi((logit_i - kth
// competitor) / noise_std). As noise_std -> 0 this tends to the CV^2 of hard
// top-k counts.
nn::Value load_loss(nn::Value gate_logits, double noise_std, int k);

// Mean squared difference between pooled features; the dense side enters as
// data, so gradient flows only into the expert branch.
nn::Value distill_loss(nn::Value expert_features, const Tensor& dense_features);

// Plain-tensor conveniences used by tests and reports.
double imbalance_loss_value(const Tensor& gate_matrix);
double importance_loss_value(const Tensor& gate_matrix);
double load_loss_value(const Tensor& gate_logits, double noise_std, int k);

}  // namespace moce::model
