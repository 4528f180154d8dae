// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moce::model {

std::vector<int> topk_indices(std::span<const double> scores, int k) {
  if (k < 1 || k > static_cast<int>(scores.size())) {
    throw Error("topk_indices: k=" + std::to_string(k) + " out of range for " +
                std::to_string(scores.size()) + " entries");
  }
  std::vector<int> ord(scores.size());
  std::iota(ord.begin(), ord.end(), 0);
  std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  ord.resize(static_cast<std::size_t>(k));
  return ord;
}

GateDecision decide(std::span<const double> probs, int k) {
  GateDecision d;
  d.chosen = topk_indices(probs, k);
  d.weights.assign(probs.size(), 0.0);
  for (int i : d.chosen) d.weights[static_cast<std::size_t>(i)] = probs[static_cast<std::size_t>(i)];
  return d;
}

namespace {

std::vector<double> softmax(std::vector<double> logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
  return logits;
}

GateDecision gate_on(const std::vector<double>& input, const Tensor& gate_weight, int k,
                     double noise_std, Rng* noise_rng) {
  const int n_experts = gate_weight.rows();
  if (static_cast<int>(input.size()) != gate_weight.cols()) {
    throw ShapeError("gate (input dim)", {1, static_cast<int>(input.size())}, gate_weight.shape);
  }
  std::vector<double> logits(static_cast<std::size_t>(n_experts), 0.0);
  for (int e = 0; e < n_experts; ++e) {
    double s = 0.0;
    for (int c = 0; c < gate_weight.cols(); ++c) s += gate_weight.at(e, c) * input[c];
    logits[e] = s;
  }
  if (noise_rng != nullptr && noise_std > 0.0) {
    for (double& v : logits) v += noise_rng->normal(0.0, noise_std);
  }
  return decide(softmax(std::move(logits)), k);
}

}  // namespace

GateDecision token_gate(const Tensor& x, const Tensor& gate_weight, int k, double noise_std,
                        Rng* noise_rng) {
  if (!x.is_matrix() || x.rows() != 1) {
    throw Error("token_gate: expected a 1 x e token embedding, got " + shape_str(x.shape));
  }
  return gate_on(x.data, gate_weight, k, noise_std, noise_rng);
}

GateDecision moce_gate(int cluster_id, const Tensor& centroids, const Tensor& gate_weight, int k,
                       double noise_std, Rng* noise_rng) {
  if (cluster_id < 0 || cluster_id >= centroids.cols()) {
    throw Error("moce_gate: cluster id " + std::to_string(cluster_id) + " out of range [0, " +
                std::to_string(centroids.cols()) + ")");
  }
  std::vector<double> embedding(static_cast<std::size_t>(centroids.rows()));
  for (int r = 0; r < centroids.rows(); ++r) embedding[r] = centroids.at(r, cluster_id);
  return gate_on(embedding, gate_weight, k, noise_std, noise_rng);
}

// ---------------------------------------------------------------------------

nn::Value imbalance_loss(nn::Value gate_matrix) {
  const Tensor& gm = gate_matrix.graph->value(gate_matrix);
  for (int r = 0; r < gm.rows(); ++r) {
    double mean = 0.0;
    for (int c = 0; c < gm.cols(); ++c) mean += gm.at(r, c);
    if (mean == 0.0) throw Error("imbalance_loss: row " + std::to_string(r) + " has zero mean");
  }
  nn::Value variance = nn::row_var(gate_matrix);
  nn::Value mean = nn::row_mean(gate_matrix);
  nn::Value cv2 = nn::div(variance, nn::square(mean));
  return nn::scale(nn::sum_all(cv2), -1.0);
}

nn::Value importance_loss(nn::Value gate_matrix) {
  nn::Value importance = nn::col_sum(gate_matrix);  // 1 x N
  return nn::div(nn::row_var(importance), nn::square(nn::row_mean(importance)));
}

nn::Value load_loss(nn::Value gate_logits, double noise_std, int k) {
  if (!(noise_std > 0.0)) throw Error("load_loss: noise_std must be positive");
  nn::Value competitor = nn::kth_excluding_rows(gate_logits, k);
  nn::Value margin = nn::scale(nn::sub(gate_logits, competitor), 1.0 / noise_std);
  nn::Value inclusion = nn::normal_cdf(margin);
  nn::Value load = nn::col_sum(inclusion);  // 1 x N expected counts
  return nn::div(nn::row_var(load), nn::square(nn::row_mean(load)));
}

nn::Value distill_loss(nn::Value expert_features, const Tensor& dense_features) {
  const Tensor& ef = expert_features.graph->value(expert_features);
  if (!ef.same_shape(dense_features)) {
    throw ShapeError("distill_loss", ef.shape, dense_features.shape);
  }
  nn::Value dense = expert_features.graph->constant(dense_features);
  return nn::mean_all(nn::square(nn::sub(expert_features, dense)));
}

double imbalance_loss_value(const Tensor& gate_matrix) {
  nn::Graph g;
  return g.value(imbalance_loss(g.constant(gate_matrix))).data[0];
}

double importance_loss_value(const Tensor& gate_matrix) {
  nn::Graph g;
  return g.value(importance_loss(g.constant(gate_matrix))).data[0];
}

double load_loss_value(const Tensor& gate_logits, double noise_std, int k) {
  nn::Graph g;
  return g.value(load_loss(g.constant(gate_logits), noise_std, k)).data[0];
}

}  // namespace moce::model
