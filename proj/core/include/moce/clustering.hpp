// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "moce/tensor.hpp"

namespace moce::cluster {

// Balanced clustering of unit-norm image features: alternating Sinkhorn
// projection of the assignment posterior and SGD refinement of centroids.

struct ClusterConfig {
  int clusters = 8;            // m
  double entropy_weight = 0.05;
  int sinkhorn_iters = 3;
  int epochs = 10;
  double lr = 0.1;
  double momentum = 0.9;
  // 0.9 is unusually large for weight decay but is kept as the default on
  // purpose; the centroid columns are renormalized after every step, so decay
  // only reshapes the update direction.
  double weight_decay = 0.9;
};

struct ClusterModel {
  Tensor centroids;             // d x m, unit-norm columns
  std::vector<int> assignments;  // length n, values in [0, m)
  ClusterConfig config;
};

// Throws unless every column of a d x n matrix has L2 norm 1 within tol.
void check_unit_columns(const Tensor& mat, double tol = 1e-6);

// Normalizes each column to unit L2 norm in place. Columns already within
// 1e-12 of unit norm are left untouched so the operation is idempotent.
void normalize_columns(Tensor& mat);

// Entropic projection of exp(scores / entropy_weight) onto the balanced
// transport polytope {Q >= 0, Q 1_n = 1/m, Q^T 1_m = 1/n}. Runs `iters`
// alternating row/column rescalings and ends with a row rescaling, so row
// marginals are exact on return. Log-domain throughout; the only way to
// overflow is scores / entropy_weight itself, which is reported as an error
// suggesting a larger entropy weight.
Tensor sinkhorn_project(const Tensor& scores, double entropy_weight, int iters);

// max(|row sums - 1/m|, |col sums - 1/n|), the convergence metric.
double max_marginal_deviation(const Tensor& q);

// Tr(Q^T S) + entropy_weight * H(Q), the maximized objective.
double transport_objective(const Tensor& q, const Tensor& scores, double entropy_weight);

// Cross entropy -sum_ij Q(j,i) log softmax(F^T C)(i,j), the centroid loss.
double centroid_cross_entropy(const Tensor& q, const Tensor& features, const Tensor& centroids);
Tensor centroid_cross_entropy_grad(const Tensor& q, const Tensor& features,
                                   const Tensor& centroids);

// One full-batch SGD-with-momentum pass on the cross entropy, followed by
// column renormalization. `velocity` carries solver state across epochs;
// pass nullptr for a cold step.
Tensor update_centroids(const Tensor& q, const Tensor& features, const Tensor& centroids,
                        double lr, double momentum, double weight_decay,
                        Tensor* velocity = nullptr);

// Alternates sinkhorn_project and update_centroids for config.epochs epochs.
// Deterministic given the seed (centroid init samples m distinct feature
// columns).
ClusterModel fit_clusters(const Tensor& features, const ClusterConfig& config, std::uint64_t seed);

// Per-column argmax of features^T centroids; ties break toward the lower
// cluster index.
std::vector<int> assign(const Tensor& centroids, const Tensor& features);

}  // namespace moce::cluster
