// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moce/graph.hpp"
#include "moce/rng.hpp"

namespace moce::cluster {

namespace {

double column_norm(const Tensor& mat, int col) {
  double s = 0.0;
  for (int r = 0; r < mat.rows(); ++r) s += mat.at(r, col) * mat.at(r, col);
  return std::sqrt(s);
}

}  // namespace

void check_unit_columns(const Tensor& mat, double tol) {
  for (int c = 0; c < mat.cols(); ++c) {
    double norm = column_norm(mat, c);
    if (std::abs(norm - 1.0) > tol) {
      throw Error("column " + std::to_string(c) + " has L2 norm " + std::to_string(norm) +
                  ", expected 1 within " + std::to_string(tol));
    }
  }
}

void normalize_columns(Tensor& mat) {
  for (int c = 0; c < mat.cols(); ++c) {
    double norm = column_norm(mat, c);
    if (norm < 1e-12) throw Error("normalize_columns: column " + std::to_string(c) + " is zero");
    if (std::abs(norm - 1.0) < 1e-12) continue;
    for (int r = 0; r < mat.rows(); ++r) mat.at(r, c) /= norm;
  }
}

Tensor sinkhorn_project(const Tensor& scores, double entropy_weight, int iters) {
  if (!scores.is_matrix()) throw Error("sinkhorn_project: scores must be 2-d");
  if (!(entropy_weight > 0.0)) throw Error("sinkhorn_project: entropy weight must be positive");
  if (iters < 1) throw Error("sinkhorn_project: iters must be >= 1");
  const int m = scores.rows(), n = scores.cols();

  Tensor logits = Tensor::zeros(scores.shape);
  for (std::size_t i = 0; i < scores.numel(); ++i) {
    double v = scores.data[i] / entropy_weight;
    if (!std::isfinite(v)) {
      throw Error("sinkhorn_project: scores / entropy_weight overflowed; use a larger "
                  "entropy weight");
    }
    logits.data[i] = v;
  }

  const double log_rm = std::log(1.0 / m);
  const double log_cn = std::log(1.0 / n);
  std::vector<double> u(static_cast<std::size_t>(m), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);

  auto row_rescale = [&] {
    for (int r = 0; r < m; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < n; ++c) mx = std::max(mx, logits.at(r, c) + v[c]);
      double sum = 0.0;
      for (int c = 0; c < n; ++c) sum += std::exp(logits.at(r, c) + v[c] - mx);
      u[r] = log_rm - (mx + std::log(sum));
    }
  };
  auto col_rescale = [&] {
    for (int c = 0; c < n; ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int r = 0; r < m; ++r) mx = std::max(mx, logits.at(r, c) + u[r]);
      double sum = 0.0;
      for (int r = 0; r < m; ++r) sum += std::exp(logits.at(r, c) + u[r] - mx);
      v[c] = log_cn - (mx + std::log(sum));
    }
  };

  for (int it = 0; it < iters; ++it) {
    row_rescale();
    col_rescale();
  }
  row_rescale();  // row marginals exact on return

  Tensor q = Tensor::zeros({m, n});
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) q.at(r, c) = std::exp(logits.at(r, c) + u[r] + v[c]);
  return q;
}

double max_marginal_deviation(const Tensor& q) {
  const int m = q.rows(), n = q.cols();
  double worst = 0.0;
  for (int r = 0; r < m; ++r) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += q.at(r, c);
    worst = std::max(worst, std::abs(s - 1.0 / m));
  }
  for (int c = 0; c < n; ++c) {
    double s = 0.0;
    for (int r = 0; r < m; ++r) s += q.at(r, c);
    worst = std::max(worst, std::abs(s - 1.0 / n));
  }
  return worst;
}

double transport_objective(const Tensor& q, const Tensor& scores, double entropy_weight) {
  if (!q.same_shape(scores)) throw ShapeError("transport_objective", q.shape, scores.shape);
  double dot = 0.0, entropy = 0.0;
  for (std::size_t i = 0; i < q.numel(); ++i) {
    dot += q.data[i] * scores.data[i];
    if (q.data[i] > 0.0) entropy -= q.data[i] * std::log(q.data[i]);
  }
  return dot + entropy_weight * entropy;
}

namespace {

// Builds the cross-entropy loss graph and returns {graph value, centroid leaf}.
struct CeGraph {
  nn::Graph graph;
  nn::Value centroids;
  nn::Value loss;
};

void build_ce(CeGraph& ce, const Tensor& q, const Tensor& features, const Tensor& centroids) {
  if (features.rows() != centroids.rows()) {
    throw ShapeError("centroid_cross_entropy (feature dim)", features.shape, centroids.shape);
  }
  if (q.rows() != centroids.cols() || q.cols() != features.cols()) {
    throw ShapeError("centroid_cross_entropy (posterior)", q.shape,
                     {centroids.cols(), features.cols()});
  }
  ce.centroids = ce.graph.param(centroids);
  nn::Value f = ce.graph.constant(features);
  nn::Value logits = nn::matmul(nn::transpose(f), ce.centroids);  // n x m
  nn::Value logp = nn::log_softmax_rows(logits);
  Tensor qt = Tensor::zeros({q.cols(), q.rows()});
  for (int r = 0; r < q.rows(); ++r)
    for (int c = 0; c < q.cols(); ++c) qt.at(c, r) = q.at(r, c);
  ce.loss = nn::scale(nn::sum_all(nn::mul(ce.graph.constant(qt), logp)), -1.0);
}

}  // namespace

double centroid_cross_entropy(const Tensor& q, const Tensor& features, const Tensor& centroids) {
  CeGraph ce;
  build_ce(ce, q, features, centroids);
  return ce.graph.value(ce.loss).data[0];
}

Tensor centroid_cross_entropy_grad(const Tensor& q, const Tensor& features,
                                   const Tensor& centroids) {
  CeGraph ce;
  build_ce(ce, q, features, centroids);
  ce.graph.backward(ce.loss);
  return ce.graph.grad(ce.centroids);
}

Tensor update_centroids(const Tensor& q, const Tensor& features, const Tensor& centroids,
                        double lr, double momentum, double weight_decay, Tensor* velocity) {
  CeGraph ce;
  build_ce(ce, q, features, centroids);
  double loss = ce.graph.value(ce.loss).data[0];
  if (!std::isfinite(loss)) throw Error("update_centroids: non-finite cross entropy " +
                                        std::to_string(loss));
  ce.graph.backward(ce.loss);
  const Tensor& grad = ce.graph.grad(ce.centroids);

  Tensor local_vel;
  Tensor* vel = velocity;
  if (vel == nullptr) {
    local_vel = Tensor::zeros(centroids.shape);
    vel = &local_vel;
  } else if (vel->data.empty()) {
    *vel = Tensor::zeros(centroids.shape);
  } else if (!vel->same_shape(centroids)) {
    throw ShapeError("update_centroids (velocity)", vel->shape, centroids.shape);
  }

  Tensor next = centroids;
  for (std::size_t i = 0; i < next.numel(); ++i) {
    double g = grad.data[i] + weight_decay * centroids.data[i];
    vel->data[i] = momentum * vel->data[i] - lr * g;
    next.data[i] += vel->data[i];
  }
  normalize_columns(next);
  return next;
}

ClusterModel fit_clusters(const Tensor& features, const ClusterConfig& config, std::uint64_t seed) {
  if (!features.is_matrix()) throw Error("fit_clusters: features must be d x n");
  const int n = features.cols();
  const int m = config.clusters;
  if (m < 2) throw Error("fit_clusters: need at least 2 clusters");
  if (n < m) throw Error("fit_clusters: need at least as many points as clusters");
  check_unit_columns(features, 1e-6);

  // Centroid init: m distinct feature columns by seeded sampling.
  Rng rng = Rng(seed).fork("centroid-init");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  Tensor centroids = Tensor::zeros({features.rows(), m});
  for (int j = 0; j < m; ++j)
    for (int r = 0; r < features.rows(); ++r) centroids.at(r, j) = features.at(r, order[j]);
  normalize_columns(centroids);

  // scores(i, j) = c_i . f_j
  auto scores_for = [&](const Tensor& c) {
    Tensor s = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double dot = 0.0;
        for (int r = 0; r < features.rows(); ++r) dot += c.at(r, i) * features.at(r, j);
        s.at(i, j) = dot;
      }
    return s;
  };

  Tensor velocity;
  Tensor q = sinkhorn_project(scores_for(centroids), config.entropy_weight, config.sinkhorn_iters);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0) {
      q = sinkhorn_project(scores_for(centroids), config.entropy_weight, config.sinkhorn_iters);
    }
    centroids = update_centroids(q, features, centroids, config.lr, config.momentum,
                                 config.weight_decay, &velocity);
  }

  ClusterModel model;
  model.centroids = std::move(centroids);
  model.config = config;
  model.assignments.resize(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    int best = 0;
    for (int r = 1; r < m; ++r) {
      if (q.at(r, c) > q.at(best, c)) best = r;  // ties keep the lower index
    }
    model.assignments[c] = best;
  }
  return model;
}

std::vector<int> assign(const Tensor& centroids, const Tensor& features) {
  if (centroids.rows() != features.rows()) {
    throw ShapeError("assign (feature dim)", centroids.shape, features.shape);
  }
  const int m = centroids.cols(), t = features.cols();
  std::vector<int> out(static_cast<std::size_t>(t));
  for (int j = 0; j < t; ++j) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int r = 0; r < centroids.rows(); ++r) s += features.at(r, j) * centroids.at(r, i);
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    out[j] = best;
  }
  return out;
}

}  // namespace moce::cluster
