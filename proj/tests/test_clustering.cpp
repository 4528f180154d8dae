// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/clustering.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "moce/fd_check.hpp"
#include "moce/rng.hpp"

namespace moce::cluster {
namespace {

Tensor random_scores(int m, int n, Rng& rng) {
  Tensor t = Tensor::zeros({m, n});
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Two well-separated unit-norm blobs on the sphere.
Tensor two_blob_features(int d, int per_blob, Rng& rng, std::vector<int>* labels) {
  Tensor f = Tensor::zeros({d, 2 * per_blob});
  std::vector<double> center_a(d), center_b(d);
  for (int i = 0; i < d; ++i) {
    center_a[i] = rng.normal();
    center_b[i] = -center_a[i];
  }
  for (int j = 0; j < 2 * per_blob; ++j) {
    const std::vector<double>& c = j < per_blob ? center_a : center_b;
    if (labels) labels->push_back(j < per_blob ? 0 : 1);
    for (int i = 0; i < d; ++i) f.at(i, j) = c[i] + 0.15 * rng.normal();
  }
  normalize_columns(f);
  return f;
}

// Lloyd 2-means over every distinct pair of points as initialization; the
// exhaustive small-instance oracle.
std::vector<int> exhaustive_two_means(const Tensor& f) {
  const int d = f.rows(), n = f.cols();
  double best_sse = 1e300;
  std::vector<int> best_assign(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      std::vector<double> c0(d), c1(d);
      for (int r = 0; r < d; ++r) {
        c0[r] = f.at(r, i);
        c1[r] = f.at(r, j);
      }
      std::vector<int> assign(n, 0);
      for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (int p = 0; p < n; ++p) {
          double d0 = 0, d1 = 0;
          for (int r = 0; r < d; ++r) {
            d0 += (f.at(r, p) - c0[r]) * (f.at(r, p) - c0[r]);
            d1 += (f.at(r, p) - c1[r]) * (f.at(r, p) - c1[r]);
          }
          int a = d1 < d0 ? 1 : 0;
          if (a != assign[p]) {
            assign[p] = a;
            changed = true;
          }
        }
        std::vector<double> s0(d, 0), s1(d, 0);
        int n0 = 0, n1 = 0;
        for (int p = 0; p < n; ++p) {
          for (int r = 0; r < d; ++r) (assign[p] == 0 ? s0[r] : s1[r]) += f.at(r, p);
          (assign[p] == 0 ? n0 : n1) += 1;
        }
        if (n0 == 0 || n1 == 0) break;
        for (int r = 0; r < d; ++r) {
          c0[r] = s0[r] / n0;
          c1[r] = s1[r] / n1;
        }
        if (!changed) break;
      }
      double sse = 0;
      for (int p = 0; p < n; ++p) {
        for (int r = 0; r < d; ++r) {
          double c = assign[p] == 0 ? c0[r] : c1[r];
          sse += (f.at(r, p) - c) * (f.at(r, p) - c);
        }
      }
      if (sse < best_sse) {
        best_sse = sse;
        best_assign = assign;
      }
    }
  }
  return best_assign;
}

double purity(const std::vector<int>& assign, const std::vector<int>& labels) {
  int agree = 0;
  for (std::size_t i = 0; i < assign.size(); ++i) agree += assign[i] == labels[i] ? 1 : 0;
  double p = static_cast<double>(agree) / assign.size();
  return std::max(p, 1.0 - p);  // label permutation invariant for 2 clusters
}

TEST(Sinkhorn, UniformScoresGiveUniformPlan) {
  Tensor a = Tensor::full({3, 5}, 0.42);
  Tensor q = sinkhorn_project(a, 0.05, 1);
  for (double v : q.data) EXPECT_NEAR(v, 1.0 / 15.0, 1e-12);
}

TEST(Sinkhorn, SingleClusterIsForced) {
  Tensor a = Tensor::matrix(1, 4, {0.3, -0.2, 0.9, 0.0});
  Tensor q = sinkhorn_project(a, 0.05, 1);
  for (double v : q.data) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(Sinkhorn, IdentityScoresConvergeToDiagonal) {
  Tensor a = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  Tensor q = sinkhorn_project(a, 0.05, 200);
  EXPECT_NEAR(q.at(0, 0), 0.5, 1e-3);
  EXPECT_NEAR(q.at(1, 1), 0.5, 1e-3);
  EXPECT_NEAR(q.at(0, 1), 0.0, 1e-3);
  EXPECT_NEAR(q.at(1, 0), 0.0, 1e-3);
}

TEST(Sinkhorn, MassAndMarginals) {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_scores(16, 64, rng);
    Tensor q100 = sinkhorn_project(a, 0.05, 100);
    double mass = 0.0;
    for (double v : q100.data) {
      EXPECT_GE(v, 0.0);
      mass += v;
    }
    EXPECT_NEAR(mass, 1.0, 1e-9);
    EXPECT_LT(max_marginal_deviation(q100), 1e-6);
    EXPECT_LT(max_marginal_deviation(sinkhorn_project(a, 0.05, 3)), 1e-2);
  }
}

TEST(Sinkhorn, DeviationMonotoneOverIterGrid) {
  Rng rng(33);
  const int grid[] = {1, 3, 10, 30, 100};
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_scores(16, 64, rng);
    double prev = 1e300;
    for (int iters : grid) {
      double dev = max_marginal_deviation(sinkhorn_project(a, 0.05, iters));
      EXPECT_LE(dev, prev + 1e-15) << "iters=" << iters;
      prev = dev;
    }
  }
}

TEST(Sinkhorn, ErrorsAreStructured) {
  Tensor a = Tensor::full({2, 2}, 1.0);
  EXPECT_THROW(sinkhorn_project(a, 0.0, 3), Error);
  EXPECT_THROW(sinkhorn_project(a, -1.0, 3), Error);
  EXPECT_THROW(sinkhorn_project(a, 0.05, 0), Error);
  // Overflow of scores / entropy_weight reports advice, no clamping.
  Tensor huge = Tensor::full({2, 2}, 1e308);
  try {
    sinkhorn_project(huge, 1e-3, 3);
    FAIL() << "expected overflow error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("entropy weight"), std::string::npos);
  }
}

TEST(Centroids, UnitColumnsAndLrZeroIsIdentity) {
  Rng rng(41);
  std::vector<int> labels;
  Tensor f = two_blob_features(6, 10, rng, &labels);
  Tensor c = Tensor::zeros({6, 3});
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 6; ++i) c.at(i, j) = f.at(i, j * 5);
  normalize_columns(c);

  Tensor scores = Tensor::zeros({3, 20});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 20; ++j) {
      double dot = 0;
      for (int r = 0; r < 6; ++r) dot += c.at(r, i) * f.at(r, j);
      scores.at(i, j) = dot;
    }
  Tensor q = sinkhorn_project(scores, 0.05, 3);

  Tensor frozen = update_centroids(q, f, c, /*lr=*/0.0, 0.9, 0.9);
  EXPECT_EQ(frozen.data, c.data);

  Tensor moved = update_centroids(q, f, c, 0.1, 0.9, 0.9);
  check_unit_columns(moved, 1e-9);
}

TEST(Centroids, CrossEntropyGradMatchesFiniteDifferences) {
  Rng rng(43);
  const int d = 6, n = 4, m = 3;
  Tensor f = Tensor::zeros({d, n});
  for (double& v : f.data) v = rng.normal();
  normalize_columns(f);
  Tensor c = Tensor::zeros({d, m});
  for (double& v : c.data) v = rng.normal();
  normalize_columns(c);
  Tensor scores = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double dot = 0;
      for (int r = 0; r < d; ++r) dot += c.at(r, i) * f.at(r, j);
      scores.at(i, j) = dot;
    }
  Tensor q = sinkhorn_project(scores, 0.05, 100);

  Tensor analytic = centroid_cross_entropy_grad(q, f, c);
  Tensor numeric = nn::fd_gradient(
      [&](const Tensor& probe) { return centroid_cross_entropy(q, f, probe); }, c, 1e-5);
  EXPECT_LT(nn::max_rel_error(analytic, numeric), 1e-4);
}

TEST(FitClusters, TwoBlobPurityBalanceDeterminism) {
  Rng rng(47);
  std::vector<int> labels;
  Tensor f = two_blob_features(8, 30, rng, &labels);

  // Oracle sanity: the exhaustive 2-means solution recovers the generator.
  std::vector<int> oracle = exhaustive_two_means(f);
  ASSERT_GE(purity(oracle, labels), 0.99);

  ClusterConfig cfg;
  cfg.clusters = 2;
  ClusterModel model = fit_clusters(f, cfg, 7);
  EXPECT_GE(purity(model.assignments, labels), 0.95);

  int size0 = static_cast<int>(std::count(model.assignments.begin(), model.assignments.end(), 0));
  double half = 30.0;
  EXPECT_LE(std::abs(size0 - half), 0.2 * half);

  ClusterModel again = fit_clusters(f, cfg, 7);
  EXPECT_EQ(model.assignments, again.assignments);
  EXPECT_EQ(model.centroids.data, again.centroids.data);
  check_unit_columns(model.centroids, 1e-6);
}

TEST(FitClusters, ObjectiveNonDecreasingAcrossEpochs) {
  Rng rng(53);
  std::vector<int> labels;
  Tensor f = two_blob_features(8, 32, rng, &labels);
  ClusterConfig cfg;
  cfg.clusters = 4;

  // Replay of fit_clusters' loop with the objective probed after each
  // Sinkhorn solve.
  Rng init = Rng(9).fork("centroid-init");
  std::vector<int> order(64);
  for (int i = 0; i < 64; ++i) order[i] = i;
  init.shuffle(order);
  Tensor c = Tensor::zeros({8, 4});
  for (int j = 0; j < 4; ++j)
    for (int r = 0; r < 8; ++r) c.at(r, j) = f.at(r, order[j]);
  normalize_columns(c);

  Tensor velocity;
  double prev = -1e300;
  for (int epoch = 0; epoch < 10; ++epoch) {
    Tensor scores = Tensor::zeros({4, 64});
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 64; ++j) {
        double dot = 0;
        for (int r = 0; r < 8; ++r) dot += c.at(r, i) * f.at(r, j);
        scores.at(i, j) = dot;
      }
    Tensor q = sinkhorn_project(scores, cfg.entropy_weight, cfg.sinkhorn_iters);
    double obj = transport_objective(q, scores, cfg.entropy_weight);
    EXPECT_GE(obj, prev - 1e-6) << "epoch " << epoch;
    prev = obj;
    c = update_centroids(q, f, c, cfg.lr, cfg.momentum, cfg.weight_decay, &velocity);
  }
}

TEST(Assign, MatchesCentroidsAndBreaksTiesLow) {
  Tensor c = Tensor::zeros({4, 2});
  c.at(0, 0) = 1.0;  // e0
  c.at(1, 1) = 1.0;  // e1
  Tensor f = Tensor::zeros({4, 3});
  f.at(0, 0) = 1.0;                      // equals centroid 0
  f.at(0, 1) = 1.0 / std::sqrt(5.0);     // c0 + 2 c1 direction
  f.at(1, 1) = 2.0 / std::sqrt(5.0);
  f.at(2, 2) = 1.0;                      // orthogonal to both: exact tie
  std::vector<int> ids = assign(c, f);
  EXPECT_EQ(ids[0], 0);
  EXPECT_EQ(ids[1], 1);
  EXPECT_EQ(ids[2], 0);  // tie toward the lower index

  // argmax invariance under positive rescaling of the score matrix.
  Tensor c_scaled = c;
  for (double& v : c_scaled.data) v *= 3.7;
  EXPECT_EQ(assign(c_scaled, f), ids);

  Tensor bad = Tensor::zeros({5, 1});
  EXPECT_THROW(assign(c, bad), ShapeError);
}

}  // namespace
}  // namespace moce::cluster
