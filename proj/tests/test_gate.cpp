// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/gate.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "moce/fd_check.hpp"

namespace moce::model {
namespace {

TEST(TokenGate, FullSoftmaxWhenKEqualsN) {
  Tensor wg = Tensor::matrix(3, 2, {0.5, -1.0, 0.2, 0.3, -0.7, 0.9});
  Tensor x = Tensor::row({0.4, -1.2});
  GateDecision d = token_gate(x, wg, /*k=*/3, 0.0, nullptr);
  double sum = 0.0;
  for (double w : d.weights) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(d.chosen.size(), 3u);
}

TEST(TokenGate, Top1KeepsSoftmaxUnrenormalized) {
  // logits (2, 1, 0): softmax = (0.66524, 0.24473, 0.09003)
  Tensor wg = Tensor::matrix(3, 1, {2.0, 1.0, 0.0});
  Tensor x = Tensor::row({1.0});
  GateDecision d = token_gate(x, wg, 1, 0.0, nullptr);
  EXPECT_EQ(d.chosen, (std::vector<int>{0}));
  EXPECT_NEAR(d.weights[0], 0.66524, 1e-5);
  EXPECT_DOUBLE_EQ(d.weights[1], 0.0);
  EXPECT_DOUBLE_EQ(d.weights[2], 0.0);
}

TEST(TokenGate, ZeroGateTiesTowardExpertZero) {
  const int n = 4;
  Tensor wg = Tensor::zeros({n, 3});
  Tensor x = Tensor::row({0.3, -0.4, 1.0});
  GateDecision d = token_gate(x, wg, 1, 0.0, nullptr);
  EXPECT_EQ(d.chosen, (std::vector<int>{0}));
  EXPECT_DOUBLE_EQ(d.weights[0], 1.0 / n);
}

TEST(TokenGate, SparsityAndNoiseDeterminism) {
  Rng rng(77);
  Tensor wg = Tensor::zeros({8, 5});
  for (double& v : wg.data) v = rng.normal();
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = Tensor::zeros({1, 5});
    for (double& v : x.data) v = rng.normal();
    int k = 1 + static_cast<int>(rng.uniform_int(8));
    Rng noise(trial);
    GateDecision d = token_gate(x, wg, k, std::sqrt(1.0 / 8), &noise);
    int nonzero = 0;
    double sum = 0.0;
    for (double w : d.weights) {
      nonzero += w != 0.0 ? 1 : 0;
      sum += w;
    }
    EXPECT_LE(nonzero, k);
    EXPECT_GT(sum, 0.0);
    EXPECT_LE(sum, 1.0 + 1e-12);
    // Noise off: decision is a pure function of (x, wg).
    GateDecision d1 = token_gate(x, wg, k, 0.5, nullptr);
    GateDecision d2 = token_gate(x, wg, k, 0.5, nullptr);
    EXPECT_EQ(d1.chosen, d2.chosen);
    EXPECT_EQ(d1.weights, d2.weights);
  }
}

TEST(TokenGate, ArgmaxShiftInvariance) {
  Rng rng(78);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> logits(6);
    for (double& v : logits) v = rng.uniform(-3.0, 3.0);
    auto softmax = [](std::vector<double> l) {
      double mx = *std::max_element(l.begin(), l.end());
      double z = 0;
      for (double& v : l) {
        v = std::exp(v - mx);
        z += v;
      }
      for (double& v : l) v /= z;
      return l;
    };
    std::vector<double> shifted = logits;
    for (double& v : shifted) v += 11.3;
    EXPECT_EQ(topk_indices(softmax(logits), 1), topk_indices(softmax(shifted), 1));
  }
}

TEST(MoceGate, SharedDecisionPerCluster) {
  Rng rng(79);
  Tensor centroids = Tensor::zeros({5, 3});
  for (double& v : centroids.data) v = rng.normal();
  Tensor wg = Tensor::zeros({4, 5});
  for (double& v : wg.data) v = rng.normal();

  GateDecision a = moce_gate(1, centroids, wg, 1, 0.0, nullptr);
  GateDecision b = moce_gate(1, centroids, wg, 1, 0.0, nullptr);
  EXPECT_EQ(a.chosen, b.chosen);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.chosen.size(), 1u);
  double w = a.weights[static_cast<std::size_t>(a.chosen[0])];
  EXPECT_GT(w, 0.0);
  EXPECT_LE(w, 1.0);

  EXPECT_THROW(moce_gate(-1, centroids, wg, 1, 0.0, nullptr), Error);
  EXPECT_THROW(moce_gate(3, centroids, wg, 1, 0.0, nullptr), Error);
}

TEST(MoceGate, PermutingExpertsPermutesChoice) {
  Rng rng(80);
  Tensor centroids = Tensor::zeros({5, 2});
  for (double& v : centroids.data) v = rng.normal();
  Tensor wg = Tensor::zeros({4, 5});
  for (double& v : wg.data) v = rng.normal();
  // Swap expert rows 0 and 3.
  Tensor swapped = wg;
  for (int c = 0; c < 5; ++c) std::swap(swapped.at(0, c), swapped.at(3, c));
  auto permute = [](int e) { return e == 0 ? 3 : e == 3 ? 0 : e; };
  for (int cl = 0; cl < 2; ++cl) {
    GateDecision orig = moce_gate(cl, centroids, wg, 1, 0.0, nullptr);
    GateDecision perm = moce_gate(cl, centroids, swapped, 1, 0.0, nullptr);
    EXPECT_EQ(perm.chosen[0], permute(orig.chosen[0]));
  }
}

TEST(ImbalanceLoss, ClosedForms) {
  // Uniform row contributes 0.
  Tensor uniform = Tensor::full({1, 8}, 1.0 / 8);
  EXPECT_NEAR(imbalance_loss_value(uniform), 0.0, 1e-12);

  // One-hot row with N=8 contributes -(N-1) = -7.
  Tensor onehot = Tensor::zeros({1, 8});
  onehot.at(0, 2) = 1.0;
  EXPECT_NEAR(imbalance_loss_value(onehot), -7.0, 1e-9);

  // Additivity over a batch of B one-hot rows.
  const int b = 5;
  Tensor batch = Tensor::zeros({b, 8});
  for (int r = 0; r < b; ++r) batch.at(r, r % 8) = 1.0;
  EXPECT_NEAR(imbalance_loss_value(batch), -7.0 * b, 1e-9);

  Tensor zero_mean = Tensor::zeros({1, 4});
  EXPECT_THROW(imbalance_loss_value(zero_mean), Error);
}

TEST(ImportanceLoss, ClosedForms) {
  // Perfect balance: every expert receives the same total probability.
  Tensor balanced = Tensor::full({6, 8}, 1.0 / 8);
  EXPECT_NEAR(importance_loss_value(balanced), 0.0, 1e-12);

  // All mass on one expert: CV^2 = N - 1 = 7.
  Tensor collapsed = Tensor::zeros({6, 8});
  for (int r = 0; r < 6; ++r) collapsed.at(r, 0) = 1.0;
  EXPECT_NEAR(importance_loss_value(collapsed), 7.0, 1e-9);
}

TEST(LoadLoss, HardCountLimit) {
  Rng rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = Tensor::zeros({6, 5});
    for (double& v : logits.data) v = rng.uniform(-2.0, 2.0);
    const int k = 1 + trial % 2;
    // Hard top-k selection counts.
    std::vector<double> counts(5, 0.0);
    for (int r = 0; r < 6; ++r) {
      std::vector<double> row(5);
      for (int c = 0; c < 5; ++c) row[c] = logits.at(r, c);
      for (int e : topk_indices(row, k)) counts[static_cast<std::size_t>(e)] += 1.0;
    }
    double mean = 0.0;
    for (double c : counts) mean += c;
    mean /= 5;
    double var = 0.0;
    for (double c : counts) var += (c - mean) * (c - mean);
    var /= 5;
    double hard_cv2 = var / (mean * mean);
    EXPECT_NEAR(load_loss_value(logits, 1e-6, k), hard_cv2, 1e-6);
  }
  EXPECT_THROW(load_loss_value(Tensor::zeros({2, 3}), 0.0, 1), Error);
}

TEST(DistillLoss, ClosedFormsAndStopGradient) {
  Tensor feat = Tensor::row({0.2, -0.4, 0.6});
  {
    nn::Graph g;
    nn::Value e = g.param(feat);
    EXPECT_NEAR(g.value(distill_loss(e, feat)).data[0], 0.0, 1e-15);
  }
  {
    nn::Graph g;
    nn::Value e = g.param(feat);
    Tensor dense = feat;
    for (double& v : dense.data) v += 1.0;  // differ by all-ones
    EXPECT_NEAR(g.value(distill_loss(e, dense)).data[0], 1.0, 1e-12);
  }
  {
    // The dense branch enters as data: parameters that produced it get no
    // gradient even when they live in the same graph.
    nn::Graph g;
    nn::Value dense_param = g.param(feat);
    nn::Value dense_feat = nn::gelu(dense_param);
    nn::Value expert_param = g.param(feat);
    nn::Value loss = distill_loss(nn::gelu(expert_param), g.value(dense_feat));
    g.backward(loss);
    EXPECT_FALSE(g.has_grad(dense_param));
    EXPECT_TRUE(g.has_grad(expert_param));
  }
  {
    nn::Graph g;
    nn::Value e = g.param(Tensor::row({1.0, 2.0}));
    EXPECT_THROW(distill_loss(e, Tensor::row({1.0, 2.0, 3.0})), ShapeError);
  }
}

TEST(GateLosses, GradientsMatchFiniteDifferences) {
  Rng rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    // Imbalance on a random positive row-stochastic-ish matrix (fd perturbs
    // off the simplex; the loss is defined there too).
    Tensor gm = Tensor::zeros({4, 8});
    for (double& v : gm.data) v = rng.uniform(0.05, 1.0);
    {
      nn::Graph g;
      nn::Value leaf = g.param(gm);
      g.backward(imbalance_loss(leaf));
      Tensor numeric = nn::fd_gradient(
          [](const Tensor& probe) {
            nn::Graph g2;
            return g2.value(imbalance_loss(g2.param(probe))).data[0];
          },
          gm, 1e-5);
      EXPECT_LT(nn::max_rel_error(g.grad(leaf), numeric), 1e-4);
    }
    {
      nn::Graph g;
      nn::Value leaf = g.param(gm);
      g.backward(importance_loss(leaf));
      Tensor numeric = nn::fd_gradient(
          [](const Tensor& probe) {
            nn::Graph g2;
            return g2.value(importance_loss(g2.param(probe))).data[0];
          },
          gm, 1e-5);
      EXPECT_LT(nn::max_rel_error(g.grad(leaf), numeric), 1e-4);
    }
    {
      Tensor logits = Tensor::zeros({4, 6});
      for (double& v : logits.data) v = rng.uniform(-2.0, 2.0);
      nn::Graph g;
      nn::Value leaf = g.param(logits);
      g.backward(load_loss(leaf, 0.35, 1));
      Tensor numeric = nn::fd_gradient(
          [](const Tensor& probe) {
            nn::Graph g2;
            return g2.value(load_loss(g2.param(probe), 0.35, 1)).data[0];
          },
          logits, 1e-5);
      EXPECT_LT(nn::max_rel_error(g.grad(leaf), numeric), 1e-4);
    }
  }
}

}  // namespace
}  // namespace moce::model
