// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/tensor.hpp"

#include <gtest/gtest.h>

#include "moce/graph.hpp"
#include "moce/rng.hpp"

namespace moce {
namespace {

TEST(Tensor, ShapeDataConsistency) {
  EXPECT_NO_THROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), Error);
  Tensor t = Tensor::zeros({4, 5});
  EXPECT_EQ(t.numel(), 20u);
  EXPECT_EQ(t.rows(), 4);
  EXPECT_EQ(t.cols(), 5);
}

TEST(Tensor, IdentityAndAt) {
  Tensor id = Tensor::identity(3);
  EXPECT_DOUBLE_EQ(id.at(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(id.at(0, 2), 0.0);
}

TEST(ShapeErrorTest, CarriesOpAndShapes) {
  try {
    throw ShapeError("matmul", {2, 3}, {4, 5});
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.op(), "matmul");
    EXPECT_EQ(e.lhs(), (std::vector<int>{2, 3}));
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x5]"), std::string::npos);
  }
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng base(7);
  Rng f1 = base.fork("mask");
  Rng f2 = base.fork("mask");
  Rng f3 = base.fork("noise");
  EXPECT_EQ(f1.next_u64(), f2.next_u64());
  EXPECT_NE(f1.next_u64(), f3.next_u64());
}

TEST(Rng, NormalMoments) {
  Rng rng(1);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(3);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto orig = v;
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, orig);
}

}  // namespace
}  // namespace moce
