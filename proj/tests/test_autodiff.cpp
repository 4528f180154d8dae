// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
//
// Gradient oracle suite for the tensor engine: every differentiable
// primitive's backward pass is checked against central finite differences,
// which never touch the tape.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "moce/fd_check.hpp"
#include "moce/graph.hpp"
#include "moce/rng.hpp"

namespace moce::nn {
namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Checks d loss / d x for loss = build(graph, x_leaf) against fd_gradient.
void check_grad(const std::function<Value(Graph&, Value)>& build, const Tensor& x,
                double tol = 1e-4, double h = 1e-5) {
  Graph g;
  Value leaf = g.param(x);
  Value loss = build(g, leaf);
  ASSERT_TRUE(g.value(loss).is_scalar());
  g.backward(loss);
  Tensor analytic = g.grad(leaf);

  Tensor numeric = fd_gradient(
      [&](const Tensor& probe) {
        Graph g2;
        Value leaf2 = g2.param(probe);
        return g2.value(build(g2, leaf2)).data[0];
      },
      x, h);
  EXPECT_LT(max_rel_error(analytic, numeric), tol);
}

// Random projection turns any output into a scalar so fd applies.
Value project(Graph& g, Value y, Rng& rng) {
  Tensor r = random_tensor(g.value(y).shape, rng, -1.0, 1.0);
  return sum_all(mul(y, g.constant(r)));
}

constexpr int kSweepInstances = 20;

TEST(Backward, SumGradIsOnes) {
  Graph g;
  Value x = g.param(Tensor::matrix(2, 3, {1, -2, 3, 0.5, 4, -1}));
  g.backward(sum_all(x));
  for (double v : g.grad(x).data) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Backward, SoftmaxDotOnehotMatchesFd) {
  Tensor x = Tensor::row({1.0, 2.0, 3.0});
  Tensor onehot = Tensor::row({0.0, 1.0, 0.0});
  Graph g;
  Value leaf = g.param(x);
  Value loss = sum_all(mul(softmax_rows(leaf), g.constant(onehot)));
  g.backward(loss);
  Tensor numeric = fd_gradient(
      [&](const Tensor& probe) {
        Graph g2;
        Value l2 = g2.param(probe);
        return g2.value(sum_all(mul(softmax_rows(l2), g2.constant(onehot)))).data[0];
      },
      x, 1e-5);
  EXPECT_LT(max_rel_error(g.grad(leaf), numeric), 1e-6);
}

TEST(Backward, LinearLeastSquaresClosedForm) {
  // loss = mean((W x - t)^2); dW = 2/len * (W x - t) x^T
  Rng rng(17);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor x = random_tensor({3, 1}, rng);
  Tensor t = random_tensor({4, 1}, rng);
  Graph g;
  Value wv = g.param(w);
  Value residual = sub(matmul(wv, g.constant(x)), g.constant(t));
  g.backward(mean_all(square(residual)));
  const Tensor& grad = g.grad(wv);
  for (int r = 0; r < 4; ++r) {
    double res = -t.data[r];
    for (int c = 0; c < 3; ++c) res += w.at(r, c) * x.data[c];
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(grad.at(r, c), 2.0 / 4.0 * res * x.data[c], 1e-12);
    }
  }
}

TEST(Backward, PrimitiveSweepMatchesFiniteDifferences) {
  Rng rng(99);
  for (int i = 0; i < kSweepInstances; ++i) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor m = random_tensor({4, 2}, rng);
    Tensor bias = random_tensor({1, 4}, rng);
    Tensor pos = random_tensor({3, 4}, rng, 0.1, 2.0);
    Tensor col = random_tensor({3, 1}, rng);

    check_grad([&](Graph& g, Value x) { return project(g, matmul(x, g.constant(m)), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, matmul(g.constant(a), transpose(x)), rng); },
               b);
    check_grad([&](Graph& g, Value x) { return project(g, transpose(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, add(x, g.constant(b)), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, sub(g.constant(b), x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, mul(x, g.constant(b)), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, div(g.constant(a), x), rng); }, pos);
    check_grad([&](Graph& g, Value x) { return project(g, div(x, g.constant(pos)), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, add_row_bias(x, g.constant(bias)), rng); },
               a);
    check_grad([&](Graph& g, Value x) { return project(g, add_row_bias(g.constant(a), x), rng); },
               bias);
    check_grad([&](Graph& g, Value x) { return project(g, scale(x, -1.7), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, square(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, log_elem(x), rng); }, pos);
    check_grad([&](Graph& g, Value x) { return project(g, gelu(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, normal_cdf(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, softmax_rows(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, log_softmax_rows(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, gather_rows(x, {2, 0, 0, 1}), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, scatter_rows(x, {4, 0, 2}, 6), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, slice_cols(x, 1, 2), rng); }, a);
    check_grad(
        [&](Graph& g, Value x) { return project(g, concat_cols({x, g.constant(b)}), rng); }, a);
    check_grad(
        [&](Graph& g, Value x) { return project(g, concat_rows({g.constant(b), x}), rng); }, a);
    check_grad(
        [&](Graph& g, Value x) {
          return project(g, select_entries(x, {0, 1, 2, 2}, {3, 0, 1, 1}), rng);
        },
        a);
    check_grad([&](Graph& g, Value x) { return project(g, row_sum(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, row_mean(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, row_var(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, col_sum(x), rng); }, a);
    check_grad([&](Graph& g, Value x) { return sum_all(x); }, a);
    check_grad([&](Graph& g, Value x) { return mean_all(x); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, broadcast_col(x, 5), rng); }, col);
    check_grad([&](Graph& g, Value x) { return project(g, kth_excluding_rows(x, 1), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, kth_excluding_rows(x, 2), rng); }, a);

    // scale_by: both operands.
    Tensor s = Tensor::scalar(rng.uniform(0.5, 1.5));
    check_grad([&](Graph& g, Value x) { return project(g, scale_by(x, g.constant(s)), rng); }, a);
    check_grad([&](Graph& g, Value x) { return project(g, scale_by(g.constant(a), x), rng); }, s);

    // layer_norm: all three operands.
    Tensor gamma = random_tensor({1, 4}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({1, 4}, rng);
    check_grad(
        [&](Graph& g, Value x) {
          return project(g, layer_norm_rows(x, g.constant(gamma), g.constant(beta)), rng);
        },
        a);
    check_grad(
        [&](Graph& g, Value x) {
          return project(g, layer_norm_rows(g.constant(a), x, g.constant(beta)), rng);
        },
        gamma);
    check_grad(
        [&](Graph& g, Value x) {
          return project(g, layer_norm_rows(g.constant(a), g.constant(gamma), x), rng);
        },
        beta);
  }
}

TEST(Forward, SoftmaxProperties) {
  Graph g;
  Value s = softmax_rows(g.constant(Tensor::row({0.0, 0.0})));
  EXPECT_DOUBLE_EQ(g.value(s).data[0], 0.5);
  EXPECT_DOUBLE_EQ(g.value(s).data[1], 0.5);

  Rng rng(5);
  Tensor x = random_tensor({6, 9}, rng, -30.0, 30.0);
  Graph g2;
  const Tensor& y = g2.value(softmax_rows(g2.constant(x)));
  for (int r = 0; r < y.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < y.cols(); ++c) {
      EXPECT_GE(y.at(r, c), 0.0);
      sum += y.at(r, c);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Forward, MatmulIdentity) {
  Rng rng(6);
  Tensor x = random_tensor({3, 7}, rng);
  Graph g;
  const Tensor& y = g.value(matmul(g.constant(Tensor::identity(3)), g.constant(x)));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.data[i], x.data[i]);
}

TEST(Forward, LayerNormOfConstantRowIsZero) {
  Graph g;
  Value x = g.constant(Tensor::row({3.7, 3.7, 3.7, 3.7}));
  Value gamma = g.constant(Tensor::full({1, 4}, 1.0));
  Value beta = g.constant(Tensor::zeros({1, 4}));
  const Tensor& y = g.value(layer_norm_rows(x, gamma, beta));
  for (double v : y.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Forward, ShapeMismatchNamesPrimitiveAndShapes) {
  Graph g;
  Value a = g.constant(Tensor::zeros({2, 3}));
  Value b = g.constant(Tensor::zeros({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.op(), "matmul");
    EXPECT_EQ(e.lhs(), (std::vector<int>{2, 3}));
    EXPECT_EQ(e.rhs(), (std::vector<int>{4, 5}));
  }
}

TEST(Backward, RepeatedBackwardWithoutResetIsError) {
  Graph g;
  Value x = g.param(Tensor::row({1.0, 2.0}));
  Value loss = sum_all(square(x));
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), Error);
  g.reset_grads();
  EXPECT_NO_THROW(g.backward(loss));
}

TEST(Backward, NonScalarLossIsError) {
  Graph g;
  Value x = g.param(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(g.backward(square(x)), Error);
}

TEST(Backward, DetachedTensorIsError) {
  Graph g1, g2;
  Value x = g1.param(Tensor::row({1.0}));
  Value y = g2.param(Tensor::row({1.0}));
  EXPECT_THROW(add(x, y), Error);
  EXPECT_THROW(g2.backward(x), Error);
}

TEST(Graph, ReplayIsBitIdentical) {
  Rng rng(11);
  Tensor a = random_tensor({4, 4}, rng);
  Graph g(123);
  Value x = g.param(a);
  Value loss = mean_all(square(gelu(matmul(x, transpose(x)))));
  double v1 = g.value(loss).data[0];
  g.replay();
  double v2 = g.value(loss).data[0];
  EXPECT_EQ(v1, v2);
  EXPECT_EQ(g.seed(), 123u);
}

TEST(Graph, DeterministicAcrossIdenticalBuilds) {
  Rng rng(12);
  Tensor a = random_tensor({5, 3}, rng);
  auto run = [&] {
    Graph g;
    Value x = g.param(a);
    Value loss = sum_all(softmax_rows(matmul(x, transpose(x))));
    g.backward(loss);
    return std::make_pair(g.value(loss).data[0], g.grad(x).data);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1, g2);
}

TEST(FdGradient, QuadraticAndSum) {
  Tensor x = Tensor::scalar(3.0);
  Tensor grad = fd_gradient(
      [](const Tensor& t) { return t.data[0] * t.data[0]; }, x, 1e-5);
  EXPECT_NEAR(grad.data[0], 6.0, 1e-8);

  Rng rng(13);
  Tensor y = random_tensor({3, 3}, rng);
  Tensor gsum = fd_gradient(
      [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v;
        return s;
      },
      y, 1e-5);
  for (double v : gsum.data) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FdGradient, RejectsNonPositiveStep) {
  EXPECT_THROW(fd_gradient([](const Tensor&) { return 0.0; }, Tensor::scalar(1.0), 0.0), Error);
}

TEST(Backward, SeededCotangentsMatchChainRule) {
  // Chaining d(loss)/d(mid) into a second graph must equal differentiating
  // the composition directly.
  Rng rng(21);
  Tensor a = random_tensor({2, 3}, rng);

  Graph full;
  Value xf = full.param(a);
  Value mid_f = gelu(xf);
  Value loss_f = mean_all(square(mid_f));
  full.backward(loss_f);

  Graph front;
  Value xg = front.param(a);
  Value mid_g = gelu(xg);
  Graph back;
  Value mid_leaf = back.param(front.value(mid_g));
  back.backward(mean_all(square(mid_leaf)));
  front.backward_seeded({{mid_g, back.grad(mid_leaf)}});

  EXPECT_LT(max_rel_error(full.grad(xf), front.grad(xg)), 1e-14);
}

}  // namespace
}  // namespace moce::nn
