// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "moce/tensor.hpp"

namespace moce::nn {

class Graph;

// Handle to a node inside one Graph. Cheap to copy; using a handle with the
// wrong graph raises a detached-tensor error.
struct Value {
  Graph* graph = nullptr;
  int id = -1;
};

enum class Op : std::uint8_t {
  kLeaf,
  kMatmul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAddRowBias,
  kScale,
  kScaleBy,
  kSquare,
  kLog,
  kGelu,
  kNormalCdf,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kLayerNormRows,
  kGatherRows,
  kScatterRows,
  kSliceCols,
  kConcatCols,
  kConcatRows,
  kSelectEntries,
  kRowSum,
  kRowMean,
  kRowVar,
  kColSum,
  kSumAll,
  kMeanAll,
  kBroadcastCol,
  kKthExcludingRows,
};

// Record-and-replay tape with reverse-mode differentiation. Primitives
// evaluate eagerly and append themselves to the tape; backward() walks the
// tape in reverse. Single-writer: one graph is built and differentiated by
// one thread. Independent graphs may run concurrently.
class Graph {
 public:
  explicit Graph(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return nodes_.size(); }

  // Leaves. param() participates in gradients, constant() does not.
  Value param(Tensor t);
  Value constant(Tensor t);

  const Tensor& value(Value v) const;
  // Gradient of the last backward() w.r.t. v. Throws if none was produced.
  const Tensor& grad(Value v) const;
  bool has_grad(Value v) const;

  // Accumulates gradients for every leaf reachable from `loss` (a scalar).
  // Calling again without reset_grads() is an error.
  void backward(Value loss);
  // Same walk, but seeded with explicit cotangents on arbitrary nodes.
  // Used to chain batch-level losses into per-image graphs.
  void backward_seeded(const std::vector<std::pair<Value, Tensor>>& seeds);
  void reset_grads();

  // Recomputes every non-leaf value from the leaves, in recording order.
  // Replaying an unchanged tape is bit-identical by construction.
  void replay();

 private:
  friend Value apply(Graph& g, Op op, std::vector<Value> inputs, double d0, int i0, int i1,
                     std::vector<int> idx);

  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;  // empty until backward touches this node
    bool requires_grad = false;
    double d0 = 0.0;       // scalar attribute (scale factor, ...)
    int i0 = 0, i1 = 0;    // integer attributes (slice start/len, k, out rows)
    std::vector<int> idx;  // index attribute (gather/scatter/select/kth sources)
  };

  int check(Value v, const char* what) const;
  void eval(Node& n);
  void backprop(Node& n);
  Tensor& grad_buffer(int id);
  void run_backward();

  std::vector<Node> nodes_;
  std::uint64_t seed_ = 0;
  bool backward_done_ = false;
};

// Primitives. First argument's graph owns the result; mixing graphs throws.
Value matmul(Value a, Value b);
Value transpose(Value x);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
// X (t x d) plus bias row (1 x d), broadcast over rows. The only implicit
// broadcast in the engine; everything else requires explicit shapes.
Value add_row_bias(Value x, Value bias);
Value scale(Value x, double c);
// x scaled by a 1x1 node (differentiable in both).
Value scale_by(Value x, Value s);
Value square(Value x);
Value log_elem(Value x);
Value gelu(Value x);
Value normal_cdf(Value x);
Value softmax_rows(Value x);
Value log_softmax_rows(Value x);
// Row-wise layer normalization with affine terms; variance epsilon 1e-6.
Value layer_norm_rows(Value x, Value gamma, Value beta);
Value gather_rows(Value x, std::vector<int> rows);
// Rows of x placed at `rows` within a zero matrix of `out_rows` rows.
// Indices must be distinct.
Value scatter_rows(Value x, std::vector<int> rows, int out_rows);
Value slice_cols(Value x, int start, int len);
Value concat_cols(const std::vector<Value>& xs);
Value concat_rows(const std::vector<Value>& xs);
// Column vector of x(rows[i], cols[i]).
Value select_entries(Value x, const std::vector<int>& rows, const std::vector<int>& cols);
Value row_sum(Value x);
Value row_mean(Value x);
// Population variance per row (t x d -> t x 1).
Value row_var(Value x);
Value col_sum(Value x);
Value sum_all(Value x);
Value mean_all(Value x);
Value broadcast_col(Value v, int cols);
// theta(b, i) = k-th largest entry of row b excluding column i (k >= 1).
Value kth_excluding_rows(Value x, int k);

constexpr double kLayerNormEps = 1e-6;

}  // namespace moce::nn
