// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace moce::nn {

namespace {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EigenRowMat>;
using MapConst = Eigen::Map<const EigenRowMat>;

MapConst as_mat(const Tensor& t) { return MapConst(t.data.data(), t.rows(), t.cols()); }
MapMat as_mat(Tensor& t) { return MapMat(t.data.data(), t.rows(), t.cols()); }

void require_matrix(const Tensor& t, const char* op) {
  if (!t.is_matrix()) throw Error(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape));
}

constexpr double kGeluAlpha = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

}  // namespace

Value apply(Graph& g, Op op, std::vector<Value> inputs, double d0, int i0, int i1,
            std::vector<int> idx) {
  Graph::Node n;
  n.op = op;
  n.d0 = d0;
  n.i0 = i0;
  n.i1 = i1;
  n.idx = std::move(idx);
  n.inputs.reserve(inputs.size());
  for (Value v : inputs) {
    n.inputs.push_back(g.check(v, "primitive input"));
    n.requires_grad = n.requires_grad || g.nodes_[n.inputs.back()].requires_grad;
  }
  g.eval(n);
  g.nodes_.push_back(std::move(n));
  return Value{&g, static_cast<int>(g.nodes_.size() - 1)};
}

Value Graph::param(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = true;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size() - 1)};
}

Value Graph::constant(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = false;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size() - 1)};
}

int Graph::check(Value v, const char* what) const {
  if (v.graph != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw Error(std::string(what) + ": detached tensor (value does not belong to this graph)");
  }
  return v.id;
}

const Tensor& Graph::value(Value v) const { return nodes_[check(v, "value")].value; }

bool Graph::has_grad(Value v) const { return !nodes_[check(v, "has_grad")].grad.data.empty(); }

const Tensor& Graph::grad(Value v) const {
  const Node& n = nodes_[check(v, "grad")];
  if (n.grad.data.empty()) throw Error("grad: no gradient present for this node; run backward first");
  return n.grad;
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

void Graph::reset_grads() {
  for (Node& n : nodes_) n.grad = Tensor();
  backward_done_ = false;
}

void Graph::backward(Value loss) {
  int id = check(loss, "backward");
  if (!nodes_[id].value.is_scalar()) {
    throw Error("backward: loss must be scalar, got shape " + shape_str(nodes_[id].value.shape));
  }
  if (backward_done_) throw Error("backward: gradients already accumulated; call reset_grads() first");
  grad_buffer(id).data[0] = 1.0;
  run_backward();
}

void Graph::backward_seeded(const std::vector<std::pair<Value, Tensor>>& seeds) {
  if (backward_done_) throw Error("backward: gradients already accumulated; call reset_grads() first");
  for (const auto& [v, cot] : seeds) {
    int id = check(v, "backward_seeded");
    if (cot.shape != nodes_[id].value.shape) {
      throw ShapeError("backward_seeded cotangent", nodes_[id].value.shape, cot.shape);
    }
    Tensor& gbuf = grad_buffer(id);
    for (std::size_t i = 0; i < cot.data.size(); ++i) gbuf.data[i] += cot.data[i];
  }
  run_backward();
}

void Graph::run_backward() {
  backward_done_ = true;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.op == Op::kLeaf || n.grad.data.empty() || !n.requires_grad) continue;
    backprop(n);
  }
}

void Graph::replay() {
  for (Node& n : nodes_) {
    if (n.op == Op::kLeaf) continue;
    eval(n);
  }
}

// ---------------------------------------------------------------------------
// Forward evaluation.

void Graph::eval(Node& n) {
  auto in = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  switch (n.op) {
    case Op::kLeaf:
      return;
    case Op::kMatmul: {
      const Tensor &a = in(0), &b = in(1);
      require_matrix(a, "matmul");
      require_matrix(b, "matmul");
      if (a.cols() != b.rows()) throw ShapeError("matmul", a.shape, b.shape);
      n.value = Tensor::zeros({a.rows(), b.cols()});
      as_mat(n.value).noalias() = as_mat(a) * as_mat(b);
      return;
    }
    case Op::kTranspose: {
      const Tensor& a = in(0);
      require_matrix(a, "transpose");
      n.value = Tensor::zeros({a.cols(), a.rows()});
      as_mat(n.value) = as_mat(a).transpose();
      return;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const Tensor &a = in(0), &b = in(1);
      const char* name = n.op == Op::kAdd   ? "add"
                         : n.op == Op::kSub ? "sub"
                         : n.op == Op::kMul ? "mul"
                                            : "div";
      if (!a.same_shape(b)) throw ShapeError(name, a.shape, b.shape);
      n.value = Tensor::zeros(a.shape);
      for (std::size_t i = 0; i < a.numel(); ++i) {
        double x = a.data[i], y = b.data[i];
        n.value.data[i] = n.op == Op::kAdd   ? x + y
                          : n.op == Op::kSub ? x - y
                          : n.op == Op::kMul ? x * y
                                             : x / y;
      }
      return;
    }
    case Op::kAddRowBias: {
      const Tensor &x = in(0), &b = in(1);
      require_matrix(x, "add_row_bias");
      if (!(b.is_matrix() && b.rows() == 1 && b.cols() == x.cols())) {
        throw ShapeError("add_row_bias", x.shape, b.shape);
      }
      n.value = x;
      for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) n.value.at(r, c) += b.data[c];
      return;
    }
    case Op::kScale: {
      n.value = in(0);
      for (double& v : n.value.data) v *= n.d0;
      return;
    }
    case Op::kScaleBy: {
      const Tensor &x = in(0), &s = in(1);
      if (!s.is_scalar()) throw ShapeError("scale_by (scalar operand)", x.shape, s.shape);
      n.value = x;
      for (double& v : n.value.data) v *= s.data[0];
      return;
    }
    case Op::kSquare: {
      n.value = in(0);
      for (double& v : n.value.data) v *= v;
      return;
    }
    case Op::kLog: {
      const Tensor& x = in(0);
      n.value = x;
      for (double& v : n.value.data) {
        if (v <= 0.0) throw Error("log: non-positive input " + std::to_string(v));
        v = std::log(v);
      }
      return;
    }
    case Op::kGelu: {
      const Tensor& x = in(0);
      n.value = x;
      for (double& v : n.value.data) {
        double u = kGeluAlpha * (v + kGeluCubic * v * v * v);
        v = 0.5 * v * (1.0 + std::tanh(u));
      }
      return;
    }
    case Op::kNormalCdf: {
      n.value = in(0);
      for (double& v : n.value.data) v = 0.5 * std::erfc(-v * kInvSqrt2);
      return;
    }
    case Op::kSoftmaxRows:
    case Op::kLogSoftmaxRows: {
      const Tensor& x = in(0);
      require_matrix(x, "softmax");
      n.value = x;
      for (int r = 0; r < x.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < x.cols(); ++c) mx = std::max(mx, x.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < x.cols(); ++c) sum += std::exp(x.at(r, c) - mx);
        if (n.op == Op::kSoftmaxRows) {
          for (int c = 0; c < x.cols(); ++c) n.value.at(r, c) = std::exp(x.at(r, c) - mx) / sum;
        } else {
          double lse = mx + std::log(sum);
          for (int c = 0; c < x.cols(); ++c) n.value.at(r, c) = x.at(r, c) - lse;
        }
      }
      return;
    }
    case Op::kLayerNormRows: {
      const Tensor &x = in(0), &gamma = in(1), &beta = in(2);
      require_matrix(x, "layer_norm");
      if (!(gamma.is_matrix() && gamma.rows() == 1 && gamma.cols() == x.cols()))
        throw ShapeError("layer_norm (gamma)", x.shape, gamma.shape);
      if (!beta.same_shape(gamma)) throw ShapeError("layer_norm (beta)", gamma.shape, beta.shape);
      n.value = x;
      const int d = x.cols();
      for (int r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += x.at(r, c);
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
        var /= d;
        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int c = 0; c < d; ++c) {
          n.value.at(r, c) = (x.at(r, c) - mean) * inv * gamma.data[c] + beta.data[c];
        }
      }
      return;
    }
    case Op::kGatherRows: {
      const Tensor& x = in(0);
      require_matrix(x, "gather_rows");
      n.value = Tensor::zeros({static_cast<int>(n.idx.size()), x.cols()});
      for (std::size_t r = 0; r < n.idx.size(); ++r) {
        if (n.idx[r] < 0 || n.idx[r] >= x.rows())
          throw Error("gather_rows: index " + std::to_string(n.idx[r]) + " out of range for " +
                      shape_str(x.shape));
        for (int c = 0; c < x.cols(); ++c) n.value.at(static_cast<int>(r), c) = x.at(n.idx[r], c);
      }
      return;
    }
    case Op::kScatterRows: {
      const Tensor& x = in(0);
      require_matrix(x, "scatter_rows");
      if (static_cast<int>(n.idx.size()) != x.rows())
        throw Error("scatter_rows: index count " + std::to_string(n.idx.size()) +
                    " != input rows " + std::to_string(x.rows()));
      n.value = Tensor::zeros({n.i0, x.cols()});
      std::vector<bool> used(static_cast<std::size_t>(n.i0), false);
      for (int r = 0; r < x.rows(); ++r) {
        int t = n.idx[r];
        if (t < 0 || t >= n.i0)
          throw Error("scatter_rows: index " + std::to_string(t) + " out of range");
        if (used[t]) throw Error("scatter_rows: duplicate target row " + std::to_string(t));
        used[t] = true;
        for (int c = 0; c < x.cols(); ++c) n.value.at(t, c) = x.at(r, c);
      }
      return;
    }
    case Op::kSliceCols: {
      const Tensor& x = in(0);
      require_matrix(x, "slice_cols");
      if (n.i0 < 0 || n.i1 <= 0 || n.i0 + n.i1 > x.cols())
        throw Error("slice_cols: range [" + std::to_string(n.i0) + ", " +
                    std::to_string(n.i0 + n.i1) + ") invalid for " + shape_str(x.shape));
      n.value = Tensor::zeros({x.rows(), n.i1});
      for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < n.i1; ++c) n.value.at(r, c) = x.at(r, n.i0 + c);
      return;
    }
    case Op::kConcatCols: {
      int rows = in(0).rows(), cols = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        require_matrix(in(static_cast<int>(i)), "concat_cols");
        if (in(static_cast<int>(i)).rows() != rows)
          throw ShapeError("concat_cols", in(0).shape, in(static_cast<int>(i)).shape);
        cols += in(static_cast<int>(i)).cols();
      }
      n.value = Tensor::zeros({rows, cols});
      int off = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& x = in(static_cast<int>(i));
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < x.cols(); ++c) n.value.at(r, off + c) = x.at(r, c);
        off += x.cols();
      }
      return;
    }
    case Op::kConcatRows: {
      int cols = in(0).cols(), rows = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        require_matrix(in(static_cast<int>(i)), "concat_rows");
        if (in(static_cast<int>(i)).cols() != cols)
          throw ShapeError("concat_rows", in(0).shape, in(static_cast<int>(i)).shape);
        rows += in(static_cast<int>(i)).rows();
      }
      n.value = Tensor::zeros({rows, cols});
      int off = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& x = in(static_cast<int>(i));
        for (int r = 0; r < x.rows(); ++r)
          for (int c = 0; c < cols; ++c) n.value.at(off + r, c) = x.at(r, c);
        off += x.rows();
      }
      return;
    }
    case Op::kSelectEntries: {
      const Tensor& x = in(0);
      require_matrix(x, "select_entries");
      int len = static_cast<int>(n.idx.size() / 2);
      n.value = Tensor::zeros({len, 1});
      for (int i = 0; i < len; ++i) {
        int r = n.idx[2 * i], c = n.idx[2 * i + 1];
        if (r < 0 || r >= x.rows() || c < 0 || c >= x.cols())
          throw Error("select_entries: (" + std::to_string(r) + ", " + std::to_string(c) +
                      ") out of range for " + shape_str(x.shape));
        n.value.data[i] = x.at(r, c);
      }
      return;
    }
    case Op::kRowSum:
    case Op::kRowMean:
    case Op::kRowVar: {
      const Tensor& x = in(0);
      require_matrix(x, "row reduction");
      n.value = Tensor::zeros({x.rows(), 1});
      for (int r = 0; r < x.rows(); ++r) {
        double sum = 0.0;
        for (int c = 0; c < x.cols(); ++c) sum += x.at(r, c);
        if (n.op == Op::kRowSum) {
          n.value.data[r] = sum;
        } else if (n.op == Op::kRowMean) {
          n.value.data[r] = sum / x.cols();
        } else {
          double mean = sum / x.cols(), var = 0.0;
          for (int c = 0; c < x.cols(); ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
          n.value.data[r] = var / x.cols();
        }
      }
      return;
    }
    case Op::kColSum: {
      const Tensor& x = in(0);
      require_matrix(x, "col_sum");
      n.value = Tensor::zeros({1, x.cols()});
      for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) n.value.data[c] += x.at(r, c);
      return;
    }
    case Op::kSumAll:
    case Op::kMeanAll: {
      const Tensor& x = in(0);
      double sum = std::accumulate(x.data.begin(), x.data.end(), 0.0);
      n.value = Tensor::scalar(n.op == Op::kSumAll ? sum : sum / static_cast<double>(x.numel()));
      return;
    }
    case Op::kBroadcastCol: {
      const Tensor& x = in(0);
      require_matrix(x, "broadcast_col");
      if (x.cols() != 1) throw ShapeError("broadcast_col (column operand)", x.shape, {x.rows(), 1});
      n.value = Tensor::zeros({x.rows(), n.i0});
      for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < n.i0; ++c) n.value.at(r, c) = x.data[r];
      return;
    }
    case Op::kKthExcludingRows: {
      const Tensor& x = in(0);
      require_matrix(x, "kth_excluding_rows");
      const int cols = x.cols(), k = n.i0;
      if (k < 1 || k > cols - 1)
        throw Error("kth_excluding_rows: k=" + std::to_string(k) + " invalid for " +
                    shape_str(x.shape));
      n.value = Tensor::zeros(x.shape);
      n.idx.assign(x.numel(), 0);
      std::vector<int> ord(static_cast<std::size_t>(cols));
      for (int r = 0; r < x.rows(); ++r) {
        std::iota(ord.begin(), ord.end(), 0);
        // Sort by value descending, index ascending on ties: deterministic.
        std::stable_sort(ord.begin(), ord.end(),
                         [&](int a, int b) { return x.at(r, a) > x.at(r, b); });
        std::vector<int> pos(static_cast<std::size_t>(cols));
        for (int p = 0; p < cols; ++p) pos[ord[p]] = p;
        for (int c = 0; c < cols; ++c) {
          int src = pos[c] < k ? ord[k] : ord[k - 1];
          n.idx[static_cast<std::size_t>(r) * cols + c] = src;
          n.value.at(r, c) = x.at(r, src);
        }
      }
      return;
    }
  }
  throw Error("eval: unknown op");
}

// ---------------------------------------------------------------------------
// Reverse rules.

void Graph::backprop(Node& n) {
  const Tensor& g = n.grad;
  auto in_val = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  auto wants = [&](int i) { return nodes_[n.inputs[i]].requires_grad; };
  auto gbuf = [&](int i) -> Tensor& { return grad_buffer(n.inputs[i]); };

  switch (n.op) {
    case Op::kLeaf:
      return;
    case Op::kMatmul: {
      const Tensor &a = in_val(0), &b = in_val(1);
      if (wants(0)) as_mat(gbuf(0)).noalias() += as_mat(g) * as_mat(b).transpose();
      if (wants(1)) as_mat(gbuf(1)).noalias() += as_mat(a).transpose() * as_mat(g);
      return;
    }
    case Op::kTranspose: {
      if (wants(0)) as_mat(gbuf(0)) += as_mat(g).transpose();
      return;
    }
    case Op::kAdd: {
      for (int i = 0; i < 2; ++i) {
        if (!wants(i)) continue;
        Tensor& gb = gbuf(i);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j];
      }
      return;
    }
    case Op::kSub: {
      if (wants(0)) {
        Tensor& gb = gbuf(0);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j];
      }
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] -= g.data[j];
      }
      return;
    }
    case Op::kMul: {
      const Tensor &a = in_val(0), &b = in_val(1);
      if (wants(0)) {
        Tensor& gb = gbuf(0);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j] * b.data[j];
      }
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j] * a.data[j];
      }
      return;
    }
    case Op::kDiv: {
      const Tensor &a = in_val(0), &b = in_val(1);
      if (wants(0)) {
        Tensor& gb = gbuf(0);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j] / b.data[j];
      }
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        for (std::size_t j = 0; j < g.numel(); ++j)
          gb.data[j] -= g.data[j] * a.data[j] / (b.data[j] * b.data[j]);
      }
      return;
    }
    case Op::kAddRowBias: {
      if (wants(0)) {
        Tensor& gb = gbuf(0);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j];
      }
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gb.data[c] += g.at(r, c);
      }
      return;
    }
    case Op::kScale: {
      if (wants(0)) {
        Tensor& gb = gbuf(0);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j] * n.d0;
      }
      return;
    }
    case Op::kScaleBy: {
      const Tensor &x = in_val(0), &s = in_val(1);
      if (wants(0)) {
        Tensor& gb = gbuf(0);
        for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j] * s.data[0];
      }
      if (wants(1)) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g.numel(); ++j) acc += g.data[j] * x.data[j];
        gbuf(1).data[0] += acc;
      }
      return;
    }
    case Op::kSquare: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gb = gbuf(0);
      for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += 2.0 * x.data[j] * g.data[j];
      return;
    }
    case Op::kLog: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gb = gbuf(0);
      for (std::size_t j = 0; j < g.numel(); ++j) gb.data[j] += g.data[j] / x.data[j];
      return;
    }
    case Op::kGelu: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gb = gbuf(0);
      for (std::size_t j = 0; j < g.numel(); ++j) {
        double v = x.data[j];
        double u = kGeluAlpha * (v + kGeluCubic * v * v * v);
        double t = std::tanh(u);
        double du = kGeluAlpha * (1.0 + 3.0 * kGeluCubic * v * v);
        gb.data[j] += g.data[j] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      }
      return;
    }
    case Op::kNormalCdf: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gb = gbuf(0);
      for (std::size_t j = 0; j < g.numel(); ++j) {
        double v = x.data[j];
        gb.data[j] += g.data[j] * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      }
      return;
    }
    case Op::kSoftmaxRows: {
      if (!wants(0)) return;
      const Tensor& y = n.value;
      Tensor& gb = gbuf(0);
      for (int r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (int c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
        for (int c = 0; c < y.cols(); ++c) gb.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
      }
      return;
    }
    case Op::kLogSoftmaxRows: {
      if (!wants(0)) return;
      const Tensor& y = n.value;  // log probabilities
      Tensor& gb = gbuf(0);
      for (int r = 0; r < y.rows(); ++r) {
        double gsum = 0.0;
        for (int c = 0; c < y.cols(); ++c) gsum += g.at(r, c);
        for (int c = 0; c < y.cols(); ++c) gb.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
      }
      return;
    }
    case Op::kLayerNormRows: {
      const Tensor &x = in_val(0), &gamma = in_val(1);
      const int d = x.cols();
      for (int r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += x.at(r, c);
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
        var /= d;
        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int c = 0; c < d; ++c) {
          double xhat = (x.at(r, c) - mean) * inv;
          double dxhat = g.at(r, c) * gamma.data[c];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * xhat;
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        for (int c = 0; c < d; ++c) {
          double xhat = (x.at(r, c) - mean) * inv;
          if (wants(0)) {
            double dxhat = g.at(r, c) * gamma.data[c];
            grad_buffer(n.inputs[0]).at(r, c) += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
          }
          if (wants(1)) grad_buffer(n.inputs[1]).data[c] += g.at(r, c) * xhat;
          if (wants(2)) grad_buffer(n.inputs[2]).data[c] += g.at(r, c);
        }
      }
      return;
    }
    case Op::kGatherRows: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (std::size_t r = 0; r < n.idx.size(); ++r)
        for (int c = 0; c < g.cols(); ++c) gb.at(n.idx[r], c) += g.at(static_cast<int>(r), c);
      return;
    }
    case Op::kScatterRows: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (std::size_t r = 0; r < n.idx.size(); ++r)
        for (int c = 0; c < g.cols(); ++c) gb.at(static_cast<int>(r), c) += g.at(n.idx[r], c);
      return;
    }
    case Op::kSliceCols: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) gb.at(r, n.i0 + c) += g.at(r, c);
      return;
    }
    case Op::kConcatCols: {
      int off = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& x = in_val(static_cast<int>(i));
        if (wants(static_cast<int>(i))) {
          Tensor& gb = gbuf(static_cast<int>(i));
          for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c) gb.at(r, c) += g.at(r, off + c);
        }
        off += x.cols();
      }
      return;
    }
    case Op::kConcatRows: {
      int off = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& x = in_val(static_cast<int>(i));
        if (wants(static_cast<int>(i))) {
          Tensor& gb = gbuf(static_cast<int>(i));
          for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c) gb.at(r, c) += g.at(off + r, c);
        }
        off += x.rows();
      }
      return;
    }
    case Op::kSelectEntries: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      int len = static_cast<int>(n.idx.size() / 2);
      for (int i = 0; i < len; ++i) gb.at(n.idx[2 * i], n.idx[2 * i + 1]) += g.data[i];
      return;
    }
    case Op::kRowSum: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (int r = 0; r < gb.rows(); ++r)
        for (int c = 0; c < gb.cols(); ++c) gb.at(r, c) += g.data[r];
      return;
    }
    case Op::kRowMean: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (int r = 0; r < gb.rows(); ++r)
        for (int c = 0; c < gb.cols(); ++c) gb.at(r, c) += g.data[r] / gb.cols();
      return;
    }
    case Op::kRowVar: {
      if (!wants(0)) return;
      const Tensor& x = in_val(0);
      Tensor& gb = gbuf(0);
      const int d = x.cols();
      for (int r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += x.at(r, c);
        mean /= d;
        for (int c = 0; c < d; ++c) gb.at(r, c) += g.data[r] * 2.0 * (x.at(r, c) - mean) / d;
      }
      return;
    }
    case Op::kColSum: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (int r = 0; r < gb.rows(); ++r)
        for (int c = 0; c < gb.cols(); ++c) gb.at(r, c) += g.data[c];
      return;
    }
    case Op::kSumAll: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (double& v : gb.data) v += g.data[0];
      return;
    }
    case Op::kMeanAll: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      double s = g.data[0] / static_cast<double>(gb.numel());
      for (double& v : gb.data) v += s;
      return;
    }
    case Op::kBroadcastCol: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      for (int r = 0; r < gb.rows(); ++r) {
        double acc = 0.0;
        for (int c = 0; c < g.cols(); ++c) acc += g.at(r, c);
        gb.data[r] += acc;
      }
      return;
    }
    case Op::kKthExcludingRows: {
      if (!wants(0)) return;
      Tensor& gb = gbuf(0);
      const int cols = g.cols();
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < cols; ++c)
          gb.at(r, n.idx[static_cast<std::size_t>(r) * cols + c]) += g.at(r, c);
      return;
    }
  }
  throw Error("backprop: unknown op");
}

// ---------------------------------------------------------------------------
// Free-function primitive surface.

namespace {
Graph& owner(Value v, const char* op) {
  if (v.graph == nullptr) throw Error(std::string(op) + ": detached tensor (null graph)");
  return *v.graph;
}
}  // namespace

Value matmul(Value a, Value b) { return apply(owner(a, "matmul"), Op::kMatmul, {a, b}, 0, 0, 0, {}); }
Value transpose(Value x) { return apply(owner(x, "transpose"), Op::kTranspose, {x}, 0, 0, 0, {}); }
Value add(Value a, Value b) { return apply(owner(a, "add"), Op::kAdd, {a, b}, 0, 0, 0, {}); }
Value sub(Value a, Value b) { return apply(owner(a, "sub"), Op::kSub, {a, b}, 0, 0, 0, {}); }
Value mul(Value a, Value b) { return apply(owner(a, "mul"), Op::kMul, {a, b}, 0, 0, 0, {}); }
Value div(Value a, Value b) { return apply(owner(a, "div"), Op::kDiv, {a, b}, 0, 0, 0, {}); }
Value add_row_bias(Value x, Value bias) {
  return apply(owner(x, "add_row_bias"), Op::kAddRowBias, {x, bias}, 0, 0, 0, {});
}
Value scale(Value x, double c) { return apply(owner(x, "scale"), Op::kScale, {x}, c, 0, 0, {}); }
Value scale_by(Value x, Value s) { return apply(owner(x, "scale_by"), Op::kScaleBy, {x, s}, 0, 0, 0, {}); }
Value square(Value x) { return apply(owner(x, "square"), Op::kSquare, {x}, 0, 0, 0, {}); }
Value log_elem(Value x) { return apply(owner(x, "log"), Op::kLog, {x}, 0, 0, 0, {}); }
Value gelu(Value x) { return apply(owner(x, "gelu"), Op::kGelu, {x}, 0, 0, 0, {}); }
Value normal_cdf(Value x) { return apply(owner(x, "normal_cdf"), Op::kNormalCdf, {x}, 0, 0, 0, {}); }
Value softmax_rows(Value x) { return apply(owner(x, "softmax"), Op::kSoftmaxRows, {x}, 0, 0, 0, {}); }
Value log_softmax_rows(Value x) {
  return apply(owner(x, "log_softmax"), Op::kLogSoftmaxRows, {x}, 0, 0, 0, {});
}
Value layer_norm_rows(Value x, Value gamma, Value beta) {
  return apply(owner(x, "layer_norm"), Op::kLayerNormRows, {x, gamma, beta}, 0, 0, 0, {});
}
Value gather_rows(Value x, std::vector<int> rows) {
  return apply(owner(x, "gather_rows"), Op::kGatherRows, {x}, 0, 0, 0, std::move(rows));
}
Value scatter_rows(Value x, std::vector<int> rows, int out_rows) {
  return apply(owner(x, "scatter_rows"), Op::kScatterRows, {x}, 0, out_rows, 0, std::move(rows));
}
Value slice_cols(Value x, int start, int len) {
  return apply(owner(x, "slice_cols"), Op::kSliceCols, {x}, 0, start, len, {});
}
Value concat_cols(const std::vector<Value>& xs) {
  if (xs.empty()) throw Error("concat_cols: no operands");
  return apply(owner(xs[0], "concat_cols"), Op::kConcatCols, xs, 0, 0, 0, {});
}
Value concat_rows(const std::vector<Value>& xs) {
  if (xs.empty()) throw Error("concat_rows: no operands");
  return apply(owner(xs[0], "concat_rows"), Op::kConcatRows, xs, 0, 0, 0, {});
}
Value select_entries(Value x, const std::vector<int>& rows, const std::vector<int>& cols) {
  if (rows.size() != cols.size()) throw Error("select_entries: rows/cols length mismatch");
  std::vector<int> idx(rows.size() * 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    idx[2 * i] = rows[i];
    idx[2 * i + 1] = cols[i];
  }
  return apply(owner(x, "select_entries"), Op::kSelectEntries, {x}, 0, 0, 0, std::move(idx));
}
Value row_sum(Value x) { return apply(owner(x, "row_sum"), Op::kRowSum, {x}, 0, 0, 0, {}); }
Value row_mean(Value x) { return apply(owner(x, "row_mean"), Op::kRowMean, {x}, 0, 0, 0, {}); }
Value row_var(Value x) { return apply(owner(x, "row_var"), Op::kRowVar, {x}, 0, 0, 0, {}); }
Value col_sum(Value x) { return apply(owner(x, "col_sum"), Op::kColSum, {x}, 0, 0, 0, {}); }
Value sum_all(Value x) { return apply(owner(x, "sum_all"), Op::kSumAll, {x}, 0, 0, 0, {}); }
Value mean_all(Value x) { return apply(owner(x, "mean_all"), Op::kMeanAll, {x}, 0, 0, 0, {}); }
Value broadcast_col(Value v, int cols) {
  return apply(owner(v, "broadcast_col"), Op::kBroadcastCol, {v}, 0, cols, 0, {});
}
Value kth_excluding_rows(Value x, int k) {
  return apply(owner(x, "kth_excluding_rows"), Op::kKthExcludingRows, {x}, 0, k, 0, {});
}

}  // namespace moce::nn
