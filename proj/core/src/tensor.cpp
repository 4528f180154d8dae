// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/tensor.hpp"

#include <cmath>
#include <sstream>

namespace moce {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

ShapeError::ShapeError(std::string op, std::vector<int> lhs, std::vector<int> rhs)
    : Error(op + ": shape mismatch " + shape_str(lhs) + " vs " + shape_str(rhs)),
      op_(std::move(op)),
      lhs_(std::move(lhs)),
      rhs_(std::move(rhs)) {}

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw Error("negative extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    throw Error("tensor: product(shape) " + shape_str(shape) + " != data length " +
                std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

int Tensor::rows() const {
  if (!is_matrix()) throw Error("rows(): tensor is not 2-d, shape " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (!is_matrix()) throw Error("cols(): tensor is not 2-d, shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }

double Tensor::at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace moce
