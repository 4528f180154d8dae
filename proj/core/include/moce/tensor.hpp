// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace moce {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not conform for a primitive. Carries the primitive name
// and both shapes so callers can report the exact mismatch.
class ShapeError : public Error {
 public:
  ShapeError(std::string op, std::vector<int> lhs, std::vector<int> rhs);
  const std::string& op() const { return op_; }
  const std::vector<int>& lhs() const { return lhs_; }
  const std::vector<int>& rhs() const { return rhs_; }

 private:
  std::string op_;
  std::vector<int> lhs_, rhs_;
};

std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of doubles. Gradient buffers and graph identity live
// in Graph nodes, not here; a Tensor is just shape + storage.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);                // 1 x n
  static Tensor matrix(int rows, int cols, std::vector<double> values);
  static Tensor identity(int n);

  std::size_t numel() const { return data.size(); }
  int rows() const;
  int cols() const;
  bool is_matrix() const { return shape.size() == 2; }
  bool is_scalar() const { return numel() == 1; }

  double& at(int r, int c);
  double at(int r, int c) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace moce
