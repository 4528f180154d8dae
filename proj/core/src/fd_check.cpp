// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/fd_check.hpp"

#include <algorithm>
#include <cmath>

namespace moce::nn {

Tensor fd_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw Error("fd_gradient: step h must be positive");
  Tensor grad = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double saved = probe.data[i];
    probe.data[i] = saved + h;
    double fp = f(probe);
    probe.data[i] = saved - h;
    double fm = f(probe);
    probe.data[i] = saved;
    grad.data[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_rel_error", a.shape, b.shape);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double denom = std::max({1.0, std::abs(a.data[i]), std::abs(b.data[i])});
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
  }
  return worst;
}

}  // namespace moce::nn
