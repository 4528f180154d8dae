// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "moce/tensor.hpp"

namespace moce::nn {

// Central-difference gradient estimate, (f(x + h e_i) - f(x - h e_i)) / 2h
// per coordinate. Independent oracle for backward(): it only ever calls f,
// never the tape. f must be deterministic.
Tensor fd_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|), the relative error metric used by
// every gradient-oracle suite in the tests.
double max_rel_error(const Tensor& a, const Tensor& b);

}  // namespace moce::nn
