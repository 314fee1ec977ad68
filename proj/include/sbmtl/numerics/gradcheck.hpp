// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::numerics {

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Location of the worst element, for diagnostics.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of `f` with central differences
// (f(p + eps) - f(p - eps)) / (2 eps), element by element over `params`.
// Relative error is |a - n| / max(|a|, |n|, 1e-8). `f` must rebuild its graph
// from the current parameter values on every call.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  double eps = 1e-6);

}  // namespace sbmtl::numerics
