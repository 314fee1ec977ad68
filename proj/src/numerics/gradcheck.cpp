// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sbmtl/common/errors.hpp"

namespace sbmtl::numerics {

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw InputError("finite_diff_check: eps outside [1e-7, 1e-3]");
  for (Tensor& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::span<double> values = params[k].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = k;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace sbmtl::numerics
