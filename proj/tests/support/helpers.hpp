// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "sbmtl/common/rng.hpp"
#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::testing {

inline numerics::Tensor random_tensor(numerics::Shape shape, Rng& rng, bool requires_grad = true,
                                      double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numerics::shape_numel(shape));
  for (double& x : v) x = uniform(rng, lo, hi);
  return numerics::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Reference product with three plain loops.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
  return c;
}

inline std::vector<double> values(const numerics::Tensor& t) {
  auto d = t.data();
  return {d.begin(), d.end()};
}

}  // namespace sbmtl::testing
