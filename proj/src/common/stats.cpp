// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/common/stats.hpp"

#include <cmath>

namespace sbmtl {

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  out.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  return out;
}

bool ci_separated(const MeanCi& a, const MeanCi& b) {
  if (!a.ci95 || !b.ci95) return false;
  return a.lower() > b.upper() || b.lower() > a.upper();
}

double trend_slope(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += static_cast<double>(i);
    my += values[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - mx;
    sxy += dx * (values[i] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace sbmtl
