// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>

namespace sbmtl {

// Mean with a normal-approximation 95% half-width, 1.96 * s / sqrt(n) using
// the sample standard deviation. The half-width is absent for n < 2.
struct MeanCi {
  double mean = 0.0;
  std::optional<double> ci95;
  std::size_t n = 0;

  double lower() const { return mean - ci95.value_or(0.0); }
  double upper() const { return mean + ci95.value_or(0.0); }
};

MeanCi mean_ci(std::span<const double> values);

// True when both intervals exist and do not overlap.
bool ci_separated(const MeanCi& a, const MeanCi& b);

// Least-squares slope of values against their index.
double trend_slope(std::span<const double> values);

}  // namespace sbmtl
