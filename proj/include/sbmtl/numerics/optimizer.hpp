// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::numerics {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// SGD or Adam over a fixed, ordered parameter list. Adam moments are kept per
// parameter and are shape-congruent with it.
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerOptions options);

  // Updates every parameter from its own accumulated gradient. A parameter
  // that never had a gradient allocated raises StateError.
  void step();

  // Updates every parameter from an externally supplied gradient, in the
  // same order as the parameter list. This is how first-order meta-updates
  // move initializations with gradients measured on adapted copies.
  void step(std::span<const std::span<const double>> grads);

  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const OptimizerOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

 private:
  void apply(std::size_t index, std::span<const double> grad);

  std::vector<Tensor> params_;
  OptimizerOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace sbmtl::numerics
