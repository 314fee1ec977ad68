// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/numerics/optimizer.hpp"

#include <cmath>

#include "sbmtl/common/errors.hpp"

namespace sbmtl::numerics {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw InputError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw InputError("Optimizer: learning rate must be positive");
  if (options_.kind == OptimizerKind::kAdam) {
    for (const Tensor& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }
}

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Optimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw StateError("Optimizer::step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) apply(i, params_[i].grad());
}

void Optimizer::step(std::span<const std::span<const double>> grads) {
  if (grads.size() != params_.size()) {
    throw StateError("Optimizer::step: expected " + std::to_string(params_.size()) +
                     " gradients, got " + std::to_string(grads.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (grads[i].size() != params_[i].numel()) {
      throw DimensionError("Optimizer::step: gradient " + std::to_string(i) + " has wrong size");
    }
  }
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) apply(i, grads[i]);
}

void Optimizer::apply(std::size_t index, std::span<const double> grad) {
  std::span<double> p = params_[index].data();
  const double lr = options_.learning_rate;
  if (options_.kind == OptimizerKind::kSgd) {
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * grad[j];
    return;
  }
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  auto& m = m_[index];
  auto& v = v_[index];
  for (std::size_t j = 0; j < p.size(); ++j) {
    m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
    v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
    const double m_hat = m[j] / c1;
    const double v_hat = v[j] / c2;
    p[j] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
  }
}

}  // namespace sbmtl::numerics
