// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/numerics/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "sbmtl/common/errors.hpp"

namespace sbmtl::numerics {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::span<double> detail::Node::ensure_grad() {
  if (!grad_allocated) {
    grad.assign(data.size(), 0.0);
    grad_allocated = true;
  }
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw StateError("Tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("Tensor::dim: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s.back();
}

std::size_t Tensor::rows() const {
  const std::size_t c = cols();
  return c == 0 ? 0 : numel() / c;
}

std::span<double> Tensor::data() {
  if (!node_) throw StateError("Tensor: use of undefined tensor");
  return node_->data;
}

std::span<const double> Tensor::data() const {
  if (!node_) throw StateError("Tensor: use of undefined tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("Tensor::item: tensor is not a scalar");
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw StateError("Tensor: use of undefined tensor");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && node_->grad_allocated; }

std::span<const double> Tensor::grad() const {
  if (!node_) throw StateError("Tensor: use of undefined tensor");
  return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw StateError("Tensor: use of undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (!node_) return;
  node_->grad.assign(node_->data.size(), 0.0);
  node_->grad_allocated = true;
}

Tensor Tensor::clone() const {
  return from(shape(), node_->data, node_->requires_grad);
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  if (node->data.size() != shape_numel(node->shape)) {
    throw DimensionError("make_result: value count does not match shape " +
                         shape_str(node->shape));
  }
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

namespace {

std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  // Iterative post-order DFS; graphs can be deep enough to matter.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw InputError("backward: loss must be a scalar tensor");
  }
  detail::Node* root = loss.node().get();
  if (!root->requires_grad) return;
  std::vector<detail::Node*> order = topo_order(root);
  for (detail::Node* n : order) {
    if (!n->is_leaf()) {
      n->grad.assign(n->data.size(), 0.0);
      n->grad_allocated = true;
    }
  }
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->is_leaf()) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward(*n);
  }
}

std::size_t graph_size(const Tensor& root) {
  if (!root.defined()) return 0;
  std::unordered_set<const detail::Node*> seen;
  std::vector<const detail::Node*> stack{root.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    const detail::Node* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  return seen.size();
}

}  // namespace sbmtl::numerics
