// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sbmtl::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode graph. A node owns its values; `parents`
// keeps upstream nodes alive for as long as anything downstream exists.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool grad_allocated = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::span<double> ensure_grad();
  bool is_leaf() const { return !backward; }
};

}  // namespace detail

// Dense row-major float64 array with an optional autodiff record.
//
// Copying a Tensor copies the handle, not the values: two copies observe the
// same data and gradient. Use clone() for a value copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;
  // Size of the last axis; rows() * cols() == numel().
  std::size_t cols() const;
  std::size_t rows() const;

  std::span<double> data();
  std::span<const double> data() const;
  double at(std::size_t flat) const { return data()[flat]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  // Gradient values; all zeros when nothing was ever accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Value copy with no graph history. requires_grad is preserved so a cloned
  // parameter is itself a trainable leaf.
  Tensor clone() const;
  // Same values, cut from the graph, never requiring grad.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Thread-local switch for graph recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds the result node of an operation. When recording is off or no parent
// requires grad, the result is a plain leaf and `backward` is dropped.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward);

// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
// interior gradients are recomputed each call.
void backward(const Tensor& loss);

// Number of distinct nodes reachable from `root`, leaves included.
std::size_t graph_size(const Tensor& root);

}  // namespace sbmtl::numerics
