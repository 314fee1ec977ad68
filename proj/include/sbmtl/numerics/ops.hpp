// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::numerics {

inline constexpr double kDefaultLeakySlope = 0.2;
inline constexpr double kBatchNormEps = 1e-5;

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched product: [g x m x k] . [g x k x n] -> [g x m x n]
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x[..., n] + bias[n], bias broadcast over every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// max(x, slope * x) elementwise; slope in (0, 1).
Tensor leaky_relu(const Tensor& x, double slope = kDefaultLeakySlope);

// Softmax over the last axis.
Tensor softmax_rows(const Tensor& x);

// Mean over the batch of -log softmax(logits)[label]. logits is [B x K].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Per-feature normalization of x[B x d] using the mean and biased variance of
// its first `stats_rows` rows (all rows when stats_rows == 0), then
// gamma * x_hat + beta. Gradients flow through the statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::size_t stats_rows = 0, double eps = kBatchNormEps);

// Concatenation of 2-D tensors along columns (equal row counts) or rows
// (equal column counts).
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Rows of x (viewed as [rows x cols]) in the given order; repeats allowed.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace sbmtl::numerics
