// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sbmtl/numerics/checkpoint.hpp"
#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::encoder {

using numerics::NamedTensor;
using numerics::Tensor;

struct BlockSpec {
  std::size_t width = 64;
  bool batch_norm = true;
  bool residual = false;
  bool activation = true;
};

struct EncoderConfig {
  std::vector<std::size_t> input_shape{3, 16, 16};
  std::vector<BlockSpec> blocks;
  // k: trailing blocks fine-tuned in the inner loop. The first L - k stay frozen.
  std::size_t tunable_blocks = 1;
  double leaky_slope = 0.2;

  std::size_t input_dim() const;
  std::size_t block_count() const { return blocks.size(); }
  std::size_t feature_dim() const;
  std::size_t frozen_blocks() const { return block_count() - tunable_blocks; }
  // Throws InputError when k > L, widths are zero, or a residual block
  // changes width.
  void validate() const;

  // Four affine blocks of width 64 with batch norm and leaky ReLU, residual
  // on blocks 2-4, k = 1.
  static EncoderConfig desk_default();
};

// Affine map followed by optional batch norm, activation and skip path.
// Blocks with batch norm carry no pre-normalization bias (it would cancel).
struct Block {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], only without batch norm
  Tensor gamma;   // [out], only with batch norm
  Tensor beta;    // [out], only with batch norm

  std::vector<Tensor> parameters() const;
};

struct LinearHead {
  Tensor weight;  // [d x n]
  Tensor bias;    // [n]
};

class EncoderState {
 public:
  EncoderState() = default;
  EncoderState(EncoderConfig config, std::size_t head_outputs, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const LinearHead& head() const { return head_; }
  std::size_t head_outputs() const { return head_.bias.numel(); }

  // Replaces the classifier with a freshly initialized head of n outputs.
  void reset_head(std::size_t outputs, std::uint64_t seed);

  std::vector<Tensor> parameters() const;
  std::vector<Tensor> block_parameters(std::size_t first, std::size_t last) const;
  std::vector<NamedTensor> named_parameters(const std::string& prefix) const;

  // Runs blocks [first, last) on h. Batch statistics come from the first
  // stats_rows rows (all rows when 0).
  Tensor forward_blocks(const Tensor& h, std::size_t first, std::size_t last,
                        std::size_t stats_rows = 0) const;

 private:
  friend EncoderState clone_for_episode(const EncoderState& state);

  EncoderConfig config_;
  std::vector<Block> blocks_;
  LinearHead head_;
  std::uint64_t seed_ = 0;
};

// Features [B x d] for a batch x [B x input_dim]. Without a context the batch
// normalizes itself; with transductive_ctx the statistics are taken over x
// and the context rows together (the whole episode) and only x's rows are
// returned.
Tensor encode(const EncoderState& state, const Tensor& x,
              const std::optional<Tensor>& transductive_ctx = std::nullopt);

// Pre-softmax scores [B x n] from features.
Tensor classify(const EncoderState& state, const Tensor& features);

struct ParamSplit {
  std::vector<Tensor> frozen;   // blocks 1 .. L-k
  std::vector<Tensor> tunable;  // blocks L-k+1 .. L, then classifier
};

ParamSplit split_params(const EncoderState& state);

// Deep copy; the clone shares no storage with the original.
EncoderState clone_for_episode(const EncoderState& state);

}  // namespace sbmtl::encoder
