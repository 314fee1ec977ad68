// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/encoder/encoder.hpp"

#include <cmath>

#include "sbmtl/common/errors.hpp"
#include "sbmtl/common/rng.hpp"
#include "sbmtl/numerics/ops.hpp"

namespace sbmtl::encoder {

namespace nx = sbmtl::numerics;

namespace {

Tensor uniform_fan_in(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = uniform(rng, -bound, bound);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

LinearHead make_head(std::size_t d, std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4ead));
  return {uniform_fan_in(d, n, rng), Tensor::zeros({n}, true)};
}

Tensor copy_param(const Tensor& t) { return t.defined() ? t.clone() : Tensor(); }

}  // namespace

std::size_t EncoderConfig::input_dim() const { return nx::shape_numel(input_shape); }

std::size_t EncoderConfig::feature_dim() const {
  return blocks.empty() ? input_dim() : blocks.back().width;
}

void EncoderConfig::validate() const {
  if (input_shape.empty() || input_dim() == 0) throw InputError("encoder: empty input shape");
  if (blocks.empty()) throw InputError("encoder: at least one block is required");
  if (tunable_blocks > blocks.size()) {
    throw InputError("encoder: tunable block count " + std::to_string(tunable_blocks) +
                     " exceeds block count " + std::to_string(blocks.size()));
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw InputError("encoder: leaky slope outside (0, 1)");
  std::size_t in = input_dim();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].width == 0) throw InputError("encoder: block width must be positive");
    if (blocks[i].residual && blocks[i].width != in) {
      throw InputError("encoder: residual block " + std::to_string(i + 1) + " changes width");
    }
    in = blocks[i].width;
  }
}

EncoderConfig EncoderConfig::desk_default() {
  EncoderConfig c;
  c.blocks = {{64, true, false, true}, {64, true, true, true}, {64, true, true, true},
              {64, true, true, true}};
  c.tunable_blocks = 1;
  return c;
}

std::vector<Tensor> Block::parameters() const {
  std::vector<Tensor> out{weight};
  if (bias.defined()) out.push_back(bias);
  if (gamma.defined()) {
    out.push_back(gamma);
    out.push_back(beta);
  }
  return out;
}

EncoderState::EncoderState(EncoderConfig config, std::size_t head_outputs, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  Rng rng(derive_seed(seed, 0xb10c));
  std::size_t in = config_.input_dim();
  for (const BlockSpec& spec : config_.blocks) {
    Block b;
    b.weight = uniform_fan_in(in, spec.width, rng);
    if (spec.batch_norm) {
      b.gamma = Tensor::full({spec.width}, 1.0, true);
      b.beta = Tensor::zeros({spec.width}, true);
    } else {
      b.bias = Tensor::zeros({spec.width}, true);
    }
    blocks_.push_back(std::move(b));
    in = spec.width;
  }
  head_ = make_head(config_.feature_dim(), head_outputs, seed);
}

void EncoderState::reset_head(std::size_t outputs, std::uint64_t seed) {
  if (outputs == 0) throw InputError("encoder: head needs at least one output");
  head_ = make_head(config_.feature_dim(), outputs, seed);
}

std::vector<Tensor> EncoderState::block_parameters(std::size_t first, std::size_t last) const {
  std::vector<Tensor> out;
  for (std::size_t i = first; i < last; ++i) {
    auto p = blocks_[i].parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Tensor> EncoderState::parameters() const {
  std::vector<Tensor> out = block_parameters(0, blocks_.size());
  out.push_back(head_.weight);
  out.push_back(head_.bias);
  return out;
}

std::vector<NamedTensor> EncoderState::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + "block" + std::to_string(i) + ".";
    const Block& b = blocks_[i];
    out.push_back({p + "weight", b.weight});
    if (b.bias.defined()) out.push_back({p + "bias", b.bias});
    if (b.gamma.defined()) {
      out.push_back({p + "gamma", b.gamma});
      out.push_back({p + "beta", b.beta});
    }
  }
  out.push_back({prefix + "head.weight", head_.weight});
  out.push_back({prefix + "head.bias", head_.bias});
  return out;
}

Tensor EncoderState::forward_blocks(const Tensor& h, std::size_t first, std::size_t last,
                                    std::size_t stats_rows) const {
  Tensor x = h;
  for (std::size_t i = first; i < last; ++i) {
    const BlockSpec& spec = config_.blocks[i];
    const Block& b = blocks_[i];
    Tensor y = nx::matmul(x, b.weight);
    if (spec.batch_norm) {
      y = nx::batch_norm(y, b.gamma, b.beta, stats_rows);
    } else {
      y = nx::add_bias(y, b.bias);
    }
    if (spec.activation) y = nx::leaky_relu(y, config_.leaky_slope);
    if (spec.residual) y = nx::add(x, y);
    x = y;
  }
  return x;
}

Tensor encode(const EncoderState& state, const Tensor& x, const std::optional<Tensor>& transductive_ctx) {
  const std::size_t in = state.config().input_dim();
  if (x.ndim() != 2 || x.dim(1) != in) {
    throw DimensionError("encode: expected [B x " + std::to_string(in) + "], got " +
                         nx::shape_str(x.shape()));
  }
  const std::size_t n = state.config().block_count();
  if (!transductive_ctx) return state.forward_blocks(x, 0, n);
  const Tensor& ctx = *transductive_ctx;
  if (ctx.ndim() != 2 || ctx.dim(1) != in) {
    throw DimensionError("encode: transductive context has shape " + nx::shape_str(ctx.shape()));
  }
  Tensor all = state.forward_blocks(nx::concat_rows({x, ctx}), 0, n);
  return nx::slice_rows(all, 0, x.dim(0));
}

Tensor classify(const EncoderState& state, const Tensor& features) {
  if (features.ndim() != 2 || features.dim(1) != state.config().feature_dim()) {
    throw DimensionError("classify: features have shape " + nx::shape_str(features.shape()));
  }
  return nx::add_bias(nx::matmul(features, state.head().weight), state.head().bias);
}

ParamSplit split_params(const EncoderState& state) {
  const std::size_t frozen = state.config().frozen_blocks();
  ParamSplit split;
  split.frozen = state.block_parameters(0, frozen);
  split.tunable = state.block_parameters(frozen, state.config().block_count());
  split.tunable.push_back(state.head().weight);
  split.tunable.push_back(state.head().bias);
  return split;
}

EncoderState clone_for_episode(const EncoderState& state) {
  EncoderState copy = state;
  for (Block& b : copy.blocks_) {
    b.weight = copy_param(b.weight);
    b.bias = copy_param(b.bias);
    b.gamma = copy_param(b.gamma);
    b.beta = copy_param(b.beta);
  }
  copy.head_.weight = copy_param(copy.head_.weight);
  copy.head_.bias = copy_param(copy.head_.bias);
  return copy;
}

}  // namespace sbmtl::encoder
