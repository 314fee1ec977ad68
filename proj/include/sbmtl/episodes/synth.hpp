// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "sbmtl/common/rng.hpp"
#include "sbmtl/episodes/dataset.hpp"

namespace sbmtl::episodes {

// Generator for a source/target pair of small image datasets.
//
// Each class owns a Gaussian prototype in a latent space whose axes have
// decaying scale. Items draw a latent point around their prototype with a
// class-specific spread, and a fixed smooth basis renders the latent point
// into a multi-channel image squashed through tanh, plus pixel noise.
//
// The target domain uses the same recipe with new classes, then applies a
// transform whose size is `shift_magnitude`: a latent rotation mixing strong
// and weak axes, per-channel gain and offset, a steeper nonlinearity,
// smooth random clutter drawn per item from a second basis, and stronger
// pixel noise. At magnitude 0 the two domains share one distribution.
struct DomainShiftConfig {
  Shape item_shape{3, 16, 16};
  std::size_t latent_dim = 16;
  std::size_t source_classes = 32;
  std::size_t target_classes = 16;
  std::size_t items_per_class = 60;

  double prototype_scale = 1.0;
  double latent_decay = 0.85;
  double spread_min = 0.8;
  double spread_max = 2.0;
  std::size_t basis_frequencies = 3;
  double render_gain = 1.5;
  double pixel_noise = 0.05;

  double shift_magnitude = 1.0;
  double rotation_angle = 0.8;
  double channel_gain = 0.3;
  double channel_bias = 0.3;
  double nonlinearity_gain = 0.5;
  double noise_gain = 1.0;
  double clutter_gain = 0.5;

  std::uint64_t class_split_seed = 17;

  void validate() const;
};

struct DomainPair {
  Dataset source;
  Dataset target;
};

DomainPair synth_domains(const DomainShiftConfig& cfg, Rng& rng);

}  // namespace sbmtl::episodes
