// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "sbmtl/common/rng.hpp"
#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::episodes {

using numerics::Shape;
using numerics::Tensor;

struct AugmentConfig {
  std::size_t extra_per_image = 17;
  double jitter = 0.1;              // per-channel contrast and brightness amplitude
  double crop_min_fraction = 0.75;  // side length of the crop window, relative
  bool horizontal_flip = true;
  bool vertical_flip = true;

  void validate() const;
};

struct AugmentedSupport {
  Tensor x;                          // originals first, then copies grouped by source
  std::vector<int> y;
  std::vector<bool> original;
  std::vector<std::size_t> source;   // row of the support item each copy came from
  std::size_t original_count = 0;
};

// Adds cfg.extra_per_image perturbed copies of every support image. Each copy
// takes a random crop resized back with bilinear sampling, optional flips
// (probability 1/2 each), and per-channel contrast/brightness jitter. With
// zero extra copies the output equals the input.
AugmentedSupport augment_support(const Tensor& x, const std::vector<int>& y, const Shape& item_shape,
                                 const AugmentConfig& cfg, Rng& rng);

}  // namespace sbmtl::episodes
