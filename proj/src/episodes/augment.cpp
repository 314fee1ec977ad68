// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/episodes/augment.hpp"

#include <algorithm>
#include <cmath>

#include "sbmtl/common/errors.hpp"

namespace sbmtl::episodes {

namespace {

void perturb(std::span<const double> src, std::span<double> dst, std::size_t channels, std::size_t h,
             std::size_t w, const AugmentConfig& cfg, Rng& rng) {
  const double frac = uniform(rng, cfg.crop_min_fraction, 1.0);
  const double ch = frac * static_cast<double>(h - 1);
  const double cw = frac * static_cast<double>(w - 1);
  const double y0 = uniform(rng, 0.0, static_cast<double>(h - 1) - ch);
  const double x0 = uniform(rng, 0.0, static_cast<double>(w - 1) - cw);
  const bool flip_h = cfg.horizontal_flip && uniform01(rng) < 0.5;
  const bool flip_v = cfg.vertical_flip && uniform01(rng) < 0.5;
  const double dy = h > 1 ? ch / static_cast<double>(h - 1) : 0.0;
  const double dx = w > 1 ? cw / static_cast<double>(w - 1) : 0.0;

  for (std::size_t c = 0; c < channels; ++c) {
    const double contrast = 1.0 + uniform(rng, -cfg.jitter, cfg.jitter);
    const double brightness = uniform(rng, -cfg.jitter, cfg.jitter);
    const double* plane = src.data() + c * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t oy = flip_v ? h - 1 - y : y;
      const double sy = y0 + dy * static_cast<double>(y);
      const std::size_t iy = std::min(static_cast<std::size_t>(sy), h - 1);
      const std::size_t iy1 = std::min(iy + 1, h - 1);
      const double fy = sy - static_cast<double>(iy);
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t ox = flip_h ? w - 1 - x : x;
        const double sx = x0 + dx * static_cast<double>(x);
        const std::size_t ix = std::min(static_cast<std::size_t>(sx), w - 1);
        const std::size_t ix1 = std::min(ix + 1, w - 1);
        const double fx = sx - static_cast<double>(ix);
        const double v = (1 - fy) * ((1 - fx) * plane[iy * w + ix] + fx * plane[iy * w + ix1]) +
                         fy * ((1 - fx) * plane[iy1 * w + ix] + fx * plane[iy1 * w + ix1]);
        dst[c * h * w + oy * w + ox] = contrast * v + brightness;
      }
    }
  }
}

}  // namespace

void AugmentConfig::validate() const {
  if (!(crop_min_fraction > 0.0 && crop_min_fraction <= 1.0)) {
    throw InputError("augment: crop_min_fraction outside (0, 1]");
  }
  if (jitter < 0.0) throw InputError("augment: jitter must be non-negative");
}

AugmentedSupport augment_support(const Tensor& x, const std::vector<int>& y, const Shape& item_shape,
                                 const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (item_shape.size() != 3) throw InputError("augment: item shape must be [channels, height, width]");
  const std::size_t d = numerics::shape_numel(item_shape);
  if (x.ndim() != 2 || x.dim(1) != d || x.dim(0) != y.size()) {
    throw DimensionError("augment: support of shape " + numerics::shape_str(x.shape()) +
                         " does not match item shape " + numerics::shape_str(item_shape));
  }
  const std::size_t n = x.dim(0);
  const std::size_t extra = cfg.extra_per_image;
  const std::size_t total = n * (1 + extra);

  AugmentedSupport out;
  out.original_count = n;
  std::vector<double> values(total * d);
  auto in = x.data();
  std::copy(in.begin(), in.end(), values.begin());
  out.y = y;
  out.original.assign(n, true);
  for (std::size_t i = 0; i < n; ++i) out.source.push_back(i);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < extra; ++e) {
      const std::size_t row = n + i * extra + e;
      perturb(in.subspan(i * d, d), std::span<double>(values.data() + row * d, d), item_shape[0],
              item_shape[1], item_shape[2], cfg, rng);
      out.y.push_back(y[i]);
      out.original.push_back(false);
      out.source.push_back(i);
    }
  }
  out.x = Tensor::from({total, d}, std::move(values));
  return out;
}

}  // namespace sbmtl::episodes
