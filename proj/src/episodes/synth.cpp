// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/episodes/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sbmtl/common/errors.hpp"

namespace sbmtl::episodes {

namespace {

// pixels x latent_dim, each column a sum of low-frequency cosines per
// channel, scaled to unit RMS.
std::vector<double> make_basis(const DomainShiftConfig& cfg, Rng& rng) {
  const std::size_t channels = cfg.item_shape[0];
  const std::size_t h = cfg.item_shape[1], w = cfg.item_shape[2];
  const std::size_t pixels = channels * h * w;
  const std::size_t f_max = cfg.basis_frequencies;
  std::vector<double> basis(pixels * cfg.latent_dim, 0.0);
  for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::vector<double> pattern(h * w, 0.0);
      for (std::size_t t = 0; t < f_max; ++t) {
        const double fx = static_cast<double>(uniform_index(rng, f_max + 1));
        const double fy = static_cast<double>(uniform_index(rng, f_max + 1));
        const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double amp = normal(rng);
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            const double arg = 2.0 * std::numbers::pi *
                                   (fx * static_cast<double>(x) / static_cast<double>(w) +
                                    fy * static_cast<double>(y) / static_cast<double>(h)) +
                               phase;
            pattern[y * w + x] += amp * std::cos(arg);
          }
        }
      }
      double ss = 0.0;
      for (double v : pattern) ss += v * v;
      const double rms = std::sqrt(ss / static_cast<double>(pattern.size()));
      for (std::size_t p = 0; p < h * w; ++p) {
        basis[(c * h * w + p) * cfg.latent_dim + k] = rms > 0 ? pattern[p] / rms : 0.0;
      }
    }
  }
  return basis;
}

struct DomainTransform {
  std::vector<double> rotation;  // latent_dim x latent_dim, row-major
  std::vector<double> channel_gain;
  std::vector<double> channel_bias;
  double gain = 1.0;
  double noise = 0.0;
  double clutter = 0.0;
};

// Givens rotations on random disjoint axis pairs, each by +/- angle.
std::vector<double> make_rotation(std::size_t n, double angle, Rng& rng) {
  std::vector<double> r(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) r[i * n + i] = 1.0;
  std::vector<std::size_t> axes(n);
  for (std::size_t i = 0; i < n; ++i) axes[i] = i;
  shuffle(axes, rng);
  for (std::size_t p = 0; p + 1 < n; p += 2) {
    const std::size_t a = axes[p], b = axes[p + 1];
    const double theta = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * angle;
    const double c = std::cos(theta), s = std::sin(theta);
    r[a * n + a] = c;
    r[a * n + b] = -s;
    r[b * n + a] = s;
    r[b * n + b] = c;
  }
  return r;
}

DomainTransform make_transform(const DomainShiftConfig& cfg, double magnitude, Rng& rng) {
  const std::size_t channels = cfg.item_shape[0];
  DomainTransform t;
  t.rotation = make_rotation(cfg.latent_dim, magnitude * cfg.rotation_angle, rng);
  for (std::size_t c = 0; c < channels; ++c) {
    t.channel_gain.push_back(1.0 + magnitude * uniform(rng, -cfg.channel_gain, cfg.channel_gain));
    t.channel_bias.push_back(magnitude * uniform(rng, -cfg.channel_bias, cfg.channel_bias));
  }
  t.gain = cfg.render_gain * (1.0 + magnitude * cfg.nonlinearity_gain);
  t.noise = cfg.pixel_noise * (1.0 + magnitude * cfg.noise_gain);
  t.clutter = magnitude * cfg.clutter_gain;
  return t;
}

struct ClassModel {
  std::vector<double> prototype;
  double spread;
};

Dataset render_domain(const DomainShiftConfig& cfg, const std::vector<int>& class_ids,
                      const std::vector<ClassModel>& models, const std::vector<double>& basis,
                      const std::vector<double>& clutter_basis, const DomainTransform& tf, int domain_id, double magnitude, Rng& rng) {
  const std::size_t n_lat = cfg.latent_dim;
  const std::size_t channels = cfg.item_shape[0];
  const std::size_t plane = cfg.item_shape[1] * cfg.item_shape[2];
  const std::size_t dim = channels * plane;
  const double norm = 1.0 / std::sqrt(static_cast<double>(n_lat));

  Dataset ds;
  ds.item_shape = cfg.item_shape;
  ds.domain_id = domain_id;
  ds.shift_magnitude = magnitude;
  ds.classes = class_ids;
  std::sort(ds.classes.begin(), ds.classes.end());
  ds.values.reserve(class_ids.size() * cfg.items_per_class * dim);

  std::vector<double> z(n_lat), zr(n_lat), zc(n_lat);
  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    const ClassModel& m = models[c];
    for (std::size_t i = 0; i < cfg.items_per_class; ++i) {
      double scale = 1.0;
      for (std::size_t k = 0; k < n_lat; ++k) {
        z[k] = m.prototype[k] + m.spread * scale * normal(rng);
        scale *= cfg.latent_decay;
      }
      for (std::size_t a = 0; a < n_lat; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n_lat; ++b) acc += tf.rotation[a * n_lat + b] * z[b];
        zr[a] = acc;
      }
      for (double& v : zc) v = tf.clutter * normal(rng);
      for (std::size_t p = 0; p < dim; ++p) {
        const double* row = basis.data() + p * n_lat;
        const double* crow = clutter_basis.data() + p * n_lat;
        double a = 0.0;
        for (std::size_t k = 0; k < n_lat; ++k) a += row[k] * zr[k] + crow[k] * zc[k];
        const std::size_t ch = p / plane;
        const double v = std::tanh(tf.gain * norm * a * tf.channel_gain[ch] + tf.channel_bias[ch]);
        ds.values.push_back(v + tf.noise * normal(rng));
      }
      ds.labels.push_back(class_ids[c]);
    }
  }
  return ds;
}

}  // namespace

void DomainShiftConfig::validate() const {
  if (item_shape.size() != 3 || numerics::shape_numel(item_shape) == 0) {
    throw InputError("domain config: item_shape must be [channels, height, width]");
  }
  if (latent_dim == 0) throw InputError("domain config: latent_dim must be positive");
  if (source_classes == 0 || target_classes == 0) throw InputError("domain config: class counts must be positive");
  if (items_per_class == 0) throw InputError("domain config: items_per_class must be positive");
  if (!(spread_min > 0.0 && spread_min <= spread_max)) throw InputError("domain config: need 0 < spread_min <= spread_max");
  if (!(latent_decay > 0.0 && latent_decay <= 1.0)) throw InputError("domain config: latent_decay outside (0, 1]");
  if (shift_magnitude < 0.0) throw InputError("domain config: shift_magnitude must be non-negative");
  if (pixel_noise < 0.0) throw InputError("domain config: pixel_noise must be non-negative");
  if (basis_frequencies == 0) throw InputError("domain config: basis_frequencies must be positive");
}

DomainPair synth_domains(const DomainShiftConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t total = cfg.source_classes + cfg.target_classes;

  const std::vector<double> basis = make_basis(cfg, rng);
  const std::vector<double> clutter_basis = make_basis(cfg, rng);
  std::vector<ClassModel> models(total);
  for (ClassModel& m : models) {
    double scale = cfg.prototype_scale;
    for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
      m.prototype.push_back(scale * normal(rng));
      scale *= cfg.latent_decay;
    }
    m.spread = uniform(rng, cfg.spread_min, cfg.spread_max);
  }

  // Class ids 0..total-1 split into disjoint source and target sets.
  Rng split_rng(derive_seed(cfg.class_split_seed, 0x5b117));
  std::vector<int> ids(total);
  for (std::size_t i = 0; i < total; ++i) ids[i] = static_cast<int>(i);
  shuffle(ids, split_rng);
  std::vector<int> src_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cfg.source_classes));
  std::vector<int> tgt_ids(ids.begin() + static_cast<std::ptrdiff_t>(cfg.source_classes), ids.end());
  std::sort(src_ids.begin(), src_ids.end());
  std::sort(tgt_ids.begin(), tgt_ids.end());
  std::vector<ClassModel> src_models, tgt_models;
  for (int id : src_ids) src_models.push_back(models[static_cast<std::size_t>(id)]);
  for (int id : tgt_ids) tgt_models.push_back(models[static_cast<std::size_t>(id)]);

  // The source transform is drawn with magnitude 0 so that both domains
  // consume the same random stream layout.
  const DomainTransform src_tf = make_transform(cfg, 0.0, rng);
  const DomainTransform tgt_tf = make_transform(cfg, cfg.shift_magnitude, rng);

  DomainPair out;
  out.source = render_domain(cfg, src_ids, src_models, basis, clutter_basis, src_tf, 0, 0.0, rng);
  out.target = render_domain(cfg, tgt_ids, tgt_models, basis, clutter_basis, tgt_tf, 1, cfg.shift_magnitude, rng);
  return out;
}

}  // namespace sbmtl::episodes
