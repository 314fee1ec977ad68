// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sbmtl/common/rng.hpp"
#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::episodes {

using numerics::Shape;
using numerics::Tensor;

// Labeled items of one domain. Items are stored row-major, one row of
// item_dim() values per item.
struct Dataset {
  Shape item_shape;
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<int> classes;  // sorted, distinct
  int domain_id = 0;
  double shift_magnitude = 0.0;

  std::size_t size() const { return labels.size(); }
  std::size_t item_dim() const { return numerics::shape_numel(item_shape); }
  std::span<const double> item(std::size_t i) const {
    return {values.data() + i * item_dim(), item_dim()};
  }
  // Item indices of each class, in the order of `classes`.
  std::vector<std::vector<std::size_t>> items_by_class() const;
  // Throws InputError if sizes disagree or a label is outside `classes`.
  void validate() const;
};

// Binary container:
//   char[8] "SBMTLDS1", u32 version, i32 domain id, f64 shift magnitude,
//   u32 rank + u64 dims (item shape), u64 class count + i32 classes,
//   u64 item count + i32 labels, then f64 values row-major.
inline constexpr std::uint32_t kDatasetVersion = 1;
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

struct EpisodeTask {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::size_t query_per_class = 0;
  Shape item_shape;
  Tensor support_x;             // [way*shot x D], class-major
  std::vector<int> support_y;   // episode-local labels in [0, way)
  Tensor query_x;               // [way*query x D], class-major
  std::vector<int> query_y;
  std::vector<int> class_map;   // episode label -> dataset label
  std::vector<std::size_t> support_items;  // dataset indices
  std::vector<std::size_t> query_items;
};

// Uniform class choice without replacement, then uniform items without
// replacement inside each class. Throws CapacityError when the dataset has
// fewer than `way` classes or a chosen class has fewer than shot + query
// items.
EpisodeTask sample_episode(const Dataset& ds, std::size_t way, std::size_t shot,
                           std::size_t query, Rng& rng);

}  // namespace sbmtl::episodes
