// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/episodes/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "sbmtl/common/errors.hpp"

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes little-endian");

namespace sbmtl::episodes {

namespace {

constexpr char kMagic[8] = {'S', 'B', 'M', 'T', 'L', 'D', 'S', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_array(std::ostream& os, const std::vector<T>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated dataset file: " + path.string());
  return v;
}

template <typename T>
std::vector<T> get_array(std::istream& is, std::uint64_t n, const std::filesystem::path& path) {
  std::vector<T> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw IoError("truncated dataset file: " + path.string());
  return v;
}

Tensor gather_items(const Dataset& ds, const std::vector<std::size_t>& idx) {
  const std::size_t d = ds.item_dim();
  std::vector<double> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = ds.item(idx[i]);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Tensor::from({idx.size(), d}, std::move(out));
}

}  // namespace

std::vector<std::vector<std::size_t>> Dataset::items_by_class() const {
  std::vector<std::vector<std::size_t>> out(classes.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::lower_bound(classes.begin(), classes.end(), labels[i]);
    out[static_cast<std::size_t>(it - classes.begin())].push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  if (values.size() != labels.size() * item_dim()) {
    throw InputError("dataset: " + std::to_string(values.size()) + " values for " +
                     std::to_string(labels.size()) + " items of size " + std::to_string(item_dim()));
  }
  if (!std::is_sorted(classes.begin(), classes.end()) ||
      std::adjacent_find(classes.begin(), classes.end()) != classes.end()) {
    throw InputError("dataset: class list must be sorted and distinct");
  }
  for (int y : labels) {
    if (!std::binary_search(classes.begin(), classes.end(), y)) {
      throw InputError("dataset: label " + std::to_string(y) + " is not in the class set");
    }
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open dataset for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kDatasetVersion);
  put<std::int32_t>(os, ds.domain_id);
  put<double>(os, ds.shift_magnitude);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.item_shape.size()));
  for (std::size_t d : ds.item_shape) put<std::uint64_t>(os, d);
  put<std::uint64_t>(os, ds.classes.size());
  std::vector<std::int32_t> classes(ds.classes.begin(), ds.classes.end());
  put_array(os, classes);
  put<std::uint64_t>(os, ds.labels.size());
  std::vector<std::int32_t> labels(ds.labels.begin(), ds.labels.end());
  put_array(os, labels);
  put_array(os, ds.values);
  if (!os) throw IoError("failed writing dataset: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a dataset file: " + path.string());
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kDatasetVersion) {
    throw IoError("unsupported dataset version " + std::to_string(version) + ": " + path.string());
  }
  Dataset ds;
  ds.domain_id = get<std::int32_t>(is, path);
  ds.shift_magnitude = get<double>(is, path);
  ds.item_shape.resize(get<std::uint32_t>(is, path));
  for (auto& d : ds.item_shape) d = get<std::uint64_t>(is, path);
  auto classes = get_array<std::int32_t>(is, get<std::uint64_t>(is, path), path);
  ds.classes.assign(classes.begin(), classes.end());
  auto labels = get_array<std::int32_t>(is, get<std::uint64_t>(is, path), path);
  ds.labels.assign(labels.begin(), labels.end());
  ds.values = get_array<double>(is, ds.labels.size() * ds.item_dim(), path);
  ds.validate();
  return ds;
}

EpisodeTask sample_episode(const Dataset& ds, std::size_t way, std::size_t shot, std::size_t query,
                           Rng& rng) {
  if (way == 0 || shot == 0) throw InputError("sample_episode: way and shot must be positive");
  if (ds.classes.size() < way) {
    throw CapacityError("sample_episode: " + std::to_string(way) + "-way episode needs " +
                        std::to_string(way) + " classes, dataset has " + std::to_string(ds.classes.size()));
  }
  const auto by_class = ds.items_by_class();
  const auto chosen = sample_without_replacement(ds.classes.size(), way, rng);

  EpisodeTask t;
  t.way = way;
  t.shot = shot;
  t.query_per_class = query;
  t.item_shape = ds.item_shape;
  for (std::size_t e = 0; e < way; ++e) {
    const auto& pool = by_class[chosen[e]];
    if (pool.size() < shot + query) {
      throw CapacityError("sample_episode: class " + std::to_string(ds.classes[chosen[e]]) + " has " +
                          std::to_string(pool.size()) + " items, episode needs " +
                          std::to_string(shot + query));
    }
    t.class_map.push_back(ds.classes[chosen[e]]);
    const auto picks = sample_without_replacement(pool.size(), shot + query, rng);
    for (std::size_t i = 0; i < shot; ++i) {
      t.support_items.push_back(pool[picks[i]]);
      t.support_y.push_back(static_cast<int>(e));
    }
    for (std::size_t i = shot; i < shot + query; ++i) {
      t.query_items.push_back(pool[picks[i]]);
      t.query_y.push_back(static_cast<int>(e));
    }
  }
  t.support_x = gather_items(ds, t.support_items);
  t.query_x = gather_items(ds, t.query_items);
  return t;
}

}  // namespace sbmtl::episodes
