// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sbmtl/common/errors.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace sbmtl::numerics {

namespace {

constexpr char kMagic[8] = {'S', 'B', 'M', 'T', 'L', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint: " + path.string());
  return v;
}

void fnv(std::uint64_t& h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, records.size());
  for (const NamedTensor& r : records) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    const Shape& s = r.tensor.shape();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    for (std::size_t d : s) put<std::uint64_t>(os, d);
    auto values = r.tensor.data();
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  const auto count = get<std::uint64_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get<std::uint32_t>(is, path);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rank = get<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is, path);
    std::vector<double> values(shape_numel(shape));
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint: " + path.string());
    out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

void restore_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& into) {
  std::vector<NamedTensor> loaded = load_checkpoint(path);
  if (loaded.size() != into.size()) {
    throw IoError("checkpoint " + path.string() + " holds " + std::to_string(loaded.size()) +
                  " tensors, model expects " + std::to_string(into.size()));
  }
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (loaded[i].name != into[i].name || loaded[i].tensor.shape() != into[i].tensor.shape()) {
      throw IoError("checkpoint " + path.string() + " record " + std::to_string(i) + " is " +
                    loaded[i].name + shape_str(loaded[i].tensor.shape()) + ", expected " +
                    into[i].name + shape_str(into[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < into.size(); ++i) {
    Tensor dst = into[i].tensor;
    auto src = loaded[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.data().begin());
  }
}

std::uint64_t checksum(const std::vector<NamedTensor>& records) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const NamedTensor& r : records) {
    fnv(h, r.name.data(), r.name.size());
    for (std::size_t d : r.tensor.shape()) fnv(h, &d, sizeof(d));
    auto v = r.tensor.data();
    fnv(h, v.data(), v.size() * sizeof(double));
  }
  return h;
}

std::uint64_t checksum(const std::vector<Tensor>& tensors) {
  std::vector<NamedTensor> named;
  named.reserve(tensors.size());
  for (const Tensor& t : tensors) named.push_back({"", t});
  return checksum(named);
}

}  // namespace sbmtl::numerics
