// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::numerics {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Checkpoint file layout, all integers little-endian:
//
//   char[8]  magic "SBMTLCKP"
//   u32      format version (kCheckpointVersion)
//   u64      record count
//   per record:
//     u32    name length, then that many UTF-8 bytes
//     u32    rank, then rank x u64 dimensions
//     f64    numel values, row-major
//
// Records keep the order in which they were written.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// Copies values from `path` into existing tensors. Names, order and shapes
// must match exactly.
void restore_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& into);

// FNV-1a over names, shapes and raw value bytes. Equal checksums mean
// bit-identical parameters.
std::uint64_t checksum(const std::vector<NamedTensor>& records);
std::uint64_t checksum(const std::vector<Tensor>& tensors);

}  // namespace sbmtl::numerics
