// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sbmtl {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied values outside their documented domain.
class InputError : public Error {
 public:
  using Error::Error;
};

// A dataset cannot supply the requested episode shape.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// An object is not in a state where the operation is meaningful
// (e.g. stepping an optimizer whose parameters never received a gradient).
class StateError : public Error {
 public:
  using Error::Error;
};

// Batch statistics requested over fewer than two rows.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

// File-system and serialization failures. The message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sbmtl
