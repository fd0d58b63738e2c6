// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidfuse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Precondition on a scalar argument (step index, coefficient range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf surfaced where finite values were required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind { kIo, kBadMagic, kBadVersion, kBadHeader, kTruncated, kTrailingBytes };

/// Structured failure while reading or writing one of the binary formats.
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

template <typename Dims>
std::string shape_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  bool first = true;
  for (auto d : dims) {
    if (!first) os << ',';
    os << d;
    first = false;
  }
  os << ']';
  return os.str();
}

}  // namespace vidfuse
