// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <type_traits>
#include <vector>

#include "vidfuse/data_io/binary.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

// Layout: "VFTN" | version u8 | dtype u8 (1 = f32, 2 = f64) | rank u8 |
// dims u32 x rank | row-major payload, all little-endian.
inline constexpr std::uint8_t kTensorFileVersion = 1;

namespace detail {

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 1 : 2;
}

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode_tensor(const Tensor<T>& t) {
  if (t.rank() > 255) throw ShapeError("encode_tensor: rank above 255");
  io::ByteWriter w;
  w.text("VFTN");
  w.u8(kTensorFileVersion);
  w.u8(detail::dtype_code<T>());
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("encode_tensor: dimension exceeds 32 bits");
    w.u32(static_cast<std::uint32_t>(d));
  }
  for (T v : t.data()) {
    if constexpr (std::is_same_v<T, float>) {
      w.f32(v);
    } else {
      w.f64(v);
    }
  }
  return std::move(w.bytes());
}

/// Decodes a tensor file image. An f32 payload may be read as double (exact);
/// an f64 payload read as float is rejected.
template <typename T>
Tensor<T> decode_tensor(std::span<const std::uint8_t> bytes, const std::string& what = "tensor file") {
  io::ByteReader r(bytes, what);
  const auto magic = r.take(4);
  if (std::string(magic.begin(), magic.end()) != "VFTN") throw FormatError(FormatErrorKind::kBadMagic, what + ": bad magic");
  const std::uint8_t version = r.u8();
  if (version != kTensorFileVersion) {
    throw FormatError(FormatErrorKind::kBadVersion, what + ": unsupported version " + std::to_string(version));
  }
  const std::uint8_t dtype = r.u8();
  if (dtype != 1 && dtype != 2) throw FormatError(FormatErrorKind::kBadHeader, what + ": unknown dtype " + std::to_string(dtype));
  if (dtype == 2 && std::is_same_v<T, float>) {
    throw FormatError(FormatErrorKind::kBadHeader, what + ": f64 payload cannot be read as f32");
  }
  const std::uint8_t rank = r.u8();
  Shape shape;
  std::uint64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    shape.push_back(r.u32());
    count *= shape.back();
  }
  const std::size_t width = dtype == 1 ? 4 : 8;
  if (r.remaining() < count * width) {
    throw FormatError(FormatErrorKind::kTruncated, what + ": payload holds " + std::to_string(r.remaining()) +
                                                       " bytes, header needs " + std::to_string(count * width));
  }
  if (r.remaining() > count * width) throw FormatError(FormatErrorKind::kTrailingBytes, what + ": trailing bytes after payload");
  std::vector<T> data(count);
  for (auto& v : data) v = dtype == 1 ? static_cast<T>(r.f32()) : static_cast<T>(r.f64());
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  io::write_file_atomic(path, encode_tensor(t));
}

template <typename T>
Tensor<T> read_tensor(const std::filesystem::path& path) {
  return decode_tensor<T>(io::read_file(path), path.string());
}

}  // namespace vidfuse
