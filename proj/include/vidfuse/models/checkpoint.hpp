// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "vidfuse/data_io/binary.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/models/unet.hpp"
#include "vidfuse/numerics/adam.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kU8 = 3, kI64 = 4 };

inline std::size_t dtype_width(DType d) {
  switch (d) {
    case DType::kF32:
      return 4;
    case DType::kF64:
    case DType::kI64:
      return 8;
    case DType::kU8:
      return 1;
  }
  return 0;
}

/// Named, typed blobs. Payload bytes are stored little-endian exactly as
/// they appear on disk, so save/load is bit-exact by construction.
class Checkpoint {
 public:
  static constexpr std::uint8_t kVersion = 1;

  struct Entry {
    std::string name;
    DType dtype;
    Shape shape;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  template <typename T>
  void put_tensor(const std::string& name, const Tensor<T>& t) {
    io::ByteWriter w;
    for (T v : t.data()) {
      if constexpr (std::is_same_v<T, float>) {
        w.f32(v);
      } else {
        w.f64(v);
      }
    }
    put({name, std::is_same_v<T, float> ? DType::kF32 : DType::kF64, t.shape(), std::move(w.bytes())});
  }

  void put_text(const std::string& name, const std::string& text) {
    put({name, DType::kU8, {text.size()}, std::vector<std::uint8_t>(text.begin(), text.end())});
  }

  void put_int(const std::string& name, std::int64_t value) {
    io::ByteWriter w;
    w.i64(value);
    put({name, DType::kI64, {1}, std::move(w.bytes())});
  }

  bool contains(const std::string& name) const { return find(name) != nullptr; }

  template <typename T>
  Tensor<T> tensor(const std::string& name) const {
    const Entry& e = get(name);
    const DType want = std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
    if (e.dtype != want) throw FormatError(FormatErrorKind::kBadHeader, "checkpoint: entry " + name + " has another dtype");
    io::ByteReader r(e.payload, "checkpoint entry " + name);
    std::vector<T> data(shape_size(e.shape));
    for (auto& v : data) {
      if constexpr (std::is_same_v<T, float>) {
        v = r.f32();
      } else {
        v = r.f64();
      }
    }
    return Tensor<T>(e.shape, std::move(data));
  }

  std::string text(const std::string& name) const {
    const Entry& e = get(name);
    if (e.dtype != DType::kU8) throw FormatError(FormatErrorKind::kBadHeader, "checkpoint: entry " + name + " is not text");
    return std::string(e.payload.begin(), e.payload.end());
  }

  std::int64_t integer(const std::string& name) const {
    const Entry& e = get(name);
    if (e.dtype != DType::kI64) throw FormatError(FormatErrorKind::kBadHeader, "checkpoint: entry " + name + " is not i64");
    io::ByteReader r(e.payload, "checkpoint entry " + name);
    return r.i64();
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

  void put(Entry e) {
    if (e.payload.size() != shape_size(e.shape) * dtype_width(e.dtype)) {
      throw ShapeError("checkpoint: entry " + e.name + " payload does not match its shape");
    }
    for (auto& existing : entries_) {
      if (existing.name == e.name) {
        existing = std::move(e);
        return;
      }
    }
    entries_.push_back(std::move(e));
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

 private:
  const Entry* find(const std::string& name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &*it;
  }
  const Entry& get(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw FormatError(FormatErrorKind::kBadHeader, "checkpoint: missing entry " + name);
    return *e;
  }

  std::vector<Entry> entries_;
};

// Layout: "VFCK" | version u8 | entry count u32 | manifest | payload blob.
// Manifest entry: name length u16 | name | dtype u8 | rank u8 | dims u32 x rank
// | byte offset u64 (into the blob) | byte length u64.
inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.text("VFCK");
  w.u8(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.entries().size()));
  std::uint64_t offset = 0;
  for (const auto& e : ckpt.entries()) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ShapeError("checkpoint: name too long");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.text(e.name);
    w.u8(static_cast<std::uint8_t>(e.dtype));
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u64(offset);
    w.u64(e.payload.size());
    offset += e.payload.size();
  }
  for (const auto& e : ckpt.entries()) w.raw(e.payload);
  return std::move(w.bytes());
}

/// Parses a complete image; any inconsistency throws before a Checkpoint is
/// returned, so callers never observe partial state.
inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what = "checkpoint") {
  io::ByteReader r(bytes, what);
  const auto magic = r.take(4);
  if (std::string(magic.begin(), magic.end()) != "VFCK") throw FormatError(FormatErrorKind::kBadMagic, what + ": bad magic");
  const std::uint8_t version = r.u8();
  if (version != Checkpoint::kVersion) {
    throw FormatError(FormatErrorKind::kBadVersion, what + ": unsupported version " + std::to_string(version));
  }
  struct Pending {
    Checkpoint::Entry entry;
    std::uint64_t offset, length;
  };
  const std::uint32_t count = r.u32();
  std::vector<Pending> pending;
  for (std::uint32_t k = 0; k < count; ++k) {
    Pending p;
    const std::uint16_t len = r.u16();
    const auto name = r.take(len);
    p.entry.name.assign(name.begin(), name.end());
    const std::uint8_t code = r.u8();
    if (code < 1 || code > 4) throw FormatError(FormatErrorKind::kBadHeader, what + ": unknown dtype for " + p.entry.name);
    p.entry.dtype = static_cast<DType>(code);
    const std::uint8_t rank = r.u8();
    for (int i = 0; i < rank; ++i) p.entry.shape.push_back(r.u32());
    p.offset = r.u64();
    p.length = r.u64();
    if (p.length != shape_size(p.entry.shape) * dtype_width(p.entry.dtype)) {
      throw FormatError(FormatErrorKind::kBadHeader, what + ": length of " + p.entry.name + " disagrees with its shape");
    }
    pending.push_back(std::move(p));
  }
  const std::size_t blob_start = r.position();
  const std::size_t blob_size = r.remaining();
  std::uint64_t expected = 0;
  for (const auto& p : pending) {
    if (p.offset != expected) throw FormatError(FormatErrorKind::kBadHeader, what + ": non-contiguous payload offsets");
    expected += p.length;
  }
  if (expected > blob_size) {
    throw FormatError(FormatErrorKind::kTruncated, what + ": payload has " + std::to_string(blob_size) +
                                                       " bytes, manifest needs " + std::to_string(expected));
  }
  if (expected < blob_size) throw FormatError(FormatErrorKind::kTrailingBytes, what + ": trailing bytes after payload");
  Checkpoint ckpt;
  for (auto& p : pending) {
    const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(blob_start + p.offset);
    p.entry.payload.assign(begin, begin + static_cast<std::ptrdiff_t>(p.length));
    ckpt.put(std::move(p.entry));
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

template <typename T>
void store_parameters(Checkpoint& ckpt, const std::string& prefix, const UNet<T>& net) {
  for (const auto& p : net.parameters()) ckpt.put_tensor(prefix + p.name, p.value);
}

/// Copies stored values into an already-constructed network of the same
/// architecture.
template <typename T>
void restore_parameters(const Checkpoint& ckpt, const std::string& prefix, UNet<T>& net) {
  for (auto& p : net.parameters()) {
    Tensor<T> stored = ckpt.tensor<T>(prefix + p.name);
    if (stored.shape() != p.value.shape()) {
      throw FormatError(FormatErrorKind::kBadHeader, "checkpoint: " + prefix + p.name + " has shape " +
                                                         shape_string(stored.shape()) + ", model expects " +
                                                         shape_string(p.value.shape()));
    }
    auto dst = p.value.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
}

template <typename T>
void store_adam(Checkpoint& ckpt, const std::string& prefix, const AdamState<T>& state) {
  ckpt.put_int(prefix + "step", state.step);
  for (std::size_t k = 0; k < state.first_moment.size(); ++k) {
    ckpt.put_tensor(prefix + "m." + std::to_string(k), Tensor<T>({state.first_moment[k].size()}, state.first_moment[k]));
    ckpt.put_tensor(prefix + "v." + std::to_string(k), Tensor<T>({state.second_moment[k].size()}, state.second_moment[k]));
  }
}

template <typename T>
void restore_adam(const Checkpoint& ckpt, const std::string& prefix, AdamState<T>& state) {
  state.step = ckpt.integer(prefix + "step");
  state.first_moment.clear();
  state.second_moment.clear();
  for (std::size_t k = 0; ckpt.contains(prefix + "m." + std::to_string(k)); ++k) {
    auto m = ckpt.tensor<T>(prefix + "m." + std::to_string(k));
    auto v = ckpt.tensor<T>(prefix + "v." + std::to_string(k));
    state.first_moment.emplace_back(m.data().begin(), m.data().end());
    state.second_moment.emplace_back(v.data().begin(), v.data().end());
  }
}

}  // namespace vidfuse
