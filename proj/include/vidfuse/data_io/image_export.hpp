// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidfuse/data_io/binary.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

/// [-1,1] -> [0,255], clamped (never wraps).
inline std::uint8_t to_byte(double v) {
  if (!(v >= -1.0)) v = -1.0;  // also maps NaN to black
  if (v > 1.0) v = 1.0;
  return static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
}

namespace detail {

struct ClipView {
  std::size_t frames, channels, height, width;
};

template <typename T>
ClipView clip_view(const Tensor<T>& clip, const char* op) {
  if (clip.rank() != 4 || (clip.dim(1) != 1 && clip.dim(1) != 3)) {
    throw ShapeError(std::string(op) + ": expected one clip [N,1|3,H,W], got " + shape_string(clip.shape()));
  }
  return {clip.dim(0), clip.dim(1), clip.dim(2), clip.dim(3)};
}

/// Gray level of one pixel; colour frames are averaged.
template <typename T>
std::uint8_t gray_at(const Tensor<T>& clip, const ClipView& v, std::size_t f, std::size_t p) {
  const std::size_t plane = v.height * v.width;
  double acc = 0;
  for (std::size_t c = 0; c < v.channels; ++c) acc += static_cast<double>(clip[(f * v.channels + c) * plane + p]);
  return to_byte(acc / static_cast<double>(v.channels));
}

// Variable-width LSB-first code packer for GIF image data.
class BitPacker {
 public:
  void put(unsigned code, int width) {
    acc_ |= static_cast<std::uint32_t>(code) << bits_;
    bits_ += width;
    while (bits_ >= 8) {
      out_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
      acc_ >>= 8;
      bits_ -= 8;
    }
  }
  std::vector<std::uint8_t> finish() {
    if (bits_ > 0) out_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
    acc_ = 0;
    bits_ = 0;
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
  std::uint32_t acc_ = 0;
  int bits_ = 0;
};

/// GIF LZW with 8-bit minimum code size.
inline std::vector<std::uint8_t> lzw_encode(const std::vector<std::uint8_t>& indices) {
  constexpr unsigned kClear = 256, kEnd = 257, kMaxCode = 4095;
  BitPacker out;
  std::unordered_map<std::uint32_t, unsigned> table;
  unsigned next = 258;
  int width = 9;
  out.put(kClear, width);
  if (indices.empty()) {
    out.put(kEnd, width);
    return out.finish();
  }
  unsigned prefix = indices[0];
  for (std::size_t k = 1; k < indices.size(); ++k) {
    const std::uint32_t key = (prefix << 8) | indices[k];
    auto it = table.find(key);
    if (it != table.end()) {
      prefix = it->second;
      continue;
    }
    out.put(prefix, width);
    if (next < kMaxCode) {
      table.emplace(key, next);
      if (next == (1u << width) && width < 12) ++width;
      ++next;
    } else {
      out.put(kClear, width);
      table.clear();
      next = 258;
      width = 9;
    }
    prefix = indices[k];
  }
  out.put(prefix, width);
  // The decoder adds its entry for the last code before reading the end code.
  if (next == (1u << width) && width < 12) ++width;
  out.put(kEnd, width);
  return out.finish();
}

}  // namespace detail

/// One binary PPM (P6) per frame, named frame_000.ppm, frame_001.ppm, ...
template <typename T>
void export_frames(const Tensor<T>& clip, const std::filesystem::path& dir) {
  const auto v = detail::clip_view(clip, "export_frames");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError(FormatErrorKind::kIo, "cannot create directory " + dir.string());
  const std::size_t plane = v.height * v.width;
  for (std::size_t f = 0; f < v.frames; ++f) {
    io::ByteWriter w;
    w.text("P6\n" + std::to_string(v.width) + " " + std::to_string(v.height) + "\n255\n");
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src = v.channels == 3 ? c : 0;
        w.u8(to_byte(static_cast<double>(clip[(f * v.channels + src) * plane + p])));
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.ppm", f);
    io::write_file_atomic(dir / name, w.bytes());
  }
}

/// Animated GIF89a with a fixed 256-level gray palette; frame delay is
/// 100/fps centiseconds.
template <typename T>
std::vector<std::uint8_t> encode_gif(const Tensor<T>& clip, double fps) {
  const auto v = detail::clip_view(clip, "export_gif");
  if (!(fps > 0.0)) throw InvalidArgument("export_gif: fps must be positive");
  if (v.width > 0xffff || v.height > 0xffff) throw ShapeError("export_gif: frame too large");
  const auto delay = static_cast<std::uint16_t>(std::clamp(std::lround(100.0 / fps), 1L, 65535L));
  io::ByteWriter w;
  w.text("GIF89a");
  w.u16(static_cast<std::uint16_t>(v.width));
  w.u16(static_cast<std::uint16_t>(v.height));
  w.u8(0xf7);  // global table, 8-bit colour resolution, 256 entries
  w.u8(0);
  w.u8(0);
  for (int i = 0; i < 256; ++i) {
    w.u8(static_cast<std::uint8_t>(i));
    w.u8(static_cast<std::uint8_t>(i));
    w.u8(static_cast<std::uint8_t>(i));
  }
  // NETSCAPE2.0 loop forever
  w.u8(0x21);
  w.u8(0xff);
  w.u8(11);
  w.text("NETSCAPE2.0");
  w.u8(3);
  w.u8(1);
  w.u16(0);
  w.u8(0);
  const std::size_t plane = v.height * v.width;
  for (std::size_t f = 0; f < v.frames; ++f) {
    w.u8(0x21);
    w.u8(0xf9);
    w.u8(4);
    w.u8(0);
    w.u16(delay);
    w.u8(0);
    w.u8(0);

    w.u8(0x2c);
    w.u16(0);
    w.u16(0);
    w.u16(static_cast<std::uint16_t>(v.width));
    w.u16(static_cast<std::uint16_t>(v.height));
    w.u8(0);
    std::vector<std::uint8_t> indices(plane);
    for (std::size_t p = 0; p < plane; ++p) indices[p] = detail::gray_at(clip, v, f, p);
    const auto data = detail::lzw_encode(indices);
    w.u8(8);
    for (std::size_t off = 0; off < data.size(); off += 255) {
      const std::size_t n = std::min<std::size_t>(255, data.size() - off);
      w.u8(static_cast<std::uint8_t>(n));
      w.raw(std::span<const std::uint8_t>(data.data() + off, n));
    }
    w.u8(0);
  }
  w.u8(0x3b);
  return std::move(w.bytes());
}

template <typename T>
void export_gif(const Tensor<T>& clip, const std::filesystem::path& path, double fps) {
  io::write_file_atomic(path, encode_gif(clip, fps));
}

}  // namespace vidfuse
