// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "vidfuse/diffusion.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/numerics/rng.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

enum class Sprite : int { kDisc = 0, kSquare = 1, kCross = 2, kRing = 3 };
enum class Motion : int { kHorizontal = 0, kVertical = 1, kDiagonal = 2, kStatic = 3 };

inline constexpr int kMaxIdentities = 4;
inline constexpr int kMaxMotions = 4;

/// Foreground intensity per sprite; the background is -1.
inline float sprite_intensity(Sprite s) {
  constexpr std::array<float, kMaxIdentities> kLevels{1.0f, 0.35f, -0.3f, 0.7f};
  return kLevels[static_cast<std::size_t>(s)];
}

struct ToyDatasetSpec {
  std::size_t clips = 512;
  std::size_t frames = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  int k_id = 3;
  int k_mo = 3;
  std::uint64_t seed = 0;
};

/// Everything that determines one rendered clip.
struct ClipParams {
  Sprite sprite = Sprite::kDisc;
  Motion motion = Motion::kStatic;
  int x0 = 0;
  int y0 = 0;
  int direction = 1;

  friend bool operator==(const ClipParams&, const ClipParams&) = default;
};

inline int sprite_radius(std::size_t height, std::size_t width) {
  return static_cast<int>(std::max<std::size_t>(2, std::min(height, width) / 5));
}

inline bool sprite_covers(Sprite s, int dx, int dy, int r) {
  switch (s) {
    case Sprite::kDisc:
      return dx * dx + dy * dy <= r * r;
    case Sprite::kSquare:
      return std::abs(dx) < r && std::abs(dy) < r;
    case Sprite::kCross:
      return (dx == 0 && std::abs(dy) <= r) || (dy == 0 && std::abs(dx) <= r);
    case Sprite::kRing: {
      const int d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 > (r - 1) * (r - 1);
    }
  }
  return false;
}

namespace detail {

// Position after `steps` unit moves inside [lo, hi], reflecting at the walls.
inline int bounce(int start, int steps, int lo, int hi) {
  const int span = hi - lo;
  if (span <= 0) return lo;
  int p = (start - lo + steps) % (2 * span);
  if (p < 0) p += 2 * span;
  return lo + (p <= span ? p : 2 * span - p);
}

}  // namespace detail

/// Renders one clip as [N,1,H,W] values.
inline std::vector<float> render_clip(const ClipParams& p, std::size_t frames, std::size_t height, std::size_t width) {
  const int r = sprite_radius(height, width);
  if (static_cast<int>(std::min(height, width)) < 2 * r + 3) {
    throw ConfigError("toy dataset: resolution " + std::to_string(height) + "x" + std::to_string(width) +
                      " too small for the sprites");
  }
  const int lo = r, hi_x = static_cast<int>(width) - 1 - r, hi_y = static_cast<int>(height) - 1 - r;
  const float fg = sprite_intensity(p.sprite);
  std::vector<float> out(frames * height * width, -1.0f);
  for (std::size_t f = 0; f < frames; ++f) {
    const int step = p.direction * static_cast<int>(f);
    int cx = p.x0, cy = p.y0;
    if (p.motion == Motion::kHorizontal || p.motion == Motion::kDiagonal) cx = detail::bounce(p.x0, step, lo, hi_x);
    if (p.motion == Motion::kVertical || p.motion == Motion::kDiagonal) cy = detail::bounce(p.y0, step, lo, hi_y);
    float* img = out.data() + f * height * width;
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x)
        if (sprite_covers(p.sprite, x - cx, y - cy, r)) img[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = fg;
  }
  return out;
}

/// Moving-sprite clips with an identity (sprite) and a motion label each.
/// Labels cycle so every identity/motion pair is equally represented; the
/// phase of each clip comes from the seed.
class ToyVideoDataset {
 public:
  ToyVideoDataset() = default;

  explicit ToyVideoDataset(const ToyDatasetSpec& spec) : spec_(spec) {
    if (spec.clips == 0 || spec.frames < 2) throw ConfigError("toy dataset: need clips >= 1 and frames >= 2");
    if (spec.k_id < 1 || spec.k_id > kMaxIdentities) {
      throw ConfigError("toy dataset: k_id must be in [1, " + std::to_string(kMaxIdentities) + "]");
    }
    if (spec.k_mo < 1 || spec.k_mo > kMaxMotions) {
      throw ConfigError("toy dataset: k_mo must be in [1, " + std::to_string(kMaxMotions) + "]");
    }
    const int r = sprite_radius(spec.height, spec.width);
    const Rng root(spec.seed);
    const std::size_t clip_size = spec.frames * spec.height * spec.width;
    std::vector<float> values(spec.clips * clip_size);
    for (std::size_t c = 0; c < spec.clips; ++c) {
      Rng rng = root.split(c);
      ClipParams p;
      p.sprite = static_cast<Sprite>(static_cast<int>(c % static_cast<std::size_t>(spec.k_id)));
      p.motion = static_cast<Motion>(static_cast<int>((c / static_cast<std::size_t>(spec.k_id)) %
                                                      static_cast<std::size_t>(spec.k_mo)));
      p.x0 = static_cast<int>(rng.uniform_int(r, static_cast<std::int64_t>(spec.width) - 1 - r));
      p.y0 = static_cast<int>(rng.uniform_int(r, static_cast<std::int64_t>(spec.height) - 1 - r));
      p.direction = rng.uniform_int(0, 1) ? 1 : -1;
      const auto clip = render_clip(p, spec.frames, spec.height, spec.width);
      std::copy(clip.begin(), clip.end(), values.begin() + static_cast<std::ptrdiff_t>(c * clip_size));
      params_.push_back(p);
      identity_.push_back(static_cast<int>(p.sprite));
      motion_.push_back(static_cast<int>(p.motion));
    }
    videos_ = Tensor<float>({spec.clips, spec.frames, 1, spec.height, spec.width}, std::move(values));
  }

  const ToyDatasetSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return spec_.clips; }
  FrameShape frame_shape() const noexcept { return {1, spec_.height, spec_.width}; }

  /// All clips as [clips,N,1,H,W].
  const Tensor<float>& videos() const noexcept { return videos_; }
  const std::vector<int>& identities() const noexcept { return identity_; }
  const std::vector<int>& motions() const noexcept { return motion_; }
  const ClipParams& params(std::size_t clip) const { return params_.at(clip); }

  /// Clips gathered into [B,N,1,H,W].
  Tensor<float> batch(std::span<const std::size_t> indices) const {
    const std::size_t clip_size = spec_.frames * spec_.height * spec_.width;
    std::vector<float> out(indices.size() * clip_size);
    auto v = videos_.data();
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= size()) throw InvalidArgument("toy dataset: clip index out of range");
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(indices[k] * clip_size), clip_size,
                  out.begin() + static_cast<std::ptrdiff_t>(k * clip_size));
    }
    return Tensor<float>({indices.size(), spec_.frames, 1, spec_.height, spec_.width}, std::move(out));
  }

  /// `count` clip indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(Rng& rng, std::size_t count) const {
    std::vector<std::size_t> idx(count);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(size()) - 1));
    return idx;
  }

  /// Every frame of every clip as [clips*N,1,H,W], the marginal frame set.
  Tensor<float> marginal_frames() const {
    return Tensor<float>({spec_.clips * spec_.frames, 1, spec_.height, spec_.width},
                         std::vector<float>(videos_.data().begin(), videos_.data().end()));
  }

  /// Clips [begin, end) as a new dataset view; used for held-out splits.
  ToyVideoDataset subset(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > size()) throw InvalidArgument("toy dataset: bad subset range");
    ToyVideoDataset out;
    out.spec_ = spec_;
    out.spec_.clips = end - begin;
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = begin + k;
    out.videos_ = batch(idx);
    out.params_.assign(params_.begin() + static_cast<std::ptrdiff_t>(begin), params_.begin() + static_cast<std::ptrdiff_t>(end));
    out.identity_.assign(identity_.begin() + static_cast<std::ptrdiff_t>(begin), identity_.begin() + static_cast<std::ptrdiff_t>(end));
    out.motion_.assign(motion_.begin() + static_cast<std::ptrdiff_t>(begin), motion_.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }

 private:
  ToyDatasetSpec spec_;
  Tensor<float> videos_;
  std::vector<ClipParams> params_;
  std::vector<int> identity_;
  std::vector<int> motion_;
};

inline ToyVideoDataset generate_toy_dataset(const ToyDatasetSpec& spec) { return ToyVideoDataset(spec); }

}  // namespace vidfuse
