// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidfuse/error.hpp"
#include "vidfuse/numerics/rng.hpp"
#include "vidfuse/numerics/tensor.hpp"
#include "vidfuse/schedule.hpp"

namespace vidfuse {

/// Per-frame share of the base component. The middle frame (index N/2,
/// 0-based) is the base frame and is pinned to 1.
class LambdaProfile {
 public:
  /// All non-middle frames at `value`, middle frame at 1.
  static LambdaProfile uniform(int frames, double value) {
    std::vector<double> v(static_cast<std::size_t>(frames > 0 ? frames : 0), value);
    if (frames > 0) v[static_cast<std::size_t>(frames / 2)] = 1.0;
    return LambdaProfile(std::move(v));
  }

  /// Explicit values; rejects a middle entry other than exactly 1.
  explicit LambdaProfile(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw InvalidArgument("LambdaProfile: need at least one frame");
    for (double v : values_)
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("LambdaProfile: lambda " + std::to_string(v) + " outside [0,1]");
    if (values_[static_cast<std::size_t>(mid())] != 1.0) {
      throw InvalidArgument("LambdaProfile: base frame " + std::to_string(mid()) + " must have lambda exactly 1");
    }
  }

  int frames() const noexcept { return static_cast<int>(values_.size()); }
  int mid() const noexcept { return frames() / 2; }
  double lambda(int i) const { return values_.at(static_cast<std::size_t>(i)); }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

struct FrameShape {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;

  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const FrameShape&, const FrameShape&) = default;
};

/// Which clips of a batch share noise draws. Clips with equal base ids get
/// one base draw; clips with equal residual ids get one set of residual draws.
struct NoiseAssignment {
  std::vector<int> base_group;
  std::vector<int> residual_group;

  static NoiseAssignment distinct(std::size_t clips) {
    NoiseAssignment a;
    for (std::size_t i = 0; i < clips; ++i) {
      a.base_group.push_back(static_cast<int>(i));
      a.residual_group.push_back(static_cast<int>(i));
    }
    return a;
  }
};

/// Shared base noise [B,1,C,H,W] and per-frame residual noise [B,N,C,H,W];
/// the residual of the middle frame is identically zero.
template <typename T>
struct DecomposedNoise {
  Tensor<T> base;
  Tensor<T> residuals;
};

/// Base frame x^0 = x^mid as [B,1,C,H,W] and deltas [B,N,C,H,W].
template <typename T>
struct FrameDecomposition {
  Tensor<T> base_frame;
  Tensor<T> deltas;
};

struct VideoDims {
  std::size_t clips = 0;
  std::size_t frames = 0;
  FrameShape frame;

  std::size_t frame_size() const noexcept { return frame.size(); }
};

template <typename T>
VideoDims video_dims(const Tensor<T>& video, const char* what = "video") {
  if (video.rank() != 5) throw ShapeError(std::string(what) + ": expected [B,N,C,H,W], got " + shape_string(video.shape()));
  return {video.dim(0), video.dim(1), {video.dim(2), video.dim(3), video.dim(4)}};
}

/// Frame i of every clip as [B,C,H,W] (no graph).
template <typename T>
Tensor<T> extract_frame(const Tensor<T>& video, std::size_t i) {
  const VideoDims d = video_dims(video);
  if (i >= d.frames) throw ShapeError("extract_frame: frame " + std::to_string(i) + " out of range");
  const std::size_t fs = d.frame_size();
  std::vector<T> out(d.clips * fs);
  auto v = video.data();
  for (std::size_t b = 0; b < d.clips; ++b)
    std::copy_n(v.begin() + (b * d.frames + i) * fs, fs, out.begin() + b * fs);
  return Tensor<T>({d.clips, d.frame.channels, d.frame.height, d.frame.width}, std::move(out));
}

namespace detail {

inline void check_profile(const LambdaProfile& profile, std::size_t frames, const char* op) {
  if (static_cast<std::size_t>(profile.frames()) != frames) {
    throw ShapeError(std::string(op) + ": profile has " + std::to_string(profile.frames()) + " frames, tensor has " +
                     std::to_string(frames));
  }
}

template <typename T>
void check_base_shape(const Tensor<T>& base, const VideoDims& d, const char* op) {
  if (base.shape() != Shape{d.clips, 1, d.frame.channels, d.frame.height, d.frame.width}) {
    throw ShapeError(std::string(op) + ": base noise shape " + shape_string(base.shape()) + " does not match video " +
                     shape_string(Shape{d.clips, d.frames, d.frame.channels, d.frame.height, d.frame.width}));
  }
}

}  // namespace detail

/// Draws base noise once per base group and residual noise per frame per
/// residual group, from two independent child streams of `rng`.
template <typename T>
DecomposedNoise<T> sample_decomposed_noise(std::size_t clips, const LambdaProfile& profile, const FrameShape& frame,
                                           const Rng& rng, const NoiseAssignment* assignment = nullptr) {
  const NoiseAssignment fallback = NoiseAssignment::distinct(clips);
  const NoiseAssignment& groups = assignment ? *assignment : fallback;
  if (groups.base_group.size() != clips || groups.residual_group.size() != clips) {
    throw ShapeError("sample_decomposed_noise: assignment covers " + std::to_string(groups.base_group.size()) +
                     " clips, batch has " + std::to_string(clips));
  }
  const std::size_t frames = static_cast<std::size_t>(profile.frames());
  const std::size_t fs = frame.size();
  const std::size_t mid = static_cast<std::size_t>(profile.mid());
  const Rng base_stream = rng.split(0);
  const Rng residual_stream = rng.split(1);
  std::vector<T> base(clips * fs);
  std::vector<T> residuals(clips * frames * fs, T(0));
  for (std::size_t b = 0; b < clips; ++b) {
    Rng draw = base_stream.split(static_cast<std::uint64_t>(groups.base_group[b]));
    draw.fill_normal(std::span<T>(base.data() + b * fs, fs));
    const Rng clip_residual = residual_stream.split(static_cast<std::uint64_t>(groups.residual_group[b]));
    for (std::size_t i = 0; i < frames; ++i) {
      if (i == mid) continue;
      Rng frame_draw = clip_residual.split(i);
      frame_draw.fill_normal(std::span<T>(residuals.data() + (b * frames + i) * fs, fs));
    }
  }
  return {Tensor<T>({clips, 1, frame.channels, frame.height, frame.width}, std::move(base)),
          Tensor<T>({clips, frames, frame.channels, frame.height, frame.width}, std::move(residuals))};
}

/// eps^i = sqrt(lambda^i) * b + sqrt(1 - lambda^i) * r^i.
template <typename T>
Tensor<T> compose_noise(const DecomposedNoise<T>& dn, const LambdaProfile& profile) {
  const VideoDims d = video_dims(dn.residuals, "compose_noise");
  detail::check_profile(profile, d.frames, "compose_noise");
  detail::check_base_shape(dn.base, d, "compose_noise");
  const std::size_t fs = d.frame_size();
  std::vector<T> out(dn.residuals.size());
  auto bv = dn.base.data();
  auto rv = dn.residuals.data();
  for (std::size_t i = 0; i < d.frames; ++i) {
    const T wb = static_cast<T>(std::sqrt(profile.lambda(static_cast<int>(i))));
    const T wr = static_cast<T>(std::sqrt(1.0 - profile.lambda(static_cast<int>(i))));
    for (std::size_t b = 0; b < d.clips; ++b) {
      const std::size_t o = (b * d.frames + i) * fs;
      for (std::size_t p = 0; p < fs; ++p) out[o + p] = wb * bv[b * fs + p] + wr * rv[o + p];
    }
  }
  return Tensor<T>(dn.residuals.shape(), std::move(out));
}

/// z_t = sqrt(alpha_hat_t) * x + sqrt(1 - alpha_hat_t) * eps with one step per clip.
template <typename T>
Tensor<T> diffuse_with_noise(const Tensor<T>& x, std::span<const int> steps, const Tensor<T>& eps,
                             const NoiseSchedule& s) {
  const VideoDims d = video_dims(x, "diffuse");
  if (eps.shape() != x.shape()) throw ShapeError("diffuse: noise " + shape_string(eps.shape()) + " vs video " + shape_string(x.shape()));
  if (steps.size() != d.clips) throw ShapeError("diffuse: need one step per clip");
  const std::size_t clip_size = d.frames * d.frame_size();
  std::vector<T> out(x.size());
  auto xv = x.data();
  auto ev = eps.data();
  for (std::size_t b = 0; b < d.clips; ++b) {
    const auto [sa, sn] = s.marginal_coeffs(steps[b]);
    const T a = static_cast<T>(sa), n = static_cast<T>(sn);
    for (std::size_t p = b * clip_size; p < (b + 1) * clip_size; ++p) out[p] = a * xv[p] + n * ev[p];
  }
  return Tensor<T>(x.shape(), std::move(out));
}

template <typename T>
Tensor<T> diffuse(const Tensor<T>& x, std::span<const int> steps, const DecomposedNoise<T>& dn, const NoiseSchedule& s,
                  const LambdaProfile& profile) {
  return diffuse_with_noise(x, steps, compose_noise(dn, profile), s);
}

template <typename T>
Tensor<T> diffuse(const Tensor<T>& x, int t, const DecomposedNoise<T>& dn, const NoiseSchedule& s,
                  const LambdaProfile& profile) {
  const std::vector<int> steps(video_dims(x, "diffuse").clips, t);
  return diffuse(x, std::span<const int>(steps), dn, s, profile);
}

/// One forward transition t-1 -> t with fresh base noise [B,1,...] shared
/// across frames and fresh residual noise [B,N,...].
template <typename T>
Tensor<T> step_transition(const Tensor<T>& z_prev, int t, const Tensor<T>& base_step, const Tensor<T>& residual_step,
                          const NoiseSchedule& s, const LambdaProfile& profile) {
  const VideoDims d = video_dims(z_prev, "step_transition");
  detail::check_profile(profile, d.frames, "step_transition");
  detail::check_base_shape(base_step, d, "step_transition");
  if (residual_step.shape() != z_prev.shape()) {
    throw ShapeError("step_transition: residual noise " + shape_string(residual_step.shape()) + " vs latent " +
                     shape_string(z_prev.shape()));
  }
  const double alpha = s.alpha(t);
  const Tensor<T> noise = compose_noise(DecomposedNoise<T>{base_step, residual_step}, profile);
  const T keep = static_cast<T>(std::sqrt(alpha)), add = static_cast<T>(std::sqrt(1.0 - alpha));
  std::vector<T> out(z_prev.size());
  auto zv = z_prev.data();
  auto nv = noise.data();
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = keep * zv[p] + add * nv[p];
  return Tensor<T>(z_prev.shape(), std::move(out));
}

/// Folds the step-t noise into the accumulated marginal noise:
/// b_t = (sqrt(alpha_t) sqrt(1 - alpha_hat_{t-1}) b_{t-1} + sqrt(1 - alpha_t) b'_t) / sqrt(1 - alpha_hat_t).
/// Applies equally to base and residual components.
template <typename T>
Tensor<T> accumulate_base(const Tensor<T>& b_prev, const Tensor<T>& b_step, const NoiseSchedule& s, int t) {
  if (t < 1) throw InvalidArgument("accumulate_base: step must be >= 1");
  if (b_prev.shape() != b_step.shape()) {
    throw ShapeError("accumulate_base: " + shape_string(b_prev.shape()) + " vs " + shape_string(b_step.shape()));
  }
  const double ah = s.alpha_hat(t);
  if (ah >= 1.0) throw InvalidArgument("accumulate_base: alpha_hat_t = 1 leaves no noise to normalize");
  const double denom = std::sqrt(1.0 - ah);
  const T c_prev = static_cast<T>(std::sqrt(s.alpha(t)) * std::sqrt(1.0 - s.alpha_hat(t - 1)) / denom);
  const T c_step = static_cast<T>(std::sqrt(1.0 - s.alpha(t)) / denom);
  std::vector<T> out(b_prev.size());
  auto pv = b_prev.data();
  auto sv = b_step.data();
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = c_prev * pv[p] + c_step * sv[p];
  return Tensor<T>(b_prev.shape(), std::move(out));
}

/// x^i = sqrt(lambda^i) x^0 + sqrt(1 - lambda^i) dx^i with x^0 the middle frame.
template <typename T>
FrameDecomposition<T> decompose_frames(const Tensor<T>& x, const LambdaProfile& profile) {
  const VideoDims d = video_dims(x, "decompose_frames");
  detail::check_profile(profile, d.frames, "decompose_frames");
  const std::size_t mid = static_cast<std::size_t>(profile.mid());
  for (std::size_t i = 0; i < d.frames; ++i) {
    if (i != mid && profile.lambda(static_cast<int>(i)) >= 1.0) {
      throw InvalidArgument("decompose_frames: lambda of frame " + std::to_string(i) + " is 1; residual undefined");
    }
  }
  const std::size_t fs = d.frame_size();
  Tensor<T> base = extract_frame(x, mid);
  std::vector<T> deltas(x.size(), T(0));
  auto xv = x.data();
  auto bv = base.data();
  for (std::size_t b = 0; b < d.clips; ++b)
    for (std::size_t i = 0; i < d.frames; ++i) {
      if (i == mid) continue;
      const double lam = profile.lambda(static_cast<int>(i));
      const T wb = static_cast<T>(std::sqrt(lam));
      const T inv = static_cast<T>(1.0 / std::sqrt(1.0 - lam));
      const std::size_t o = (b * d.frames + i) * fs;
      for (std::size_t p = 0; p < fs; ++p) deltas[o + p] = (xv[o + p] - wb * bv[b * fs + p]) * inv;
    }
  return {Tensor<T>({d.clips, 1, d.frame.channels, d.frame.height, d.frame.width},
                    std::vector<T>(bv.begin(), bv.end())),
          Tensor<T>(x.shape(), std::move(deltas))};
}

template <typename T>
Tensor<T> recompose_frames(const FrameDecomposition<T>& parts, const LambdaProfile& profile) {
  const VideoDims d = video_dims(parts.deltas, "recompose_frames");
  detail::check_profile(profile, d.frames, "recompose_frames");
  detail::check_base_shape(parts.base_frame, d, "recompose_frames");
  const std::size_t fs = d.frame_size();
  std::vector<T> out(parts.deltas.size());
  auto bv = parts.base_frame.data();
  auto dv = parts.deltas.data();
  for (std::size_t b = 0; b < d.clips; ++b)
    for (std::size_t i = 0; i < d.frames; ++i) {
      const double lam = profile.lambda(static_cast<int>(i));
      const T wb = static_cast<T>(std::sqrt(lam)), wd = static_cast<T>(std::sqrt(1.0 - lam));
      const std::size_t o = (b * d.frames + i) * fs;
      for (std::size_t p = 0; p < fs; ++p) out[o + p] = wb * bv[b * fs + p] + wd * dv[o + p];
    }
  return Tensor<T>(parts.deltas.shape(), std::move(out));
}

}  // namespace vidfuse
