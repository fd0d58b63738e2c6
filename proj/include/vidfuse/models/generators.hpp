// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vidfuse/diffusion.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/models/unet.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

struct ModelConfig {
  std::size_t channels_base = 32;
  std::size_t channels_residual = 16;
  std::size_t cond_classes = 0;
  std::size_t groups = 8;
  std::size_t embed_dim = 32;
};

/// Anything that predicts the shared base noise from one frame per clip.
template <typename G, typename T>
concept BaseDenoiser = requires(const G& g, const Tensor<T>& x, std::span<const int> steps, std::span<const int> cond) {
  { g.predict(x, steps, cond) } -> std::convertible_to<Tensor<T>>;
};

/// Anything that predicts per-frame residual noise from base-removed latents.
template <typename G, typename T>
concept ResidualDenoiser = requires(const G& g, const Tensor<T>& x, std::span<const int> steps,
                                    std::span<const int> frames, std::span<const int> cond) {
  { g.predict(x, steps, frames, cond) } -> std::convertible_to<Tensor<T>>;
};

namespace detail {

inline void check_steps(std::span<const int> steps, int max_step, const char* who) {
  for (int t : steps) {
    if (t < 0 || t > max_step) {
      throw InvalidArgument(std::string(who) + ": step " + std::to_string(t) + " outside [0, " +
                            std::to_string(max_step) + "]");
    }
  }
}

}  // namespace detail

/// Single-frame epsilon predictor. One call processes exactly one frame per
/// clip: input and output are [B,C,H,W].
template <typename T>
class BaseGenerator {
 public:
  BaseGenerator() = default;
  BaseGenerator(const ModelConfig& cfg, const FrameShape& frame, int max_step, std::uint64_t seed)
      : net_(net_config(cfg, frame), seed), max_step_(max_step) {}

  Tensor<T> predict(const Tensor<T>& frame, std::span<const int> steps, std::span<const int> cond = {}) const {
    detail::check_steps(steps, max_step_, "base_predict");
    return net_.forward(frame, steps, {}, cond);
  }

  int max_step() const noexcept { return max_step_; }
  UNet<T>& net() noexcept { return net_; }
  const UNet<T>& net() const noexcept { return net_; }

  BaseGenerator clone() const {
    BaseGenerator copy;
    copy.net_ = net_.clone();
    copy.max_step_ = max_step_;
    return copy;
  }

 private:
  static UNetConfig net_config(const ModelConfig& cfg, const FrameShape& frame) {
    UNetConfig u;
    u.in_channels = frame.channels;
    u.width = cfg.channels_base;
    u.groups = cfg.groups;
    u.embed_dim = cfg.embed_dim;
    u.embed_hidden = 2 * cfg.channels_base;
    u.cond_classes = cfg.cond_classes;
    return u;
  }

  UNet<T> net_;
  int max_step_ = 0;
};

/// Residual epsilon predictor conditioned on step and frame index. The base
/// frame (index N/2) has no residual and is rejected.
template <typename T>
class ResidualGenerator {
 public:
  ResidualGenerator() = default;
  ResidualGenerator(const ModelConfig& cfg, const FrameShape& frame, int frames, int max_step, std::uint64_t seed)
      : net_(net_config(cfg, frame, frames), seed), frames_(frames), max_step_(max_step) {}

  Tensor<T> predict(const Tensor<T>& latents, std::span<const int> steps, std::span<const int> frame_index,
                    std::span<const int> cond = {}) const {
    detail::check_steps(steps, max_step_, "residual_predict");
    for (int i : frame_index) {
      if (i < 0 || i >= frames_) throw InvalidArgument("residual_predict: frame " + std::to_string(i) + " out of range");
      if (i == frames_ / 2) throw InvalidArgument("residual_predict: base frame " + std::to_string(i) + " has no residual");
    }
    return net_.forward(latents, steps, frame_index, cond);
  }

  int frames() const noexcept { return frames_; }
  int max_step() const noexcept { return max_step_; }
  UNet<T>& net() noexcept { return net_; }
  const UNet<T>& net() const noexcept { return net_; }

  ResidualGenerator clone() const {
    ResidualGenerator copy;
    copy.net_ = net_.clone();
    copy.frames_ = frames_;
    copy.max_step_ = max_step_;
    return copy;
  }

 private:
  static UNetConfig net_config(const ModelConfig& cfg, const FrameShape& frame, int frames) {
    if (frames < 2) throw InvalidArgument("ResidualGenerator: need at least two frames");
    UNetConfig u;
    u.in_channels = frame.channels;
    u.width = cfg.channels_residual;
    u.groups = cfg.groups;
    u.embed_dim = cfg.embed_dim;
    u.embed_hidden = 2 * cfg.channels_residual;
    u.cond_classes = cfg.cond_classes;
    u.max_frames = static_cast<std::size_t>(frames);
    return u;
  }

  UNet<T> net_;
  int frames_ = 0;
  int max_step_ = 0;
};

static_assert(BaseDenoiser<BaseGenerator<float>, float>);
static_assert(ResidualDenoiser<ResidualGenerator<float>, float>);

}  // namespace vidfuse
