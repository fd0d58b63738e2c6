// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the test and acceptance binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vidfuse/vidfuse.hpp"

namespace vidfuse::testing {

template <typename T>
Tensor<T> random_normal(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<T> v(shape_size(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> random_uniform(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<T> v(shape_size(shape));
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return worst;
}

/// Iterates the one-step transition from x for every step of `s` and checks
/// each z_t against the marginal form driven by the accumulated noises.
/// Returns the largest absolute gap over all steps.
template <typename T>
double step_marginal_gap(const NoiseSchedule& s, const LambdaProfile& profile, std::size_t clips, const FrameShape& frame,
                         std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(profile.frames());
  const Tensor<T> x = random_uniform<T>({clips, n, frame.channels, frame.height, frame.width}, seed);
  Tensor<T> z = x;
  Tensor<T> b_acc, r_acc;
  const Rng root(seed + 1);
  double worst = 0;
  for (int t = 1; t <= s.steps(); ++t) {
    const DecomposedNoise<T> step_noise = sample_decomposed_noise<T>(clips, profile, frame, root.split(static_cast<std::uint64_t>(t)));
    z = step_transition(z, t, step_noise.base, step_noise.residuals, s, profile);
    if (t == 1) {
      b_acc = step_noise.base;
      r_acc = step_noise.residuals;
    } else {
      b_acc = accumulate_base(b_acc, step_noise.base, s, t);
      r_acc = accumulate_base(r_acc, step_noise.residuals, s, t);
    }
    const Tensor<T> marginal = diffuse(x, t, DecomposedNoise<T>{b_acc, r_acc}, s, profile);
    worst = std::max(worst, max_abs_diff(z, marginal));
  }
  return worst;
}

/// Noise predictors that know the forward noise used to build the latents.
/// For a given step they return the exact base and residual components.
template <typename T>
struct OracleBase {
  const Tensor<T>* base = nullptr;  // [B,1,C,H,W]
  Tensor<T> predict(const Tensor<T>& frame, std::span<const int>, std::span<const int> = {}) const {
    return Tensor<T>(frame.shape(), std::vector<T>(base->data().begin(), base->data().end()));
  }
};

template <typename T>
struct OracleResidual {
  const Tensor<T>* residuals = nullptr;  // [B,N,C,H,W]
  int frames = 0;
  /// Rows are ordered clip-major over the non-middle frames.
  Tensor<T> predict(const Tensor<T>& latents, std::span<const int>, std::span<const int> frame_index,
                    std::span<const int> = {}) const {
    const std::size_t rows = latents.dim(0), fs = latents.size() / rows;
    const std::size_t per_clip = static_cast<std::size_t>(frames - 1);
    std::vector<T> out(latents.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t b = r / per_clip;
      const auto i = static_cast<std::size_t>(frame_index[r]);
      std::copy_n(residuals->data().begin() + static_cast<std::ptrdiff_t>((b * static_cast<std::size_t>(frames) + i) * fs), fs,
                  out.begin() + static_cast<std::ptrdiff_t>(r * fs));
    }
    return Tensor<T>(latents.shape(), std::move(out));
  }
};

/// A generator pair returning zeros.
template <typename T>
struct ZeroBase {
  Tensor<T> predict(const Tensor<T>& frame, std::span<const int>, std::span<const int> = {}) const {
    return Tensor<T>::full(frame.shape(), T(0));
  }
};

template <typename T>
struct ZeroResidual {
  Tensor<T> predict(const Tensor<T>& latents, std::span<const int>, std::span<const int>, std::span<const int> = {}) const {
    return Tensor<T>::full(latents.shape(), T(0));
  }
};

}  // namespace vidfuse::testing
