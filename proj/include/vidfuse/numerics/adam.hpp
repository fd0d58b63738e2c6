// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vidfuse/error.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

template <typename T>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// One bias-corrected Adam update. Moment buffers are created on first use
/// and must keep matching the parameter shapes afterwards.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), T(0));
      state.second_moment.emplace_back(p.size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state tracks a different parameter set");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].size() || state.first_moment[k].size() != params[k].size()) {
      throw ShapeError("adam_step: buffer size mismatch for parameter " + std::to_string(k) + " of shape " +
                       shape_string(params[k].shape()));
    }
    for (T g : grads[k])
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("adam_step: non-finite gradient");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(state.learning_rate / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto g = grads[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      data[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

/// Convenience overload reading each parameter's accumulated gradient.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  std::vector<std::span<const T>> grads;
  std::vector<std::vector<T>> zeros;
  zeros.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad()) {
      grads.push_back(p.grad());
    } else {
      zeros.emplace_back(p.size(), T(0));
      grads.push_back(zeros.back());
    }
  }
  adam_step<T>(params, std::span<const std::span<const T>>(grads), state);
}

}  // namespace vidfuse
