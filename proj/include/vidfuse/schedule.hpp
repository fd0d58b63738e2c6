// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vidfuse/error.hpp"

namespace vidfuse {

/// Linear beta schedule with 1-based step indexing; step 0 is the clean
/// endpoint where the cumulative product is 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  int steps() const noexcept { return static_cast<int>(betas_.size()) - 1; }

  double beta(int t) const { return betas_[check_positive(t)]; }
  double alpha(int t) const { return alphas_[check_positive(t)]; }
  double alpha_hat(int t) const { return alpha_hats_[check(t)]; }

  /// (sqrt(alpha_hat_t), sqrt(1 - alpha_hat_t)).
  std::pair<double, double> marginal_coeffs(int t) const {
    const double a = alpha_hat(t);
    return {std::sqrt(a), std::sqrt(1.0 - a)};
  }

  /// Variance of the ancestral step's fresh noise at step t.
  double posterior_variance(int t) const {
    check_positive(t);
    return (1.0 - alpha_hats_[t - 1]) / (1.0 - alpha_hats_[t]) * betas_[t];
  }

  friend NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end);

 private:
  int check(int t) const {
    if (t < 0 || t > steps()) {
      throw InvalidArgument("schedule: step " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
    }
    return t;
  }
  int check_positive(int t) const {
    if (t < 1 || t > steps()) {
      throw InvalidArgument("schedule: step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    }
    return t;
  }

  // Index 0 holds the clean endpoint (beta 0, alpha 1, alpha_hat 1).
  std::vector<double> betas_{0.0};
  std::vector<double> alphas_{1.0};
  std::vector<double> alpha_hats_{1.0};
};

/// Betas interpolated linearly from beta_start (t=1) to beta_end (t=T).
inline NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("make_linear_schedule: need at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("make_linear_schedule: require 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    s.betas_.push_back(beta);
    s.alphas_.push_back(1.0 - beta);
    s.alpha_hats_.push_back(s.alpha_hats_.back() * (1.0 - beta));
  }
  return s;
}

/// Desk default: T=200 with the [1e-4, 0.02] range rescaled by 1000/T, so the
/// terminal cumulative product (~3e-5) matches a 1000-step schedule.
inline NoiseSchedule make_default_schedule() { return make_linear_schedule(200, 5e-4, 0.1); }

}  // namespace vidfuse
