// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "vidfuse/error.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

/// Largest per-coordinate relative error between the reverse-mode gradient of
/// `f` with respect to `param` and a central difference with step `eps`:
/// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
///
/// `f` must rebuild its graph on every call and read `param` by handle.
inline double grad_check(const std::function<Tensor<double>()>& f, Tensor<double>& param, double eps = 1e-5) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) throw InvalidArgument("grad_check: eps must lie in [1e-6, 1e-4]");
  const bool had_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  Tensor<double> loss = f();
  backward(loss);
  std::vector<double> analytic(param.grad().begin(), param.grad().end());
  if (analytic.empty()) analytic.assign(param.size(), 0.0);

  double worst = 0.0;
  auto values = param.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    double plus, minus;
    {
      NoGradGuard guard;
      values[i] = saved + eps;
      plus = f().item();
      values[i] = saved - eps;
      minus = f().item();
    }
    values[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) throw NumericError("grad_check: objective is not finite");
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  param.zero_grad();
  param.set_requires_grad(had_flag);
  return worst;
}

}  // namespace vidfuse
