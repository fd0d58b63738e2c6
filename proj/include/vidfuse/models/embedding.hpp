// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vidfuse/error.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

/// Interleaved sinusoidal features (sin, cos) at geometric frequencies
/// 10000^(-k/(dim/2)), k = 0 .. dim/2-1.
inline std::vector<double> make_embedding(long value, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw InvalidArgument("make_embedding: dim must be even and positive");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    const double arg = static_cast<double>(value) * freq;
    out[2 * k] = std::sin(arg);
    out[2 * k + 1] = std::cos(arg);
  }
  return out;
}

/// Row-stacked embeddings [values.size(), dim] as a constant tensor.
template <typename T>
Tensor<T> embedding_table(std::span<const int> values, std::size_t dim) {
  std::vector<T> out;
  out.reserve(values.size() * dim);
  for (int v : values)
    for (double e : make_embedding(v, dim)) out.push_back(static_cast<T>(e));
  return Tensor<T>({values.size(), dim}, std::move(out));
}

}  // namespace vidfuse
