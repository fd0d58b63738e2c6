// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vidfuse/error.hpp"
#include "vidfuse/numerics/parallel.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse::ops {

namespace detail {

using vidfuse::detail::make_result;
using vidfuse::detail::Node;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
void accumulate(Node<T>& parent, const std::vector<T>& contribution) {
  if (!parent.requires_grad) return;
  auto& g = parent.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

/// Elementwise binary op where one operand may broadcast over the other's
/// leading axes (its shape is a suffix of the other's).
template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> broadcast_binary(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, DA da, DB db) {
  const bool a_big = is_suffix(b.shape(), a.shape());
  if (!a_big && !is_suffix(a.shape(), b.shape())) shape_mismatch(name, a.shape(), b.shape());
  const Shape out_shape = a_big ? a.shape() : b.shape();
  const std::size_t n = shape_size(out_shape);
  const std::size_t na = a.size(), nb = b.size();
  // Index of the smaller operand is i % small; walk it as (outer, inner).
  const std::size_t inner = std::min(na, nb);
  const std::size_t outer = inner == 0 ? 0 : n / inner;
  std::vector<T> out(n);
  const T* av = a.data().data();
  const T* bv = b.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    const T* ap = na == n ? av + o * inner : av;
    const T* bp = nb == n ? bv + o * inner : bv;
    T* dst = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] = fwd(ap[i], bp[i]);
  }
  return make_result<T>(out_shape, std::move(out), {a, b}, [na, nb, n, inner, outer, da, db](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const T* g = self.grad.data();
    if (pa.requires_grad) {
      T* ga = pa.ensure_grad().data();
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t ao = na == n ? o * inner : 0, bo = nb == n ? o * inner : 0;
        for (std::size_t i = 0; i < inner; ++i)
          ga[ao + i] += da(g[o * inner + i], pa.data[ao + i], pb.data[bo + i]);
      }
    }
    if (pb.requires_grad) {
      T* gb = pb.ensure_grad().data();
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t ao = na == n ? o * inner : 0, bo = nb == n ? o * inner : 0;
        for (std::size_t i = 0; i < inner; ++i)
          gb[bo + i] += db(g[o * inner + i], pa.data[ao + i], pb.data[bo + i]);
      }
    }
  });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [s](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T(2) * p.data[i] * self.grad[i];
  });
}

/// Scales row r of `a` (viewed as [rows, size/rows]) by the constant coeffs[r].
template <typename T>
Tensor<T> mul_rows(const Tensor<T>& a, std::vector<T> coeffs) {
  const std::size_t rows = coeffs.size();
  if (rows == 0 || a.size() % rows != 0) {
    throw ShapeError("mul_rows: " + std::to_string(rows) + " coefficients do not tile shape " + shape_string(a.shape()));
  }
  const std::size_t inner = a.size() / rows;
  std::vector<T> out(a.size());
  auto av = a.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < inner; ++j) out[r * inner + j] = coeffs[r] * av[r * inner + j];
  return detail::make_result<T>(a.shape(), std::move(out), {a},
                                [coeffs = std::move(coeffs), inner](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t r = 0; r < coeffs.size(); ++r)
                                    for (std::size_t j = 0; j < inner; ++j)
                                      g[r * inner + j] += coeffs[r] * self.grad[r * inner + j];
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  return detail::make_result<T>(Shape{}, {total}, {a}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) detail::shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  detail::MatMap<T>(out.data(), m, n).noalias() =
      detail::ConstMatMap<T>(a.data().data(), m, k) * detail::ConstMatMap<T>(b.data().data(), k, n);
  return detail::make_result<T>(Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::ConstMatMap<T> g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      detail::MatMap<T>(pa.ensure_grad().data(), m, k).noalias() +=
          g * detail::ConstMatMap<T>(pb.data.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      detail::MatMap<T>(pb.ensure_grad().data(), k, n).noalias() +=
          detail::ConstMatMap<T>(pa.data.data(), m, k).transpose() * g;
    }
  });
}

namespace detail {

// Column matrix [channels*9, height*width] for a 3x3 window with zero padding.
template <typename T>
void im2col3x3(const T* img, std::size_t channels, std::size_t h, std::size_t w, T* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + ((c * 9) + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        // Output columns [x0, x1) read source column x + kx - 1.
        const std::size_t x0 = kx == 0 ? 1 : 0;
        const std::size_t x1 = kx == 2 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          T* dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * w + kx - 1;
          if (x0 == 1) dst[0] = T(0);
          if (x1 == w - 1) dst[w - 1] = T(0);
          std::copy(src + x0, src + x1, dst + x0);
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* col, std::size_t channels, std::size_t h, std::size_t w, T* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + ((c * 9) + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const std::size_t x0 = kx == 0 ? 1 : 0;
        const std::size_t x1 = kx == 2 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(sy) * w + kx - 1;
          const T* src = row + y * w;
          for (std::size_t x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace detail

/// 3x3 convolution, stride 1, zero "same" padding.
/// x: [B, Cin, H, W], weight: [Cout, Cin, 3, 3], bias: [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1) || weight.dim(2) != 3 || weight.dim(3) != 3) {
    detail::shape_mismatch("conv2d", x.shape(), weight.shape());
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) detail::shape_mismatch("conv2d(bias)", weight.shape(), bias.shape());
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = weight.dim(0);
  const std::size_t hw = h * w, kdim = cin * 9;
  std::vector<T> out(batch * cout * hw);
  const T* xv = x.data().data();
  const T* wv = weight.data().data();
  const T* bv = bias.data().data();
#pragma omp parallel num_threads(worker_count())
  {
    std::vector<T> col(kdim * hw);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
      detail::im2col3x3(xv + b * cin * hw, cin, h, w, col.data());
      detail::MatMap<T> o(out.data() + b * cout * hw, cout, hw);
      o.noalias() = detail::ConstMatMap<T>(wv, cout, kdim) * detail::ConstMatMap<T>(col.data(), kdim, hw);
      for (std::size_t c = 0; c < cout; ++c) o.row(c).array() += bv[c];
    }
  }
  return detail::make_result<T>(
      Shape{batch, cout, h, w}, std::move(out), {x, weight, bias},
      [batch, cin, cout, h, w, hw, kdim](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const T* g = self.grad.data();
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < cout; ++c) {
              const T* row = g + (b * cout + c) * hw;
              T acc = 0;
              for (std::size_t i = 0; i < hw; ++i) acc += row[i];
              gb[c] += acc;
            }
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
#pragma omp parallel num_threads(worker_count())
          {
            std::vector<T> dcol(kdim * hw);
#pragma omp for schedule(static)
            for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
              detail::MatMap<T>(dcol.data(), kdim, hw).noalias() =
                  detail::ConstMatMap<T>(pw.data.data(), cout, kdim).transpose() *
                  detail::ConstMatMap<T>(g + b * cout * hw, cout, hw);
              detail::col2im3x3(dcol.data(), cin, h, w, gx.data() + b * cin * hw);
            }
          }
        }
        if (pw.requires_grad) {
          // Serial over the batch so the reduction order never depends on threads.
          auto& gw = pw.ensure_grad();
          std::vector<T> col(kdim * hw);
          detail::MatMap<T> gwm(gw.data(), cout, kdim);
          for (std::size_t b = 0; b < batch; ++b) {
            detail::im2col3x3(px.data.data() + b * cin * hw, cin, h, w, col.data());
            gwm.noalias() += detail::ConstMatMap<T>(g + b * cout * hw, cout, hw) *
                             detail::ConstMatMap<T>(col.data(), kdim, hw).transpose();
          }
        }
      });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  // Scalar loop: vectorised exp would make results depend on buffer alignment.
  std::vector<T> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / (T(1) + std::exp(-xv[i]));
  return detail::make_result<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = p.data[i];
      const T sig = T(1) / (T(1) + std::exp(-v));
      g[i] += self.grad[i] * sig * (T(1) + v * (T(1) - sig));
    }
  });
}

/// Group normalization over (channels-in-group, H, W) with per-channel affine.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::size_t groups,
                     T eps = T(1e-5)) {
  if (x.rank() != 4) throw ShapeError("group_norm: expected [B,C,H,W], got " + shape_string(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups == 0 || channels % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(channels) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    detail::shape_mismatch("group_norm(affine)", x.shape(), gamma.shape());
  }
  const std::size_t per_group = channels / groups;
  const std::size_t count = per_group * hw;
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(batch * groups);
  std::vector<T> out(x.size());
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const std::size_t base = (b * channels + grp * per_group) * hw;
      T mu = 0;
      for (std::size_t i = 0; i < count; ++i) mu += xv[base + i];
      mu /= static_cast<T>(count);
      T var = 0;
      for (std::size_t i = 0; i < count; ++i) {
        const T d = xv[base + i] - mu;
        var += d * d;
      }
      var /= static_cast<T>(count);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[b * groups + grp] = is;
      for (std::size_t cc = 0; cc < per_group; ++cc) {
        const std::size_t c = grp * per_group + cc;
        const std::size_t o = base + cc * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T xh = (xv[o + i] - mu) * is;
          xhat[o + i] = xh;
          out[o + i] = gv[c] * xh + bv[c];
        }
      }
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, groups, per_group, hw,
       count](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& dy = self.grad;
        if (pg.requires_grad || pb.requires_grad) {
          auto& gg = pg.ensure_grad();
          auto& gb = pb.ensure_grad();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t base = (b * channels + c) * hw;
              T sg = 0, sb = 0;
              for (std::size_t i = 0; i < hw; ++i) {
                sg += dy[base + i] * xhat[base + i];
                sb += dy[base + i];
              }
              gg[c] += sg;
              gb[c] += sb;
            }
        }
        if (!px.requires_grad) return;
        auto& gx = px.ensure_grad();
        const auto& gamma_v = pg.data;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t grp = 0; grp < groups; ++grp) {
            const std::size_t base = (b * channels + grp * per_group) * hw;
            T mean_d = 0, mean_dx = 0;
            for (std::size_t cc = 0; cc < per_group; ++cc) {
              const T gm = gamma_v[grp * per_group + cc];
              const std::size_t o = base + cc * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                const T d = dy[o + i] * gm;
                mean_d += d;
                mean_dx += d * xhat[o + i];
              }
            }
            mean_d /= static_cast<T>(count);
            mean_dx /= static_cast<T>(count);
            const T is = inv_std[b * groups + grp];
            for (std::size_t cc = 0; cc < per_group; ++cc) {
              const T gm = gamma_v[grp * per_group + cc];
              const std::size_t o = base + cc * hw;
              for (std::size_t i = 0; i < hw; ++i) gx[o + i] += is * (dy[o + i] * gm - mean_d - xhat[o + i] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_size(shape) != x.size()) detail::shape_mismatch("reshape", x.shape(), shape);
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {x}, [](detail::Node<T>& self) {
    detail::accumulate(*self.parents[0], self.grad);
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(ref));
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = (d == axis) || s[d] == ref[d];
    if (!ok) detail::shape_mismatch("concat", ref, s);
    widths.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total_axis;
  const std::size_t row = total_axis * inner;
  std::vector<T> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * widths[k], widths[k], out.begin() + o * row + offset);
    offset += widths[k];
  }
  return detail::make_result<T>(out_shape, std::move(out), parts, [widths, outer, row](detail::Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < widths[k]; ++j) g[o * widths[k] + j] += self.grad[o * row + off + j];
      }
      off += widths[k];
    }
  });
}

/// Elements [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " invalid for " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t in_row = s[axis] * inner, out_row = (end - begin) * inner, off = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<T> out(outer * out_row);
  auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(xv.begin() + o * in_row + off, out_row, out.begin() + o * out_row);
  return detail::make_result<T>(out_shape, std::move(out), {x}, [outer, in_row, out_row, off](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < out_row; ++j) g[o * in_row + off + j] += self.grad[o * out_row + j];
  });
}

/// 2x2 average pooling on [B,C,H,W] with even H and W.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) % 2 || x.dim(3) % 2) throw ShapeError("avg_pool2: needs [B,C,2h,2w], got " + shape_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
  std::vector<T> out(planes * oh * ow);
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t c = 0; c < ow; ++c) {
        const std::size_t i = p * h * w + 2 * y * w + 2 * c;
        out[(p * oh + y) * ow + c] = T(0.25) * (xv[i] + xv[i + 1] + xv[i + w] + xv[i + w + 1]);
      }
  return detail::make_result<T>(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                                [planes, h, w, oh, ow](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t p = 0; p < planes; ++p)
                                    for (std::size_t y = 0; y < oh; ++y)
                                      for (std::size_t c = 0; c < ow; ++c) {
                                        const T d = T(0.25) * self.grad[(p * oh + y) * ow + c];
                                        const std::size_t i = p * h * w + 2 * y * w + 2 * c;
                                        g[i] += d;
                                        g[i + 1] += d;
                                        g[i + w] += d;
                                        g[i + w + 1] += d;
                                      }
                                });
}

/// Nearest-neighbour 2x upsampling on [B,C,H,W].
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("upsample2: needs [B,C,H,W], got " + shape_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), oh = 2 * h, ow = 2 * w;
  std::vector<T> out(planes * oh * ow);
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t c = 0; c < ow; ++c) out[(p * oh + y) * ow + c] = xv[(p * h + y / 2) * w + c / 2];
  return detail::make_result<T>(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                                [planes, h, w, oh, ow](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t p = 0; p < planes; ++p)
                                    for (std::size_t y = 0; y < oh; ++y)
                                      for (std::size_t c = 0; c < ow; ++c)
                                        g[(p * h + y / 2) * w + c / 2] += self.grad[(p * oh + y) * ow + c];
                                });
}

/// x: [B,C,H,W] plus v: [B,C] broadcast over the spatial axes.
template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& v) {
  if (x.rank() != 4 || v.rank() != 2 || v.dim(0) != x.dim(0) || v.dim(1) != x.dim(1)) {
    detail::shape_mismatch("add_channel", x.shape(), v.shape());
  }
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.data().begin(), x.data().end());
  auto vv = v.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] += vv[p];
  return detail::make_result<T>(x.shape(), std::move(out), {x, v}, [planes, hw](detail::Node<T>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    auto& pv = *self.parents[1];
    if (!pv.requires_grad) return;
    auto& g = pv.ensure_grad();
    for (std::size_t p = 0; p < planes; ++p) {
      T acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += self.grad[p * hw + i];
      g[p] += acc;
    }
  });
}

/// Graph-cutting identity: forward value kept, gradient blocked.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
  return x.detach();
}

}  // namespace vidfuse::ops
