// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vidfuse/error.hpp"
#include "vidfuse/models/embedding.hpp"
#include "vidfuse/numerics/ops.hpp"
#include "vidfuse/numerics/rng.hpp"
#include "vidfuse/numerics/tensor.hpp"

namespace vidfuse {

struct UNetConfig {
  std::size_t in_channels = 1;
  std::size_t width = 32;
  std::size_t groups = 8;
  std::size_t embed_dim = 32;
  std::size_t embed_hidden = 64;
  std::size_t cond_classes = 0;
  /// Non-zero enables the frame-index pathway (sinusoid of i projected and
  /// added to the step sinusoid).
  std::size_t max_frames = 0;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Two-level encoder-decoder: one residual block per level, skip connection
/// across the bottleneck, 3x3 convolutions, group norm, SiLU. Step (and
/// optional frame-index and class) embeddings are injected into every block.
template <typename T>
class UNet {
 public:
  UNet() = default;

  UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    const std::size_t c = cfg.width;
    if (c == 0 || c % cfg.groups != 0 || (2 * c) % cfg.groups != 0) {
      throw InvalidArgument("UNet: width " + std::to_string(c) + " not divisible by " + std::to_string(cfg.groups) +
                            " groups");
    }
    if (cfg.embed_dim % 2 != 0) throw InvalidArgument("UNet: embed_dim must be even");
    Rng rng(seed, 0x756e6574);
    const std::size_t d = cfg.embed_dim, e = cfg.embed_hidden;
    emb1_ = linear("embed.fc1", d, e, rng);
    emb2_ = linear("embed.fc2", e, e, rng);
    if (cfg.max_frames > 0) frame_proj_ = weight("embed.frame_proj", {d, d}, d, rng);
    if (cfg.cond_classes > 0) cond_table_ = weight("embed.class_table", {cfg.cond_classes, d}, cfg.cond_classes, rng);
    conv_in_ = conv("conv_in", cfg.in_channels, c, rng);
    down_ = block("down", c, rng);
    conv_mid_ = conv("conv_mid", c, 2 * c, rng);
    mid_ = block("mid", 2 * c, rng);
    conv_up_ = conv("conv_up", 3 * c, c, rng);
    up_ = block("up", c, rng);
    norm_out_ = norm("norm_out", c);
    conv_out_ = conv("conv_out", c, cfg.in_channels, rng);
    // Zero output layer: the initial noise prediction is exactly 0.
    for (auto& v : conv_out_.weight.mutable_data()) v = T(0);
  }

  const UNetConfig& config() const noexcept { return cfg_; }

  std::vector<NamedTensor<T>>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor<T>>& parameters() const noexcept { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Deep copy with independent storage.
  UNet clone() const {
    UNet copy = *this;
    for (auto& p : copy.params_) p.value = p.value.clone();
    copy.rebind();
    return copy;
  }

  /// x: [B,C,H,W]; steps, frames and labels hold one entry per batch item
  /// (frames/labels may be empty when the pathway is disabled).
  Tensor<T> forward(const Tensor<T>& x, std::span<const int> steps, std::span<const int> frames,
                    std::span<const int> labels) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels || x.dim(2) % 2 || x.dim(3) % 2) {
      throw ShapeError("UNet: input " + shape_string(x.shape()) + " is not [B," + std::to_string(cfg_.in_channels) +
                       ",even H,even W]");
    }
    const std::size_t batch = x.dim(0);
    if (steps.size() != batch) throw ShapeError("UNet: need one step per batch item");
    using namespace ops;

    Tensor<T> e = embedding_table<T>(steps, cfg_.embed_dim);
    if (cfg_.max_frames > 0) {
      if (frames.size() != batch) throw ShapeError("UNet: need one frame index per batch item");
      e = add(e, matmul(embedding_table<T>(frames, cfg_.embed_dim), frame_proj_));
    }
    if (cfg_.cond_classes > 0 && !labels.empty()) {
      if (labels.size() != batch) throw ShapeError("UNet: need one class label per batch item");
      std::vector<T> onehot(batch * cfg_.cond_classes, T(0));
      for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= cfg_.cond_classes) {
          throw InvalidArgument("UNet: class label " + std::to_string(labels[b]) + " out of range");
        }
        onehot[b * cfg_.cond_classes + static_cast<std::size_t>(labels[b])] = T(1);
      }
      e = add(e, matmul(Tensor<T>({batch, cfg_.cond_classes}, std::move(onehot)), cond_table_));
    }
    const Tensor<T> emb = silu(apply(emb2_, silu(apply(emb1_, e))));

    const Tensor<T> h0 = apply(conv_in_, x);
    const Tensor<T> h1 = apply(down_, h0, emb);
    Tensor<T> m = apply(conv_mid_, avg_pool2(h1));
    m = apply(mid_, m, emb);
    Tensor<T> u = apply(conv_up_, concat<T>({upsample2(m), h1}, 1));
    u = apply(up_, u, emb);
    return apply(conv_out_, silu(apply(norm_out_, u)));
  }

 private:
  struct Linear {
    Tensor<T> weight, bias;
  };
  struct Conv {
    Tensor<T> weight, bias;
  };
  struct Norm {
    Tensor<T> gamma, beta;
  };
  struct Block {
    Norm norm1;
    Conv conv1;
    Linear emb_proj;
    Norm norm2;
    Conv conv2;
  };

  Tensor<T> weight(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> v(shape_size(shape));
    for (auto& x : v) x = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    return add_param(name, Tensor<T>(std::move(shape), std::move(v)));
  }
  Tensor<T> zeros(const std::string& name, Shape shape) { return add_param(name, Tensor<T>::zeros(std::move(shape))); }
  Tensor<T> add_param(const std::string& name, Tensor<T> t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }
  Linear linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return {weight(name + ".weight", {in, out}, in, rng), zeros(name + ".bias", {out})};
  }
  Conv conv(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return {weight(name + ".weight", {out, in, 3, 3}, in * 9, rng), zeros(name + ".bias", {out})};
  }
  Norm norm(const std::string& name, std::size_t channels) {
    return {add_param(name + ".gamma", Tensor<T>::full({channels}, T(1))), zeros(name + ".beta", {channels})};
  }
  Block block(const std::string& name, std::size_t channels, Rng& rng) {
    Block b;
    b.norm1 = norm(name + ".norm1", channels);
    b.conv1 = conv(name + ".conv1", channels, channels, rng);
    b.emb_proj = linear(name + ".emb_proj", cfg_.embed_hidden, channels, rng);
    b.norm2 = norm(name + ".norm2", channels);
    b.conv2 = conv(name + ".conv2", channels, channels, rng);
    return b;
  }

  static Tensor<T> apply(const Linear& l, const Tensor<T>& x) { return ops::add(ops::matmul(x, l.weight), l.bias); }
  static Tensor<T> apply(const Conv& c, const Tensor<T>& x) { return ops::conv2d(x, c.weight, c.bias); }
  Tensor<T> apply(const Norm& n, const Tensor<T>& x) const { return ops::group_norm(x, n.gamma, n.beta, cfg_.groups); }
  Tensor<T> apply(const Block& b, const Tensor<T>& x, const Tensor<T>& emb) const {
    using namespace ops;
    Tensor<T> h = apply(b.conv1, silu(apply(b.norm1, x)));
    h = add_channel(h, apply(b.emb_proj, emb));
    h = apply(b.conv2, silu(apply(b.norm2, h)));
    return add(x, h);
  }

  // Re-points the layer handles at params_ after a deep copy. Relies on the
  // construction order being fixed.
  void rebind() {
    std::size_t k = 0;
    auto next = [&]() -> Tensor<T> { return params_.at(k++).value; };
    auto lin = [&](Linear& l) { l.weight = next(); l.bias = next(); };
    auto cv = [&](Conv& c) { c.weight = next(); c.bias = next(); };
    auto nm = [&](Norm& n) { n.gamma = next(); n.beta = next(); };
    auto blk = [&](Block& b) { nm(b.norm1); cv(b.conv1); lin(b.emb_proj); nm(b.norm2); cv(b.conv2); };
    lin(emb1_);
    lin(emb2_);
    if (cfg_.max_frames > 0) frame_proj_ = next();
    if (cfg_.cond_classes > 0) cond_table_ = next();
    cv(conv_in_);
    blk(down_);
    cv(conv_mid_);
    blk(mid_);
    cv(conv_up_);
    blk(up_);
    nm(norm_out_);
    cv(conv_out_);
  }

  UNetConfig cfg_;
  std::vector<NamedTensor<T>> params_;
  Linear emb1_, emb2_;
  Tensor<T> frame_proj_, cond_table_;
  Conv conv_in_, conv_mid_, conv_up_, conv_out_;
  Block down_, mid_, up_;
  Norm norm_out_;
};

}  // namespace vidfuse
