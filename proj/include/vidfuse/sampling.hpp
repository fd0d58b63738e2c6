// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidfuse/diffusion.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/models/generators.hpp"
#include "vidfuse/numerics/rng.hpp"
#include "vidfuse/numerics/tensor.hpp"
#include "vidfuse/schedule.hpp"
#include "vidfuse/training.hpp"

namespace vidfuse {

enum class SamplerKind { kDdim, kDdpm };

inline std::string to_string(SamplerKind k) { return k == SamplerKind::kDdim ? "ddim" : "ddpm"; }

inline SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "ddim") return SamplerKind::kDdim;
  if (s == "ddpm") return SamplerKind::kDdpm;
  throw ConfigError("unknown sampler kind '" + s + "' (expected ddim or ddpm)");
}

/// tau_k = round(k*T/S) for k = 1..S; strictly increasing and ending at T.
inline std::vector<int> uniform_tau(int max_step, int count) {
  if (count < 1 || count > max_step) {
    throw InvalidArgument("uniform_tau: need 1 <= steps <= " + std::to_string(max_step) + ", got " + std::to_string(count));
  }
  std::vector<int> tau;
  for (int k = 1; k <= count; ++k) {
    tau.push_back(static_cast<int>(std::lround(static_cast<double>(k) * max_step / count)));
  }
  return tau;
}

template <typename T>
struct SamplerConfig {
  SamplerKind kind = SamplerKind::kDdim;
  /// Number of DDIM steps S; ignored for DDPM (which visits every step) and
  /// when `tau` is given explicitly.
  int steps = 50;
  std::vector<int> tau;
  double eta = 0.0;
  std::uint64_t seed = 0;
  bool clip_x0 = true;
  /// Terminal base noise, [B,1,C,H,W] or [1,1,C,H,W] (shared by every clip).
  std::optional<Tensor<T>> base_noise;
  /// Terminal residual noise, [B,N,C,H,W] or [1,N,C,H,W].
  std::optional<Tensor<T>> residual_noise;
  /// Class labels, one per clip, when the generators are conditioned.
  std::vector<int> cond;

  /// The visited steps in increasing order.
  std::vector<int> schedule_steps(int max_step) const {
    if (kind == SamplerKind::kDdpm) return uniform_tau(max_step, max_step);
    if (tau.empty()) return uniform_tau(max_step, steps);
    for (std::size_t k = 0; k < tau.size(); ++k) {
      if (tau[k] < 1 || tau[k] > max_step || (k > 0 && tau[k] <= tau[k - 1])) {
        throw InvalidArgument("sampler: tau must be strictly increasing within [1, T]");
      }
    }
    if (tau.back() != max_step) throw InvalidArgument("sampler: tau must end at T");
    return tau;
  }

  void validate() const {
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("sampler: eta must lie in [0,1]");
  }
};

/// Forward-pass accounting for one sampling run. base_calls counts base
/// generator invocations (one middle frame per clip each); residual frame
/// passes count non-middle frames per clip pushed through the residual
/// generator.
struct PassCounts {
  long base_calls = 0;
  long residual_frame_passes = 0;
  long steps = 0;
};

/// z'^i = z^i - sqrt(lambda^i) sqrt(1 - alpha_hat_t) * base_pred for every
/// non-middle frame, with one step per clip; returns [B,N-1,C,H,W] in frame
/// order.
template <typename T>
Tensor<T> remove_base(const Tensor<T>& z, const Tensor<T>& base_pred, std::span<const int> steps,
                      const NoiseSchedule& s, const LambdaProfile& profile) {
  const VideoDims d = video_dims(z, "remove_base");
  detail::check_profile(profile, d.frames, "remove_base");
  if (base_pred.shape() != Shape{d.clips, d.frame.channels, d.frame.height, d.frame.width}) {
    throw ShapeError("remove_base: base prediction " + shape_string(base_pred.shape()) + " is not one frame of " +
                     shape_string(z.shape()));
  }
  if (steps.size() != d.clips) throw ShapeError("remove_base: need one step per clip");
  const std::size_t fs = d.frame_size();
  const std::vector<int> frames = nonmid_frames(profile);
  std::vector<T> out(d.clips * frames.size() * fs);
  auto zv = z.data();
  auto bv = base_pred.data();
  for (std::size_t b = 0; b < d.clips; ++b) {
    const double noise = std::sqrt(1.0 - s.alpha_hat(steps[b]));
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const T c = static_cast<T>(std::sqrt(profile.lambda(frames[k])) * noise);
      const std::size_t src = (b * d.frames + static_cast<std::size_t>(frames[k])) * fs;
      const std::size_t dst = (b * frames.size() + k) * fs;
      for (std::size_t p = 0; p < fs; ++p) out[dst + p] = zv[src + p] - c * bv[b * fs + p];
    }
  }
  return Tensor<T>({d.clips, frames.size(), d.frame.channels, d.frame.height, d.frame.width}, std::move(out));
}

template <typename T>
Tensor<T> remove_base(const Tensor<T>& z, const Tensor<T>& base_pred, int t, const NoiseSchedule& s,
                      const LambdaProfile& profile) {
  const std::vector<int> steps(video_dims(z, "remove_base").clips, t);
  return remove_base(z, base_pred, std::span<const int>(steps), s, profile);
}

/// Composed prediction for frame i: base_pred at the middle frame, otherwise
/// sqrt(lambda^i) base_pred + sqrt(1 - lambda^i) residual_pred.
template <typename T>
Tensor<T> compose_eps(const Tensor<T>& base_pred, const Tensor<T>& residual_pred, const LambdaProfile& profile, int i) {
  if (i < 0 || i >= profile.frames()) throw InvalidArgument("compose_eps: frame index out of range");
  if (i == profile.mid()) return base_pred.detach();
  if (base_pred.shape() != residual_pred.shape()) {
    throw ShapeError("compose_eps: " + shape_string(base_pred.shape()) + " vs " + shape_string(residual_pred.shape()));
  }
  const T wb = static_cast<T>(std::sqrt(profile.lambda(i)));
  const T wr = static_cast<T>(std::sqrt(1.0 - profile.lambda(i)));
  std::vector<T> out(base_pred.size());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = wb * base_pred[p] + wr * residual_pred[p];
  return Tensor<T>(base_pred.shape(), std::move(out));
}

/// Whole-video composition: base_pred [B,C,H,W] and residual_pred
/// [B,N-1,C,H,W] (non-middle frames in order) to eps_hat [B,N,C,H,W].
template <typename T>
Tensor<T> compose_eps(const Tensor<T>& base_pred, const Tensor<T>& residual_pred, const LambdaProfile& profile) {
  const VideoDims rd = video_dims(residual_pred, "compose_eps");
  const std::size_t frames = static_cast<std::size_t>(profile.frames());
  if (rd.frames + 1 != frames || base_pred.shape() != Shape{rd.clips, rd.frame.channels, rd.frame.height, rd.frame.width}) {
    throw ShapeError("compose_eps: base " + shape_string(base_pred.shape()) + " and residual " +
                     shape_string(residual_pred.shape()) + " do not fit " + std::to_string(frames) + " frames");
  }
  const std::size_t fs = rd.frame_size(), mid = static_cast<std::size_t>(profile.mid());
  std::vector<T> out(rd.clips * frames * fs);
  auto bv = base_pred.data();
  auto rv = residual_pred.data();
  for (std::size_t b = 0; b < rd.clips; ++b)
    for (std::size_t i = 0, k = 0; i < frames; ++i) {
      T* dst = out.data() + (b * frames + i) * fs;
      const T* base_px = bv.data() + b * fs;
      if (i == mid) {
        std::copy_n(base_px, fs, dst);
        continue;
      }
      const T wb = static_cast<T>(std::sqrt(profile.lambda(static_cast<int>(i))));
      const T wr = static_cast<T>(std::sqrt(1.0 - profile.lambda(static_cast<int>(i))));
      const T* res_px = rv.data() + (b * rd.frames + k++) * fs;
      for (std::size_t p = 0; p < fs; ++p) dst[p] = wb * base_px[p] + wr * res_px[p];
    }
  return Tensor<T>({rd.clips, frames, rd.frame.channels, rd.frame.height, rd.frame.width}, std::move(out));
}

/// DDIM update t -> t_prev (t_prev may be 0). `fresh` supplies the noise
/// added when sigma > 0; if absent it is drawn i.i.d. from `rng`.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& z, const Tensor<T>& eps_hat, int t, int t_prev, const NoiseSchedule& s,
                    double eta, Rng* rng = nullptr, bool clip_x0 = true, const Tensor<T>* fresh = nullptr) {
  if (t_prev >= t) throw InvalidArgument("ddim_step: t_prev must be below t");
  if (z.shape() != eps_hat.shape()) throw ShapeError("ddim_step: " + shape_string(z.shape()) + " vs " + shape_string(eps_hat.shape()));
  const double ah = s.alpha_hat(t), ah_prev = s.alpha_hat(t_prev);
  const double sigma = eta * std::sqrt((1.0 - ah_prev) / (1.0 - ah)) * std::sqrt(1.0 - ah / ah_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ah_prev - sigma * sigma));
  const double inv_sa = 1.0 / std::sqrt(ah), sn = std::sqrt(1.0 - ah), sa_prev = std::sqrt(ah_prev);
  std::vector<T> noise;
  if (sigma > 0.0) {
    if (fresh) {
      if (fresh->shape() != z.shape()) throw ShapeError("ddim_step: fresh noise shape mismatch");
      noise.assign(fresh->data().begin(), fresh->data().end());
    } else {
      if (!rng) throw InvalidArgument("ddim_step: eta > 0 needs a random source");
      noise.resize(z.size());
      rng->fill_normal(std::span<T>(noise));
    }
  }
  std::vector<T> out(z.size());
  auto zv = z.data();
  auto ev = eps_hat.data();
  for (std::size_t p = 0; p < out.size(); ++p) {
    double x0 = (static_cast<double>(zv[p]) - sn * static_cast<double>(ev[p])) * inv_sa;
    if (clip_x0) x0 = std::clamp(x0, -1.0, 1.0);
    double v = sa_prev * x0 + dir * static_cast<double>(ev[p]);
    if (sigma > 0.0) v += sigma * static_cast<double>(noise[p]);
    out[p] = static_cast<T>(v);
  }
  return Tensor<T>(z.shape(), std::move(out));
}

/// Ancestral step t -> t-1 with the posterior mean in epsilon form; no noise
/// is added at t = 1.
template <typename T>
Tensor<T> ddpm_step(const Tensor<T>& z, const Tensor<T>& eps_hat, int t, const NoiseSchedule& s, Rng* rng = nullptr,
                    const Tensor<T>* fresh = nullptr) {
  if (z.shape() != eps_hat.shape()) throw ShapeError("ddpm_step: " + shape_string(z.shape()) + " vs " + shape_string(eps_hat.shape()));
  const double beta = s.beta(t), alpha = s.alpha(t), ah = s.alpha_hat(t);
  const double coef = beta / std::sqrt(1.0 - ah), inv = 1.0 / std::sqrt(alpha);
  const double sigma = t > 1 ? std::sqrt(s.posterior_variance(t)) : 0.0;
  std::vector<T> noise;
  if (sigma > 0.0) {
    if (fresh) {
      if (fresh->shape() != z.shape()) throw ShapeError("ddpm_step: fresh noise shape mismatch");
      noise.assign(fresh->data().begin(), fresh->data().end());
    } else {
      if (!rng) throw InvalidArgument("ddpm_step: t > 1 needs a random source");
      noise.resize(z.size());
      rng->fill_normal(std::span<T>(noise));
    }
  }
  std::vector<T> out(z.size());
  auto zv = z.data();
  auto ev = eps_hat.data();
  for (std::size_t p = 0; p < out.size(); ++p) {
    double v = inv * (static_cast<double>(zv[p]) - coef * static_cast<double>(ev[p]));
    if (sigma > 0.0) v += sigma * static_cast<double>(noise[p]);
    out[p] = static_cast<T>(v);
  }
  return Tensor<T>(z.shape(), std::move(out));
}

/// One composed noise prediction for all frames of z (one step per clip): a
/// single base call on the middle frames, base removal, one batched residual
/// call.
template <typename T, BaseDenoiser<T> B, ResidualDenoiser<T> R>
Tensor<T> predict_noise(const Tensor<T>& z, std::span<const int> steps, const B& base, const R& resid,
                        const NoiseSchedule& s, const LambdaProfile& profile, std::span<const int> cond = {},
                        PassCounts* counts = nullptr) {
  NoGradGuard no_grad;
  const VideoDims d = video_dims(z, "predict_noise");
  const Tensor<T> base_pred = base.predict(extract_frame(z, static_cast<std::size_t>(profile.mid())), steps, cond);
  const Tensor<T> z_prime = remove_base(z, base_pred, steps, s, profile);
  const std::vector<int> frames = nonmid_frames(profile);
  std::vector<int> row_steps, row_frames, row_cond;
  for (std::size_t b = 0; b < d.clips; ++b)
    for (int i : frames) {
      row_steps.push_back(steps[b]);
      row_frames.push_back(i);
      if (!cond.empty()) row_cond.push_back(cond[b]);
    }
  const Tensor<T> flat(Shape{d.clips * frames.size(), d.frame.channels, d.frame.height, d.frame.width},
                       std::vector<T>(z_prime.data().begin(), z_prime.data().end()));
  const Tensor<T> r = resid.predict(flat, row_steps, row_frames, row_cond);
  if (counts) {
    counts->base_calls += 1;
    counts->residual_frame_passes += static_cast<long>(frames.size());
  }
  return compose_eps(base_pred, Tensor<T>(z_prime.shape(), std::vector<T>(r.data().begin(), r.data().end())), profile);
}

template <typename T, BaseDenoiser<T> B, ResidualDenoiser<T> R>
Tensor<T> predict_noise(const Tensor<T>& z, int t, const B& base, const R& resid, const NoiseSchedule& s,
                        const LambdaProfile& profile, std::span<const int> cond = {}, PassCounts* counts = nullptr) {
  const std::vector<int> steps(video_dims(z, "predict_noise").clips, t);
  return predict_noise<T>(z, std::span<const int>(steps), base, resid, s, profile, cond, counts);
}

template <typename T>
struct SampleResult {
  Tensor<T> video;           // [B,N,C,H,W] in [-1,1]
  Tensor<T> base_noise;      // terminal b_T [B,1,C,H,W]
  Tensor<T> residual_noise;  // terminal r_T [B,N,C,H,W]
  PassCounts counts;
};

namespace detail {

// Expands a [1,...] tensor to `clips` copies; a [clips,...] tensor passes through.
template <typename T>
Tensor<T> expand_clips(const Tensor<T>& t, const Shape& want, const char* what) {
  if (t.shape() == want) return t.detach();
  Shape one = want;
  one[0] = 1;
  if (t.shape() != one) {
    throw ShapeError(std::string("sampler: ") + what + " has shape " + shape_string(t.shape()) + ", expected " +
                     shape_string(want) + " or " + shape_string(one));
  }
  std::vector<T> out;
  out.reserve(t.size() * want[0]);
  for (std::size_t b = 0; b < want[0]; ++b) out.insert(out.end(), t.data().begin(), t.data().end());
  return Tensor<T>(want, std::move(out));
}

template <typename T>
Tensor<T> clamp_unit(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v, T(-1), T(1));
  return Tensor<T>(x.shape(), std::move(out));
}

// Terminal noises: fixed ones from cfg, the rest drawn from `rng`.
template <typename T>
DecomposedNoise<T> terminal_noise(const SamplerConfig<T>& cfg, std::size_t clips, const LambdaProfile& profile,
                                  const FrameShape& frame, const Rng& rng) {
  DecomposedNoise<T> dn = sample_decomposed_noise<T>(clips, profile, frame, rng);
  const std::size_t n = static_cast<std::size_t>(profile.frames());
  if (cfg.base_noise) dn.base = expand_clips(*cfg.base_noise, {clips, 1, frame.channels, frame.height, frame.width}, "base noise");
  if (cfg.residual_noise) {
    Tensor<T> r = expand_clips(*cfg.residual_noise, {clips, n, frame.channels, frame.height, frame.width}, "residual noise");
    // The middle frame carries no residual.
    std::vector<T> v(r.data().begin(), r.data().end());
    const std::size_t fs = frame.size(), mid = static_cast<std::size_t>(profile.mid());
    for (std::size_t b = 0; b < clips; ++b) std::fill_n(v.begin() + static_cast<std::ptrdiff_t>((b * n + mid) * fs), fs, T(0));
    dn.residuals = Tensor<T>(r.shape(), std::move(v));
  }
  return dn;
}

// One reverse update shared by sample_video and extend_video. Fresh noise
// for stochastic steps is itself decomposed so clips keep a shared part.
template <typename T>
Tensor<T> reverse_update(const Tensor<T>& z, const Tensor<T>& eps_hat, int t, int t_prev, const NoiseSchedule& s,
                         const SamplerConfig<T>& cfg, const LambdaProfile& profile, const Rng& step_rng) {
  const VideoDims d = video_dims(z);
  const bool stochastic = cfg.kind == SamplerKind::kDdpm ? t > 1 : cfg.eta > 0.0;
  std::optional<Tensor<T>> fresh;
  if (stochastic) fresh = compose_noise(sample_decomposed_noise<T>(d.clips, profile, d.frame, step_rng), profile);
  if (cfg.kind == SamplerKind::kDdpm) return ddpm_step(z, eps_hat, t, s, nullptr, fresh ? &*fresh : nullptr);
  return ddim_step(z, eps_hat, t, t_prev, s, cfg.eta, nullptr, cfg.clip_x0, fresh ? &*fresh : nullptr);
}

}  // namespace detail

/// Generates `clips` videos. Every reverse step makes one base call on the
/// middle frames and one residual pass over the other N-1 frames, and all
/// frames move through the same step sequence.
template <typename T, BaseDenoiser<T> B, ResidualDenoiser<T> R>
SampleResult<T> sample_video(const B& base, const R& resid, const NoiseSchedule& s, const LambdaProfile& profile,
                             const SamplerConfig<T>& cfg, std::size_t clips, const FrameShape& frame) {
  cfg.validate();
  if (!cfg.cond.empty() && cfg.cond.size() != clips) throw ShapeError("sample_video: need one class label per clip");
  const std::vector<int> tau = cfg.schedule_steps(s.steps());
  const Rng root(cfg.seed);
  const DecomposedNoise<T> dn = detail::terminal_noise(cfg, clips, profile, frame, root.split(0));
  Tensor<T> z = compose_noise(dn, profile);
  SampleResult<T> result;
  for (std::size_t k = tau.size(); k-- > 0;) {
    const int t = tau[k], t_prev = k == 0 ? 0 : tau[k - 1];
    const Tensor<T> eps_hat = predict_noise<T>(z, t, base, resid, s, profile, cfg.cond, &result.counts);
    z = detail::reverse_update(z, eps_hat, t, t_prev, s, cfg, profile, root.split(1).split(static_cast<std::uint64_t>(k)));
    ++result.counts.steps;
  }
  result.video = detail::clamp_unit(z);
  result.base_noise = dn.base;
  result.residual_noise = dn.residuals;
  return result;
}

template <typename T>
struct ExtendResult {
  Tensor<T> video;                   // [B,total,C,H,W]
  std::vector<double> overlap_mad;   // per generated window
  std::vector<Tensor<T>> window_base_noise;
  PassCounts counts;
};

/// Auto-regressive extension by replacement. Each new N-frame window keeps the
/// last ceil(N/2) frames produced so far as known frames; their latents are
/// overwritten at every reverse step with the forward-diffused known frames,
/// using the window's terminal noise. The terminal base noise
/// (cfg.base_noise) is the same for every window.
template <typename T, BaseDenoiser<T> B, ResidualDenoiser<T> R>
ExtendResult<T> extend_video(const Tensor<T>& known, const B& base, const R& resid, const NoiseSchedule& s,
                             const LambdaProfile& profile, const SamplerConfig<T>& cfg, std::size_t total_frames) {
  cfg.validate();
  const VideoDims d = video_dims(known, "extend_video");
  detail::check_profile(profile, d.frames, "extend_video");
  if (total_frames < d.frames) throw InvalidArgument("extend_video: total_frames below the known length");
  if (!cfg.base_noise) throw InvalidArgument("extend_video: the terminal base noise of the known video is required");
  const std::size_t n = d.frames, fs = d.frame_size();
  const std::size_t overlap = (n + 1) / 2, stride = n - overlap;
  if (stride == 0) throw InvalidArgument("extend_video: windows of one frame cannot advance");
  const Tensor<T> b_T = detail::expand_clips(*cfg.base_noise, {d.clips, 1, d.frame.channels, d.frame.height, d.frame.width},
                                             "base noise");
  const std::vector<int> tau = cfg.schedule_steps(s.steps());
  const Rng root(cfg.seed);

  // Running output, clip-major, grown window by window.
  std::vector<std::vector<T>> clips(d.clips);
  for (std::size_t b = 0; b < d.clips; ++b)
    clips[b].assign(known.data().begin() + static_cast<std::ptrdiff_t>(b * n * fs),
                    known.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * n * fs));
  ExtendResult<T> result;
  std::size_t produced = n;
  for (std::uint64_t w = 1; produced < total_frames; ++w) {
    const std::size_t start = produced - overlap;
    std::vector<T> ctx(d.clips * n * fs, T(0));
    for (std::size_t b = 0; b < d.clips; ++b)
      std::copy_n(clips[b].begin() + static_cast<std::ptrdiff_t>(start * fs), overlap * fs,
                  ctx.begin() + static_cast<std::ptrdiff_t>(b * n * fs));
    const Tensor<T> window_known(known.shape(), std::move(ctx));

    DecomposedNoise<T> dn = sample_decomposed_noise<T>(d.clips, profile, d.frame, root.split(0).split(w));
    dn.base = b_T;
    const Tensor<T> eps = compose_noise(dn, profile);
    auto replace_known = [&](const Tensor<T>& z, int t) {
      const Tensor<T> zk = diffuse_with_noise(window_known, std::vector<int>(d.clips, t), eps, s);
      std::vector<T> v(z.data().begin(), z.data().end());
      for (std::size_t b = 0; b < d.clips; ++b)
        std::copy_n(zk.data().begin() + static_cast<std::ptrdiff_t>(b * n * fs), overlap * fs,
                    v.begin() + static_cast<std::ptrdiff_t>(b * n * fs));
      return Tensor<T>(z.shape(), std::move(v));
    };

    Tensor<T> z = eps;
    for (std::size_t k = tau.size(); k-- > 0;) {
      const int t = tau[k], t_prev = k == 0 ? 0 : tau[k - 1];
      z = replace_known(z, t);
      const Tensor<T> eps_hat = predict_noise<T>(z, t, base, resid, s, profile, cfg.cond, &result.counts);
      z = detail::reverse_update(z, eps_hat, t, t_prev, s, cfg, profile, root.split(1).split(w).split(k));
      ++result.counts.steps;
    }
    const Tensor<T> out = detail::clamp_unit(z);
    double mad = 0;
    for (std::size_t b = 0; b < d.clips; ++b)
      for (std::size_t p = 0; p < overlap * fs; ++p)
        mad += std::abs(static_cast<double>(out[b * n * fs + p]) - static_cast<double>(window_known[b * n * fs + p]));
    result.overlap_mad.push_back(mad / static_cast<double>(d.clips * overlap * fs));
    result.window_base_noise.push_back(dn.base);
    for (std::size_t b = 0; b < d.clips; ++b)
      clips[b].insert(clips[b].end(), out.data().begin() + static_cast<std::ptrdiff_t>((b * n + overlap) * fs),
                      out.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * n * fs));
    produced += stride;
  }
  std::vector<T> video;
  video.reserve(d.clips * total_frames * fs);
  for (auto& c : clips) video.insert(video.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(total_frames * fs));
  result.video = Tensor<T>({d.clips, total_frames, d.frame.channels, d.frame.height, d.frame.width}, std::move(video));
  return result;
}

}  // namespace vidfuse
