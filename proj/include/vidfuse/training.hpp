// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vidfuse/data_io/dataset.hpp"
#include "vidfuse/diffusion.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/models/checkpoint.hpp"
#include "vidfuse/models/generators.hpp"
#include "vidfuse/numerics/adam.hpp"
#include "vidfuse/numerics/ops.hpp"
#include "vidfuse/numerics/rng.hpp"
#include "vidfuse/numerics/tensor.hpp"
#include "vidfuse/schedule.hpp"

namespace vidfuse {

/// How the base generator takes part in joint training.
///   kFixed       base weights frozen, no gradient at all
///   kNoStopGrad  every loss term reaches the base generator
///   kStopGrad    only the middle-frame term reaches the base generator
enum class JointMode { kFixed, kNoStopGrad, kStopGrad };

inline std::string to_string(JointMode m) {
  switch (m) {
    case JointMode::kFixed:
      return "fixed";
    case JointMode::kNoStopGrad:
      return "no-stop-grad";
    case JointMode::kStopGrad:
      return "stop-grad";
  }
  return "?";
}

inline JointMode parse_joint_mode(const std::string& s) {
  if (s == "fixed") return JointMode::kFixed;
  if (s == "no-stop-grad") return JointMode::kNoStopGrad;
  if (s == "stop-grad") return JointMode::kStopGrad;
  throw ConfigError("unknown joint mode '" + s + "' (expected fixed, no-stop-grad or stop-grad)");
}

/// Loss components, each already divided by B*N*C*H*W so that
/// total = mid + nonmid and the zero predictor scores about 1.
template <typename T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> mid;
  Tensor<T> nonmid;
};

/// Non-middle frame indices in ascending order.
inline std::vector<int> nonmid_frames(const LambdaProfile& profile) {
  std::vector<int> out;
  for (int i = 0; i < profile.frames(); ++i)
    if (i != profile.mid()) out.push_back(i);
  return out;
}

/// One clip step per clip, uniform on [1,T].
inline std::vector<int> sample_steps(std::size_t clips, int max_step, Rng rng) {
  std::vector<int> steps(clips);
  for (auto& t : steps) t = static_cast<int>(rng.uniform_int(1, max_step));
  return steps;
}

namespace detail {

// Non-middle frames of a [B,N,...] video as rows [B*(N-1), C*H*W].
template <typename T>
Tensor<T> gather_nonmid(const Tensor<T>& video, const LambdaProfile& profile) {
  const VideoDims d = video_dims(video);
  const std::size_t fs = d.frame_size(), mid = static_cast<std::size_t>(profile.mid());
  std::vector<T> out;
  out.reserve(d.clips * (d.frames - 1) * fs);
  auto v = video.data();
  for (std::size_t b = 0; b < d.clips; ++b)
    for (std::size_t i = 0; i < d.frames; ++i)
      if (i != mid) out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>((b * d.frames + i) * fs),
                               v.begin() + static_cast<std::ptrdiff_t>((b * d.frames + i + 1) * fs));
  return Tensor<T>({d.clips * (d.frames - 1), fs}, std::move(out));
}

// [B,C,H,W] -> rows [B*(N-1), C*H*W], each clip's frame repeated N-1 times.
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& frame, std::size_t copies) {
  const std::size_t clips = frame.dim(0), fs = frame.size() / clips;
  const Tensor<T> rows = ops::reshape(frame, {clips, 1, fs});
  return ops::reshape(ops::concat(std::vector<Tensor<T>>(copies, rows), 1), {clips * copies, fs});
}

}  // namespace detail

/// Decomposed denoising loss on a clean batch [B,N,C,H,W]. `rng` fixes the
/// steps and noise; `assignment` (optional) shares draws across clips.
template <typename T, BaseDenoiser<T> B, ResidualDenoiser<T> R>
LossTerms<T> loss_step(const Tensor<T>& x, const B& base, const R& resid, const NoiseSchedule& s,
                       const LambdaProfile& profile, const Rng& rng, JointMode mode,
                       const NoiseAssignment* assignment = nullptr, std::span<const int> cond = {}) {
  const VideoDims d = video_dims(x, "loss_step");
  vidfuse::detail::check_profile(profile, d.frames, "loss_step");
  if (d.frames < 2) throw ShapeError("loss_step: need at least two frames");
  const std::size_t clips = d.clips, fs = d.frame_size(), others = d.frames - 1;
  const std::size_t mid = static_cast<std::size_t>(profile.mid());

  const std::vector<int> steps = sample_steps(clips, s.steps(), rng.split(0));
  const DecomposedNoise<T> dn = sample_decomposed_noise<T>(clips, profile, d.frame, rng.split(1), assignment);
  const Tensor<T> eps = compose_noise(dn, profile);
  const Tensor<T> z = diffuse_with_noise(x, std::span<const int>(steps), eps, s);

  Tensor<T> base_out;
  if (mode == JointMode::kFixed) {
    NoGradGuard no_grad;
    base_out = base.predict(extract_frame(z, mid), steps, cond);
  } else {
    base_out = base.predict(extract_frame(z, mid), steps, cond);
  }
  const T norm = T(1) / static_cast<T>(clips * d.frames * fs);
  const Tensor<T> mid_loss = ops::scale(ops::sum(ops::square(ops::sub(base_out, extract_frame(eps, mid)))), norm);

  const Tensor<T> b_hat = mode == JointMode::kNoStopGrad ? base_out : ops::stop_gradient(base_out);
  const Tensor<T> b_rows = vidfuse::detail::repeat_rows(b_hat, others);

  const std::vector<int> frames = nonmid_frames(profile);
  std::vector<T> removal, keep_base, keep_resid;
  std::vector<int> row_steps, row_frames, row_cond;
  for (std::size_t b = 0; b < clips; ++b) {
    const double noise = std::sqrt(1.0 - s.alpha_hat(steps[b]));
    for (int i : frames) {
      const double lam = profile.lambda(i);
      removal.push_back(static_cast<T>(std::sqrt(lam) * noise));
      keep_base.push_back(static_cast<T>(std::sqrt(lam)));
      keep_resid.push_back(static_cast<T>(std::sqrt(1.0 - lam)));
      row_steps.push_back(steps[b]);
      row_frames.push_back(i);
      if (!cond.empty()) row_cond.push_back(cond[b]);
    }
  }
  const Tensor<T> z_prime =
      ops::sub(vidfuse::detail::gather_nonmid(z, profile), ops::mul_rows(b_rows, std::move(removal)));
  const Tensor<T> r_out =
      resid.predict(ops::reshape(z_prime, {clips * others, d.frame.channels, d.frame.height, d.frame.width}), row_steps,
                    row_frames, row_cond);
  const Tensor<T> pred = ops::add(ops::mul_rows(b_rows, std::move(keep_base)),
                             ops::mul_rows(ops::reshape(r_out, {clips * others, fs}), std::move(keep_resid)));
  const Tensor<T> nonmid_loss = ops::scale(ops::sum(ops::square(ops::sub(pred, vidfuse::detail::gather_nonmid(eps, profile)))), norm);
  return {ops::add(mid_loss, nonmid_loss), mid_loss, nonmid_loss};
}

/// Clips with equal identity share a base group, clips with equal action a
/// residual group. Group ids are assigned in order of first appearance.
inline NoiseAssignment assign_noise_groups(std::span<const int> identity, std::span<const int> action) {
  if (identity.size() != action.size()) {
    throw ShapeError("assign_noise_groups: " + std::to_string(identity.size()) + " identity labels vs " +
                     std::to_string(action.size()) + " action labels");
  }
  auto dense = [](std::span<const int> labels) {
    std::map<int, int> ids;
    std::vector<int> out;
    for (int l : labels) out.push_back(ids.try_emplace(l, static_cast<int>(ids.size())).first->second);
    return out;
  };
  return {dense(identity), dense(action)};
}

template <typename T>
std::vector<Tensor<T>> parameter_handles(UNet<T>& net) {
  std::vector<Tensor<T>> out;
  for (auto& p : net.parameters()) out.push_back(p.value);
  return out;
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

struct PretrainConfig {
  std::size_t batch = 32;
  long steps = 2000;
  double lr = 2e-3;
  std::uint64_t seed = 0;
};

/// Plain epsilon-prediction training of the base generator on single frames
/// drawn from `frames` [M,C,H,W]. Returns the per-step losses.
template <typename T>
std::vector<double> pretrain_base(const Tensor<T>& frames, BaseGenerator<T>& base, const NoiseSchedule& s,
                                  const PretrainConfig& cfg, AdamState<T>& opt,
                                  const std::function<void(long, double)>& on_step = {}) {
  if (frames.rank() != 4 || frames.dim(0) == 0) throw ShapeError("pretrain_base: frames must be [M,C,H,W]");
  const std::size_t pool = frames.dim(0), fs = frames.size() / pool;
  opt.learning_rate = cfg.lr;
  auto params = parameter_handles(base.net());
  const Rng root(cfg.seed);
  std::vector<double> losses;
  for (long step = 0; step < cfg.steps; ++step) {
    Rng rng = root.split(static_cast<std::uint64_t>(step));
    Rng pick = rng.split(0);
    std::vector<T> xs(cfg.batch * fs), noise(cfg.batch * fs);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto k = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(pool) - 1));
      std::copy_n(frames.data().begin() + static_cast<std::ptrdiff_t>(k * fs), fs,
                  xs.begin() + static_cast<std::ptrdiff_t>(b * fs));
    }
    const std::vector<int> steps = sample_steps(cfg.batch, s.steps(), rng.split(1));
    Rng noise_rng = rng.split(2);
    noise_rng.fill_normal(std::span<T>(noise));
    std::vector<T> z(xs.size());
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto [a, n] = s.marginal_coeffs(steps[b]);
      for (std::size_t p = b * fs; p < (b + 1) * fs; ++p)
        z[p] = static_cast<T>(a) * xs[p] + static_cast<T>(n) * noise[p];
    }
    Shape shape = frames.shape();
    shape[0] = cfg.batch;
    const Tensor<T> eps(shape, std::move(noise));
    const Tensor<T> pred = base.predict(Tensor<T>(shape, std::move(z)), steps);
    const Tensor<T> loss = ops::mean(ops::square(ops::sub(pred, eps)));
    zero_grads(params);
    backward(loss);
    adam_step<T>(params, opt);
    losses.push_back(static_cast<double>(loss.item()));
    if (on_step) on_step(step, losses.back());
  }
  return losses;
}

struct TrainConfig {
  std::size_t batch = 8;
  long steps = 2000;
  double lr_base = 2e-4;
  double lr_residual = 2e-3;
  JointMode mode = JointMode::kStopGrad;
  bool guided = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch == 0) throw ConfigError("train: batch must be positive");
    if (steps < 0) throw ConfigError("train: steps must be non-negative");
    if (!(lr_base >= 0.0) || !(lr_residual > 0.0)) throw ConfigError("train: learning rates must be positive");
    if (mode != JointMode::kFixed && lr_base > lr_residual) {
      throw ConfigError("train: lr_base must not exceed lr_residual unless the base is fixed");
    }
  }
};

/// Everything needed to continue a run: both generators, both optimizers and
/// the number of completed steps.
template <typename T>
struct TrainState {
  BaseGenerator<T> base;
  ResidualGenerator<T> residual;
  AdamState<T> base_opt;
  AdamState<T> residual_opt;
  long step = 0;
};

struct TrainRecord {
  long step = 0;
  double loss = 0;
  double loss_mid = 0;
  double loss_nonmid = 0;
  JointMode mode = JointMode::kStopGrad;
  double lr_base = 0;
  double lr_residual = 0;
};

/// Joint training from `state.step` up to `cfg.steps`. Step k draws its batch
/// and noise from Rng(seed).split(k), so a resumed run follows the same
/// trajectory as an uninterrupted one.
template <typename T>
void train(const ToyVideoDataset& data, TrainState<T>& state, const TrainConfig& cfg, const NoiseSchedule& s,
           const LambdaProfile& profile, const std::function<void(const TrainRecord&)>& on_step = {}) {
  cfg.validate();
  if (data.spec().frames != static_cast<std::size_t>(profile.frames()) ||
      state.residual.frames() != profile.frames()) {
    throw ConfigError("train: dataset has " + std::to_string(data.spec().frames) + " frames, profile " +
                      std::to_string(profile.frames()) + ", residual generator " +
                      std::to_string(state.residual.frames()));
  }
  if (cfg.guided && (data.spec().k_id < 2 || data.spec().k_mo < 2)) {
    throw ConfigError("train: guided sharing needs a labelled dataset with k_id >= 2 and k_mo >= 2");
  }
  const std::size_t cond_classes = state.base.net().config().cond_classes;
  if (cond_classes > 0 && cond_classes < static_cast<std::size_t>(data.spec().k_id)) {
    throw ConfigError("train: cond_classes smaller than the number of identities");
  }
  state.base_opt.learning_rate = cfg.lr_base;
  state.residual_opt.learning_rate = cfg.lr_residual;
  auto base_params = parameter_handles(state.base.net());
  auto resid_params = parameter_handles(state.residual.net());
  const Rng root(cfg.seed);
  for (; state.step < cfg.steps; ++state.step) {
    const Rng rng = root.split(static_cast<std::uint64_t>(state.step));
    Rng pick = rng.split(0);
    const auto idx = data.sample_indices(pick, cfg.batch);
    std::vector<int> ids, acts;
    for (auto i : idx) {
      ids.push_back(data.identities()[i]);
      acts.push_back(data.motions()[i]);
    }
    const NoiseAssignment groups = cfg.guided ? assign_noise_groups(ids, acts) : NoiseAssignment::distinct(cfg.batch);
    const Tensor<T> x = data.batch(idx).template cast<T>();
    std::span<const int> cond = cond_classes > 0 ? std::span<const int>(ids) : std::span<const int>();
    zero_grads(base_params);
    zero_grads(resid_params);
    const LossTerms<T> terms = loss_step<T>(x, state.base, state.residual, s, profile, rng.split(1), cfg.mode, &groups, cond);
    const double loss = static_cast<double>(terms.total.item());
    if (!std::isfinite(loss)) throw NumericError("train: loss became non-finite at step " + std::to_string(state.step));
    backward(terms.total);
    if (cfg.mode != JointMode::kFixed) adam_step<T>(base_params, state.base_opt);
    adam_step<T>(resid_params, state.residual_opt);
    if (on_step) {
      on_step({state.step, loss, static_cast<double>(terms.mid.item()), static_cast<double>(terms.nonmid.item()),
               cfg.mode, cfg.lr_base, cfg.lr_residual});
    }
  }
}

/// Parameters, optimizer moments and the step counter under fixed names.
template <typename T>
void store_train_state(Checkpoint& ckpt, const TrainState<T>& state) {
  store_parameters(ckpt, "base.", state.base.net());
  store_parameters(ckpt, "residual.", state.residual.net());
  store_adam(ckpt, "opt.base.", state.base_opt);
  store_adam(ckpt, "opt.residual.", state.residual_opt);
  ckpt.put_int("meta.step", state.step);
}

template <typename T>
void restore_train_state(const Checkpoint& ckpt, TrainState<T>& state) {
  restore_parameters(ckpt, "base.", state.base.net());
  restore_parameters(ckpt, "residual.", state.residual.net());
  if (ckpt.contains("opt.base.step")) restore_adam(ckpt, "opt.base.", state.base_opt);
  if (ckpt.contains("opt.residual.step")) restore_adam(ckpt, "opt.residual.", state.residual_opt);
  state.step = ckpt.contains("meta.step") ? ckpt.integer("meta.step") : 0;
}

}  // namespace vidfuse
