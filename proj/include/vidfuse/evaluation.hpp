// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "vidfuse/data_io/dataset.hpp"
#include "vidfuse/diffusion.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/models/generators.hpp"
#include "vidfuse/numerics/rng.hpp"
#include "vidfuse/numerics/tensor.hpp"
#include "vidfuse/sampling.hpp"
#include "vidfuse/schedule.hpp"

namespace vidfuse {

struct Metric {
  double value = 0;
  long samples = 0;
  double tolerance = 0;
};

/// Named metrics, each with the sample count it was computed from and the
/// tolerance it is judged against (0 when purely informational).
struct EvalReport {
  std::map<std::string, Metric> metrics;

  void add(const std::string& name, double value, long samples, double tolerance = 0) {
    metrics[name] = {value, samples, tolerance};
  }
  const Metric& at(const std::string& name) const {
    auto it = metrics.find(name);
    if (it == metrics.end()) throw InvalidArgument("EvalReport: no metric named " + name);
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, m] : metrics) j[name] = {{"value", m.value}, {"samples", m.samples}, {"tolerance", m.tolerance}};
    return j;
  }
};

/// Tolerance for a Monte-Carlo mean estimate of unit-variance quantities.
inline double mean_tolerance(long samples) { return 3.0 / std::sqrt(static_cast<double>(samples)); }

struct CovarianceCheck {
  int frames = 0;
  long samples = 0;
  std::vector<double> covariance;  // N x N, row-major
  std::vector<double> target;      // sqrt(lambda^i lambda^j) off the diagonal, 1 on it
  std::vector<double> mean;        // per frame
  double max_cov_deviation = 0;    // over all entries, diagonal included
  double max_mean_deviation = 0;
  double max_var_deviation = 0;

  double cov(int i, int j) const { return covariance[static_cast<std::size_t>(i * frames + j)]; }
};

/// Empirical frame-by-frame covariance of composed noise. Each pixel of each
/// clip is one observation; `samples` observations are drawn per frame.
inline CovarianceCheck noise_covariance_check(const LambdaProfile& profile, long samples, const Rng& rng,
                                              const FrameShape& frame = {1, 16, 16}) {
  if (samples < 1) throw InvalidArgument("noise_covariance_check: need at least one sample");
  const std::size_t fs = frame.size();
  const std::size_t clips = (static_cast<std::size_t>(samples) + fs - 1) / fs;
  const std::size_t n = static_cast<std::size_t>(profile.frames());
  const Tensor<double> eps = compose_noise(sample_decomposed_noise<double>(clips, profile, frame, rng), profile);
  const long used = static_cast<long>(clips * fs);
  CovarianceCheck out;
  out.frames = profile.frames();
  out.samples = used;
  out.mean.assign(n, 0.0);
  out.covariance.assign(n * n, 0.0);
  auto v = eps.data();
  for (std::size_t b = 0; b < clips; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < fs; ++p) out.mean[i] += v[(b * n + i) * fs + p];
  for (auto& m : out.mean) m /= static_cast<double>(used);
  for (std::size_t b = 0; b < clips; ++b)
    for (std::size_t p = 0; p < fs; ++p)
      for (std::size_t i = 0; i < n; ++i) {
        const double di = v[(b * n + i) * fs + p] - out.mean[i];
        for (std::size_t j = i; j < n; ++j) out.covariance[i * n + j] += di * (v[(b * n + j) * fs + p] - out.mean[j]);
      }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      out.covariance[i * n + j] /= static_cast<double>(used - 1 > 0 ? used - 1 : 1);
      out.covariance[j * n + i] = out.covariance[i * n + j];
    }
  out.target.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.target[i * n + j] = i == j ? 1.0 : std::sqrt(profile.lambda(static_cast<int>(i)) * profile.lambda(static_cast<int>(j)));
  for (std::size_t k = 0; k < n * n; ++k)
    out.max_cov_deviation = std::max(out.max_cov_deviation, std::abs(out.covariance[k] - out.target[k]));
  for (std::size_t i = 0; i < n; ++i) {
    out.max_mean_deviation = std::max(out.max_mean_deviation, std::abs(out.mean[i]));
    out.max_var_deviation = std::max(out.max_var_deviation, std::abs(out.covariance[i * n + i] - 1.0));
  }
  return out;
}

struct CorrelationResult {
  double value = 0;
  long pairs = 0;
  long constant_pairs = 0;  // pairs where one frame was constant (flagged)
};

/// Pearson correlation of two equally sized frames. A constant frame gives 1
/// against an identical constant frame and 0 otherwise; `flag` is raised.
inline double frame_correlation(std::span<const double> a, std::span<const double> b, bool* flag = nullptr) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    ma += a[p];
    mb += b[p];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    sab += (a[p] - ma) * (b[p] - mb);
    saa += (a[p] - ma) * (a[p] - ma);
    sbb += (b[p] - mb) * (b[p] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    if (flag) *flag = true;
    return std::equal(a.begin(), a.end(), b.begin()) ? 1.0 : 0.0;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Mean adjacent-frame correlation over all clips of a [B,N,C,H,W] video.
template <typename T>
CorrelationResult interframe_correlation(const Tensor<T>& video) {
  const VideoDims d = video_dims(video, "interframe_correlation");
  if (d.frames < 2) throw ShapeError("interframe_correlation: need at least two frames");
  const std::size_t fs = d.frame_size();
  const std::vector<double> v(video.data().begin(), video.data().end());
  CorrelationResult r;
  double acc = 0;
  for (std::size_t b = 0; b < d.clips; ++b)
    for (std::size_t i = 0; i + 1 < d.frames; ++i) {
      bool flag = false;
      acc += frame_correlation(std::span<const double>(v.data() + (b * d.frames + i) * fs, fs),
                               std::span<const double>(v.data() + (b * d.frames + i + 1) * fs, fs), &flag);
      ++r.pairs;
      if (flag) ++r.constant_pairs;
    }
  r.value = acc / static_cast<double>(r.pairs);
  return r;
}

struct NoiseMse {
  double mid = 0;
  double nonmid = 0;
  double combined = 0;
  long samples = 0;  // clips evaluated
};

/// Mean squared error of the composed prediction against the true composed
/// noise, with steps uniform on [1,T]. Clips are taken in order from `videos`
/// [M,N,C,H,W] in batches of `batch`, `samples` clips in total (cycling).
template <typename T, BaseDenoiser<T> B, ResidualDenoiser<T> R>
NoiseMse noise_prediction_mse(const B& base, const R& resid, const Tensor<T>& videos, const NoiseSchedule& s,
                              const LambdaProfile& profile, long samples, const Rng& rng, std::size_t batch = 16,
                              std::span<const int> cond_labels = {}) {
  const VideoDims d = video_dims(videos, "noise_prediction_mse");
  detail::check_profile(profile, d.frames, "noise_prediction_mse");
  if (samples < 1 || batch == 0) throw InvalidArgument("noise_prediction_mse: need samples >= 1 and batch >= 1");
  const std::size_t clip_size = d.frames * d.frame_size(), fs = d.frame_size();
  const std::size_t mid = static_cast<std::size_t>(profile.mid());
  double sq_mid = 0, sq_other = 0;
  long done = 0;
  for (std::uint64_t round = 0; done < samples; ++round) {
    const std::size_t take = std::min<std::size_t>(batch, static_cast<std::size_t>(samples - done));
    std::vector<T> xs(take * clip_size);
    std::vector<int> cond;
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t c = static_cast<std::size_t>(done + static_cast<long>(k)) % d.clips;
      std::copy_n(videos.data().begin() + static_cast<std::ptrdiff_t>(c * clip_size), clip_size,
                  xs.begin() + static_cast<std::ptrdiff_t>(k * clip_size));
      if (!cond_labels.empty()) cond.push_back(cond_labels[c]);
    }
    const Tensor<T> x({take, d.frames, d.frame.channels, d.frame.height, d.frame.width}, std::move(xs));
    const Rng r = rng.split(round);
    const std::vector<int> steps = sample_steps(take, s.steps(), r.split(0));
    const Tensor<T> eps = compose_noise(sample_decomposed_noise<T>(take, profile, d.frame, r.split(1)), profile);
    const Tensor<T> z = diffuse_with_noise(x, std::span<const int>(steps), eps, s);
    const Tensor<T> eps_hat = predict_noise<T>(z, std::span<const int>(steps), base, resid, s, profile, cond);
    for (std::size_t b = 0; b < take; ++b)
      for (std::size_t i = 0; i < d.frames; ++i) {
        double acc = 0;
        for (std::size_t p = 0; p < fs; ++p) {
          const double e = static_cast<double>(eps_hat[(b * d.frames + i) * fs + p]) - static_cast<double>(eps[(b * d.frames + i) * fs + p]);
          acc += e * e;
        }
        (i == mid ? sq_mid : sq_other) += acc;
      }
    done += static_cast<long>(take);
  }
  NoiseMse out;
  out.samples = done;
  const double per_frame = static_cast<double>(done) * static_cast<double>(fs);
  out.mid = sq_mid / per_frame;
  out.nonmid = sq_other / (per_frame * static_cast<double>(d.frames - 1));
  out.combined = (sq_mid + sq_other) / (per_frame * static_cast<double>(d.frames));
  return out;
}

/// Nearest class mean on (foreground mean intensity, foreground area
/// fraction), both standardised. Frames far from every class mean are
/// rejected as unknown (-1).
class IdentityClassifier {
 public:
  static constexpr double kForeground = -0.65;

  bool trained() const noexcept { return !means_.empty(); }
  int classes() const noexcept { return static_cast<int>(means_.size()); }

  template <typename T>
  static std::array<double, 2> raw_features(std::span<const T> frame) {
    double sum = 0;
    long count = 0;
    for (T v : frame) {
      if (static_cast<double>(v) > kForeground) {
        sum += static_cast<double>(v);
        ++count;
      }
    }
    return {count ? sum / static_cast<double>(count) : -1.0, static_cast<double>(count) / static_cast<double>(frame.size())};
  }

  /// Fits class means from every frame of `videos` [M,N,C,H,W] with one label per clip.
  template <typename T>
  void fit(const Tensor<T>& videos, std::span<const int> labels) {
    const VideoDims d = video_dims(videos, "IdentityClassifier::fit");
    if (labels.size() != d.clips) throw ShapeError("IdentityClassifier::fit: one label per clip required");
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    if (k < 1 || *std::min_element(labels.begin(), labels.end()) < 0) throw InvalidArgument("IdentityClassifier::fit: bad labels");
    const std::size_t fs = d.frame_size();
    std::vector<std::array<double, 2>> feats;
    std::vector<int> lab;
    for (std::size_t b = 0; b < d.clips; ++b)
      for (std::size_t i = 0; i < d.frames; ++i) {
        feats.push_back(raw_features(videos.data().subspan((b * d.frames + i) * fs, fs)));
        lab.push_back(labels[b]);
      }
    for (int f = 0; f < 2; ++f) {
      double m = 0, v = 0;
      for (auto& x : feats) m += x[f];
      m /= static_cast<double>(feats.size());
      for (auto& x : feats) v += (x[f] - m) * (x[f] - m);
      center_[f] = m;
      scale_[f] = std::sqrt(v / static_cast<double>(feats.size()));
      if (scale_[f] == 0.0) scale_[f] = 1.0;
    }
    means_.assign(static_cast<std::size_t>(k), {0.0, 0.0});
    std::vector<long> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t q = 0; q < feats.size(); ++q) {
      const auto z = standardise(feats[q]);
      auto& m = means_[static_cast<std::size_t>(lab[q])];
      m[0] += z[0];
      m[1] += z[1];
      ++counts[static_cast<std::size_t>(lab[q])];
    }
    for (std::size_t c = 0; c < means_.size(); ++c) {
      if (counts[c] == 0) throw InvalidArgument("IdentityClassifier::fit: class " + std::to_string(c) + " has no frames");
      means_[c][0] /= static_cast<double>(counts[c]);
      means_[c][1] /= static_cast<double>(counts[c]);
    }
    // Accept anything closer than the widest nearest-neighbour gap.
    radius_ = 0;
    for (std::size_t a = 0; a < means_.size(); ++a) {
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < means_.size(); ++b)
        if (a != b) nearest = std::min(nearest, distance(means_[a], means_[b]));
      if (std::isfinite(nearest)) radius_ = std::max(radius_, nearest);
    }
    if (radius_ == 0) radius_ = 1.0;
  }

  template <typename T>
  int classify(std::span<const T> frame) const {
    if (!trained()) throw Error("IdentityClassifier: classifier is untrained");
    const auto z = standardise(raw_features(frame));
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < means_.size(); ++c) {
      const double dist = distance(z, means_[c]);
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<int>(c);
      }
    }
    return best_d <= radius_ ? best : -1;
  }

 private:
  std::array<double, 2> standardise(const std::array<double, 2>& f) const {
    return {(f[0] - center_[0]) / scale_[0], (f[1] - center_[1]) / scale_[1]};
  }
  static double distance(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
  }

  std::vector<std::array<double, 2>> means_;
  std::array<double, 2> center_{0, 0};
  std::array<double, 2> scale_{1, 1};
  double radius_ = 0;
};

/// Videos [M,N,C,H,W] are split into consecutive sets of `group` videos. For
/// each set, the fraction of all its frames classified as the set's most
/// common identity (rejected frames never count); averaged over sets. With
/// group = 1 this is per-video consistency.
template <typename T>
double identity_consistency(const Tensor<T>& videos, const IdentityClassifier& classifier, std::size_t group = 1) {
  if (!classifier.trained()) throw Error("identity_consistency: classifier is untrained");
  const VideoDims d = video_dims(videos, "identity_consistency");
  if (group == 0 || d.clips % group != 0) throw InvalidArgument("identity_consistency: clip count must be a multiple of the group size");
  const std::size_t fs = d.frame_size();
  double acc = 0;
  for (std::size_t g = 0; g < d.clips / group; ++g) {
    std::map<int, long> votes;
    for (std::size_t b = g * group; b < (g + 1) * group; ++b)
      for (std::size_t i = 0; i < d.frames; ++i) ++votes[classifier.classify(videos.data().subspan((b * d.frames + i) * fs, fs))];
    long best = 0;
    for (const auto& [label, count] : votes)
      if (label >= 0) best = std::max(best, count);
    acc += static_cast<double>(best) / static_cast<double>(group * d.frames);
  }
  return acc / static_cast<double>(d.clips / group);
}

/// Throws unless a sampling run made exactly `steps` base calls and
/// steps*(frames-1) residual frame passes.
inline void pass_counter(const PassCounts& counts, long steps, int frames) {
  const long want_residual = steps * (frames - 1);
  if (counts.base_calls != steps || counts.residual_frame_passes != want_residual) {
    throw Error("pass_counter: expected base_calls=" + std::to_string(steps) + ", residual_frame_passes=" +
                std::to_string(want_residual) + "; got base_calls=" + std::to_string(counts.base_calls) +
                ", residual_frame_passes=" + std::to_string(counts.residual_frame_passes));
  }
}

}  // namespace vidfuse
