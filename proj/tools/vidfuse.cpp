// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

// vidfuse: pretrain-base -> train -> sample / extend -> eval.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "vidfuse/vidfuse.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vidfuse;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4 };

using Model = TrainState<float>;

Model make_model(const RunConfig& cfg) {
  const FrameShape frame = cfg.frame_shape();
  const int frames = static_cast<int>(cfg.data.frames);
  return Model{BaseGenerator<float>(cfg.model, frame, cfg.schedule.T, cfg.train.joint.seed * 2 + 1),
               ResidualGenerator<float>(cfg.model, frame, frames, cfg.schedule.T, cfg.train.joint.seed * 2 + 2),
               {},
               {},
               0};
}

void write_json(const fs::path& path, const json& j) {
  const std::string text = j.dump(2) + "\n";
  io::write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string checkpoint_config_text(const RunConfig& cfg) { return cfg.to_json().dump(); }

RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.contains("meta.config")) throw FormatError(FormatErrorKind::kBadHeader, "checkpoint has no meta.config entry");
  json j;
  try {
    j = json::parse(ckpt.text("meta.config"));
  } catch (const json::parse_error& e) {
    throw FormatError(FormatErrorKind::kBadHeader, std::string("checkpoint meta.config is not JSON: ") + e.what());
  }
  return parse_run_config(j);
}

/// Loads generator weights (and optimiser state when present) from a checkpoint.
Model load_model(const Checkpoint& ckpt, const RunConfig& cfg) {
  Model m = make_model(cfg);
  restore_parameters(ckpt, "base.", m.base.net());
  if (ckpt.contains("opt.base.step")) restore_adam(ckpt, "opt.base.", m.base_opt);
  if (ckpt.contains("opt.residual.step")) {
    restore_parameters(ckpt, "residual.", m.residual.net());
    restore_adam(ckpt, "opt.residual.", m.residual_opt);
  }
  if (ckpt.contains("meta.step")) m.step = ckpt.integer("meta.step");
  return m;
}

std::vector<int> class_labels(const RunConfig& cfg, std::size_t clips) {
  std::vector<int> out;
  if (cfg.model.cond_classes == 0) return out;
  for (std::size_t c = 0; c < clips; ++c) out.push_back(static_cast<int>(c % static_cast<std::size_t>(cfg.data.k_id)));
  return out;
}

/// FNV-1a over the raw bytes of a tensor; used to show noise reuse.
std::string tensor_hash(const Tensor<float>& t) {
  std::uint64_t h = 1469598103934665603ull;
  for (float v : t.data()) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    for (std::size_t k = 0; k < sizeof(float); ++k) {
      h ^= p[k];
      h *= 1099511628211ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Tensor<float> slice_clip(const Tensor<float>& video, std::size_t b) {
  const VideoDims d = video_dims(video, "slice_clip");
  const std::size_t n = d.frames * d.frame_size();
  return Tensor<float>({1, d.frames, d.frame.channels, d.frame.height, d.frame.width},
                       std::vector<float>(video.data().begin() + static_cast<std::ptrdiff_t>(b * n),
                                          video.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * n)));
}

Tensor<float> drop_clip_axis(const Tensor<float>& clip) {
  const VideoDims d = video_dims(clip, "drop_clip_axis");
  return Tensor<float>({d.frames, d.frame.channels, d.frame.height, d.frame.width},
                       std::vector<float>(clip.data().begin(), clip.data().end()));
}

void print_warnings(const RunConfig& cfg) {
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------- commands

struct PretrainArgs {
  std::string config, out, metrics;
};

int cmd_pretrain(const PretrainArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  print_warnings(cfg);
  const ToyVideoDataset data(cfg.data);
  Model m = make_model(cfg);
  const NoiseSchedule s = cfg.make_schedule();
  const fs::path metrics = a.metrics.empty() ? fs::path(a.out + ".metrics.jsonl") : fs::path(a.metrics);
  std::ofstream log(metrics, std::ios::trunc);
  if (!log) throw FormatError(FormatErrorKind::kIo, "cannot open " + metrics.string() + " for writing");
  long steps = 0;
  pretrain_base<float>(data.marginal_frames(), m.base, s, cfg.train.pretrain, m.base_opt, [&](long step, double loss) {
    if (!std::isfinite(loss)) throw NumericError("pretrain-base: non-finite loss at step " + std::to_string(step));
    log << json{{"step", step}, {"loss", loss}, {"mode", "pretrain"}, {"lr_base", cfg.train.pretrain.lr}}.dump() << "\n";
    steps = step + 1;
  });
  Checkpoint ckpt;
  store_parameters(ckpt, "base.", m.base.net());
  store_adam(ckpt, "opt.base.", m.base_opt);
  ckpt.put_text("meta.config", checkpoint_config_text(cfg));
  ckpt.put_text("meta.kind", "pretrain");
  save_checkpoint(a.out, ckpt);
  std::cout << "pretrain-base: " << steps << " steps -> " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, init, out, metrics;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  print_warnings(cfg);
  const TrainConfig& tc = cfg.train.joint;
  if (tc.mode == JointMode::kFixed && a.init.empty()) {
    throw ConfigError("train: joint_mode \"fixed\" needs --init (there is no base generator to keep fixed)");
  }
  if (tc.guided && (cfg.data.k_id < 2 || cfg.data.k_mo < 2)) {
    throw ConfigError("train: guided sharing needs a dataset labelled with at least two identities and two motions");
  }
  const ToyVideoDataset data(cfg.data);
  Model m = make_model(cfg);
  if (!a.init.empty()) {
    const Checkpoint init = load_checkpoint(a.init);
    restore_parameters(init, "base.", m.base.net());
    if (init.contains("opt.residual.step")) restore_parameters(init, "residual.", m.residual.net());
  }
  const NoiseSchedule s = cfg.make_schedule();
  const fs::path metrics = a.metrics.empty() ? fs::path(a.out + ".metrics.jsonl") : fs::path(a.metrics);
  std::ofstream log(metrics, std::ios::trunc);
  if (!log) throw FormatError(FormatErrorKind::kIo, "cannot open " + metrics.string() + " for writing");
  const std::string origin = a.init.empty() ? "scratch" : "pretrained";
  train<float>(data, m, tc, s, cfg.make_profile(), [&](const TrainRecord& r) {
    log << json{{"step", r.step},
                {"loss", r.loss},
                {"loss_mid", r.loss_mid},
                {"loss_nonmid", r.loss_nonmid},
                {"mode", to_string(r.mode)},
                {"init", origin},
                {"lr_base", r.lr_base},
                {"lr_residual", r.lr_residual}}
               .dump()
        << "\n";
  });
  Checkpoint ckpt;
  store_train_state(ckpt, m);
  ckpt.put_text("meta.config", checkpoint_config_text(cfg));
  ckpt.put_text("meta.kind", "joint");
  save_checkpoint(a.out, ckpt);
  std::cout << "train (" << to_string(tc.mode) << ", " << origin << "): " << m.step << " steps -> " << a.out << "\n";
  return kOk;
}

struct SampleArgs {
  std::string ckpt, out, fix_base, fix_residual;
  std::size_t count = 1;
  std::optional<std::uint64_t> seed;
};

int cmd_sample(const SampleArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const RunConfig cfg = config_from_checkpoint(ckpt);
  const Model m = load_model(ckpt, cfg);
  if (a.count < 1) throw ConfigError("sample: --count must be >= 1");
  SamplerConfig<float> sc = cfg.make_sampler<float>();
  if (a.seed) sc.seed = *a.seed;
  if (!a.fix_base.empty()) sc.base_noise = read_tensor<float>(a.fix_base);
  if (!a.fix_residual.empty()) sc.residual_noise = read_tensor<float>(a.fix_residual);
  sc.cond = class_labels(cfg, a.count);
  const LambdaProfile profile = cfg.make_profile();
  const SampleResult<float> r =
      sample_video<float>(m.base, m.residual, cfg.make_schedule(), profile, sc, a.count, cfg.frame_shape());
  for (float v : r.video.data())
    if (!std::isfinite(v)) throw NumericError("sample: non-finite value in the generated video");

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  json files = json::array();
  for (std::size_t b = 0; b < a.count; ++b) {
    char name[48];
    std::snprintf(name, sizeof name, "video_%03zu", b);
    const Tensor<float> clip = slice_clip(r.video, b);
    write_tensor(dir / (std::string(name) + ".vftn"), clip);
    const Tensor<float> base_b = slice_clip(r.base_noise, b);
    write_tensor(dir / (std::string(name) + ".base.vftn"), base_b);
    export_frames(drop_clip_axis(clip), dir / name);
    export_gif(drop_clip_axis(clip), dir / (std::string(name) + ".gif"), 4.0);
    files.push_back(name);
  }
  write_tensor(dir / "videos.vftn", r.video);
  write_tensor(dir / "base_noise.vftn", r.base_noise);
  write_tensor(dir / "residual_noise.vftn", r.residual_noise);
  pass_counter(r.counts, r.counts.steps, static_cast<int>(cfg.data.frames));
  const json report = {{"base_calls", r.counts.base_calls},
                       {"residual_frame_passes", r.counts.residual_frame_passes},
                       {"steps", r.counts.steps},
                       {"seed", sc.seed},
                       {"count", a.count},
                       {"sampler", to_string(sc.kind)},
                       {"videos", files},
                       {"config", cfg.to_json()}};
  write_json(dir / "report.json", report);
  std::cout << "sample: " << a.count << " videos, base_calls=" << r.counts.base_calls
            << " residual_frame_passes=" << r.counts.residual_frame_passes << " -> " << a.out << "\n";
  return kOk;
}

struct ExtendArgs {
  std::string ckpt, input, base_noise, out;
  std::size_t total_frames = 0;
};

int cmd_extend(const ExtendArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const RunConfig cfg = config_from_checkpoint(ckpt);
  const Model m = load_model(ckpt, cfg);
  const Tensor<float> known = read_tensor<float>(a.input);
  const VideoDims d = video_dims(known, "extend input");
  if (d.frames != cfg.data.frames || d.frame.height != cfg.data.height || d.frame.width != cfg.data.width ||
      d.frame.channels != 1) {
    throw ShapeError("extend: input " + shape_string(known.shape()) + " does not match the model's clip shape");
  }
  SamplerConfig<float> sc = cfg.make_sampler<float>();
  sc.base_noise = read_tensor<float>(a.base_noise);
  sc.cond = class_labels(cfg, d.clips);
  const ExtendResult<float> r =
      extend_video<float>(known, m.base, m.residual, cfg.make_schedule(), cfg.make_profile(), sc, a.total_frames);
  for (float v : r.video.data())
    if (!std::isfinite(v)) throw NumericError("extend: non-finite value in the extended video");

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  write_tensor(dir / "extended.vftn", r.video);
  for (std::size_t b = 0; b < d.clips; ++b) {
    char name[48];
    std::snprintf(name, sizeof name, "extended_%03zu.gif", b);
    export_gif(drop_clip_axis(slice_clip(r.video, b)), dir / name, 4.0);
  }
  json hashes = json::array();
  for (const auto& bn : r.window_base_noise) hashes.push_back(tensor_hash(bn));
  double max_mad = 0;
  for (double v : r.overlap_mad) max_mad = std::max(max_mad, v);
  const json report = {{"total_frames", a.total_frames},
                       {"windows", r.overlap_mad.size()},
                       {"overlap_mad", r.overlap_mad},
                       {"max_overlap_mad", max_mad},
                       {"base_noise_hash", hashes},
                       {"base_calls", r.counts.base_calls},
                       {"residual_frame_passes", r.counts.residual_frame_passes},
                       {"seed", sc.seed},
                       {"config", cfg.to_json()}};
  write_json(dir / "report.json", report);
  std::cout << "extend: " << d.frames << " -> " << a.total_frames << " frames, " << r.overlap_mad.size()
            << " windows, max overlap MAD " << max_mad << "\n";
  return kOk;
}

struct EvalArgs {
  std::string ckpt, config, out;
  long cov_samples = 100000;
  long mse_clips = 256;
  std::size_t sample_clips = 16;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const RunConfig model_cfg = config_from_checkpoint(ckpt);
  const RunConfig cfg = load_run_config(a.config);
  print_warnings(cfg);
  if (cfg.data.frames != model_cfg.data.frames || cfg.data.height != model_cfg.data.height ||
      cfg.data.width != model_cfg.data.width || cfg.schedule.T != model_cfg.schedule.T) {
    throw ConfigError("eval: config clip shape or T differs from the checkpoint's");
  }
  const Model m = load_model(ckpt, model_cfg);
  const NoiseSchedule s = model_cfg.make_schedule();
  const LambdaProfile profile = model_cfg.make_profile();
  const Rng root(cfg.sample.seed);
  EvalReport report;

  const CovarianceCheck cov = noise_covariance_check(profile, a.cov_samples, root.split(0), cfg.frame_shape());
  report.add("noise_cov_max_deviation", cov.max_cov_deviation, cov.samples, 0.02);
  report.add("noise_mean_max_deviation", cov.max_mean_deviation, cov.samples, 0.02);
  report.add("noise_var_max_deviation", cov.max_var_deviation, cov.samples, 0.02);

  ToyDatasetSpec held = cfg.data;
  held.seed = cfg.data.seed + 1;
  const ToyVideoDataset held_out(held);
  std::vector<int> cond_ids;
  if (model_cfg.model.cond_classes > 0) cond_ids = held_out.identities();
  const NoiseMse mse = noise_prediction_mse<float>(m.base, m.residual, held_out.videos(), s, profile, a.mse_clips,
                                                   root.split(1), 16, cond_ids);
  report.add("noise_mse_mid", mse.mid, mse.samples, 1.0);
  report.add("noise_mse_nonmid", mse.nonmid, mse.samples, 1.0);
  report.add("noise_mse_combined", mse.combined, mse.samples, 1.0);

  SamplerConfig<float> sc = cfg.make_sampler<float>();
  sc.cond = class_labels(model_cfg, a.sample_clips);
  const SampleResult<float> r = sample_video<float>(m.base, m.residual, s, profile, sc, a.sample_clips, cfg.frame_shape());
  const CorrelationResult corr = interframe_correlation(r.video);
  report.add("sample_interframe_correlation", corr.value, corr.pairs);
  const CorrelationResult data_corr = interframe_correlation(held_out.videos());
  report.add("data_interframe_correlation", data_corr.value, data_corr.pairs);
  IdentityClassifier classifier;
  const ToyVideoDataset train_data(cfg.data);
  classifier.fit(train_data.videos(), train_data.identities());
  report.add("sample_identity_consistency", identity_consistency(r.video, classifier),
             static_cast<long>(a.sample_clips));
  report.add("base_calls", static_cast<double>(r.counts.base_calls), 1);
  report.add("residual_frame_passes", static_cast<double>(r.counts.residual_frame_passes), 1);

  for (const auto& [name, metric] : report.metrics)
    if (!std::isfinite(metric.value)) throw NumericError("eval: metric " + name + " is not finite");
  write_json(a.out, {{"metrics", report.to_json()}, {"seed", cfg.sample.seed}, {"config", cfg.to_json()}});
  std::cout << "eval: noise MSE " << mse.combined << ", covariance deviation " << cov.max_cov_deviation
            << ", sample correlation " << corr.value << " -> " << a.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vidfuse: decomposed diffusion for toy video generation"};
  app.require_subcommand(1);

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain-base", "Pretrain the base generator on single frames");
  pre->add_option("--config", pa.config, "Run config (JSON)")->required();
  pre->add_option("--out", pa.out, "Output checkpoint")->required();
  pre->add_option("--metrics", pa.metrics, "Metrics log (JSONL); default <out>.metrics.jsonl");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Jointly train base and residual generators");
  tr->add_option("--config", ta.config, "Run config (JSON)")->required();
  tr->add_option("--init", ta.init, "Checkpoint providing pretrained base weights");
  tr->add_option("--out", ta.out, "Output checkpoint")->required();
  tr->add_option("--metrics", ta.metrics, "Metrics log (JSONL); default <out>.metrics.jsonl");

  SampleArgs sa;
  std::uint64_t seed = 0;
  auto* sm = app.add_subcommand("sample", "Generate videos");
  sm->add_option("--ckpt", sa.ckpt, "Trained checkpoint")->required();
  sm->add_option("--out", sa.out, "Output directory")->required();
  sm->add_option("--count", sa.count, "Number of videos")->required();
  sm->add_option("--fix-base", sa.fix_base, "Terminal base noise tensor [K|1,1,C,H,W]");
  sm->add_option("--fix-residual", sa.fix_residual, "Terminal residual noise tensor [K|1,N,C,H,W]");
  auto* seed_opt = sm->add_option("--seed", seed, "Sampler seed (default: config sample.seed)");

  ExtendArgs ea;
  auto* ex = app.add_subcommand("extend", "Extend videos by replacement with a fixed base noise");
  ex->add_option("--ckpt", ea.ckpt, "Trained checkpoint")->required();
  ex->add_option("--input", ea.input, "Known video tensor [B,N,C,H,W]")->required();
  ex->add_option("--base-noise", ea.base_noise, "Terminal base noise of the known video")->required();
  ex->add_option("--total-frames", ea.total_frames, "Output length")->required();
  ex->add_option("--out", ea.out, "Output directory")->required();

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "Run the evaluation suite");
  ev->add_option("--ckpt", va.ckpt, "Trained checkpoint")->required();
  ev->add_option("--config", va.config, "Evaluation config (JSON)")->required();
  ev->add_option("--out", va.out, "Report path (JSON)")->required();
  ev->add_option("--cov-samples", va.cov_samples, "Noise covariance observations per frame");
  ev->add_option("--mse-clips", va.mse_clips, "Held-out clips for noise MSE");
  ev->add_option("--sample-clips", va.sample_clips, "Generated clips for sample metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*pre) return cmd_pretrain(pa);
    if (*tr) return cmd_train(ta);
    if (*sm) {
      if (*seed_opt) sa.seed = seed;
      return cmd_sample(sa);
    }
    if (*ex) return cmd_extend(ea);
    if (*ev) return cmd_eval(va);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
