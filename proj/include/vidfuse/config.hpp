// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "vidfuse/data_io/dataset.hpp"
#include "vidfuse/diffusion.hpp"
#include "vidfuse/error.hpp"
#include "vidfuse/models/generators.hpp"
#include "vidfuse/sampling.hpp"
#include "vidfuse/schedule.hpp"
#include "vidfuse/training.hpp"

namespace vidfuse {

struct ScheduleSection {
  int T = 200;
  double beta_start = 5e-4;
  double beta_end = 0.1;
};

struct LambdaSection {
  double lambda_default = 0.5;
  std::map<int, double> lambda_overrides;
};

struct TrainSection {
  TrainConfig joint;
  PretrainConfig pretrain;
};

struct SampleSection {
  SamplerKind kind = SamplerKind::kDdim;
  int steps = 50;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

/// The full run description. Every section is optional; missing keys keep
/// their defaults, unknown keys are errors.
struct RunConfig {
  ScheduleSection schedule;
  ModelConfig model;
  ToyDatasetSpec data;
  LambdaSection lambda;
  TrainSection train;
  SampleSection sample;
  /// Non-fatal adjustments made while loading (e.g. a pinned middle frame).
  std::vector<std::string> warnings;

  NoiseSchedule make_schedule() const { return make_linear_schedule(schedule.T, schedule.beta_start, schedule.beta_end); }

  LambdaProfile make_profile() const {
    std::vector<double> v(data.frames, lambda.lambda_default);
    for (const auto& [i, val] : lambda.lambda_overrides) v[static_cast<std::size_t>(i)] = val;
    v[data.frames / 2] = 1.0;
    return LambdaProfile(std::move(v));
  }

  FrameShape frame_shape() const { return {1, data.height, data.width}; }

  template <typename T>
  SamplerConfig<T> make_sampler() const {
    SamplerConfig<T> c;
    c.kind = sample.kind;
    c.steps = sample.steps;
    c.eta = sample.eta;
    c.seed = sample.seed;
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto& [i, v] : lambda.lambda_overrides) overrides[std::to_string(i)] = v;
    const auto& j = train.joint;
    const auto& p = train.pretrain;
    return {
        {"schedule", {{"T", schedule.T}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}}},
        {"model",
         {{"channels_base", model.channels_base},
          {"channels_residual", model.channels_residual},
          {"cond_classes", model.cond_classes}}},
        {"data",
         {{"clips", data.clips},
          {"frames", data.frames},
          {"height", data.height},
          {"width", data.width},
          {"k_id", data.k_id},
          {"k_mo", data.k_mo},
          {"seed", data.seed}}},
        {"lambda", {{"lambda_default", lambda.lambda_default}, {"lambda_overrides", overrides}}},
        {"train",
         {{"batch", j.batch},
          {"steps", j.steps},
          {"lr_base", j.lr_base},
          {"lr_residual", j.lr_residual},
          {"joint_mode", to_string(j.mode)},
          {"guided", j.guided},
          {"seed", j.seed},
          {"pretrain_steps", p.steps},
          {"pretrain_batch", p.batch},
          {"pretrain_lr", p.lr}}},
        {"sample", {{"kind", to_string(sample.kind)}, {"steps", sample.steps}, {"eta", sample.eta}, {"seed", sample.seed}}},
    };
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read_key(const nlohmann::json& obj, const std::string& where, const char* key, V& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  const std::string path = where + "." + key;
  if constexpr (std::is_same_v<V, bool>) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
  } else if constexpr (std::is_integral_v<V>) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    if (std::is_unsigned_v<V> && v.is_number_integer() && !v.is_number_unsigned() && v.template get<long long>() < 0) {
      throw ConfigError(path + ": must be non-negative");
    }
  } else if constexpr (std::is_floating_point_v<V>) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
  } else {
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
  }
  out = v.template get<V>();
}

}  // namespace detail

/// Parses and validates a run config; nothing is constructed on failure.
inline RunConfig parse_run_config(const nlohmann::json& root) {
  using detail::read_key;
  RunConfig c;
  detail::reject_unknown(root, "config", {"schedule", "model", "data", "lambda", "train", "sample"});
  if (root.contains("schedule")) {
    const auto& s = root["schedule"];
    detail::reject_unknown(s, "schedule", {"T", "beta_start", "beta_end"});
    read_key(s, "schedule", "T", c.schedule.T);
    read_key(s, "schedule", "beta_start", c.schedule.beta_start);
    read_key(s, "schedule", "beta_end", c.schedule.beta_end);
  }
  if (root.contains("model")) {
    const auto& m = root["model"];
    detail::reject_unknown(m, "model", {"channels_base", "channels_residual", "cond_classes"});
    read_key(m, "model", "channels_base", c.model.channels_base);
    read_key(m, "model", "channels_residual", c.model.channels_residual);
    read_key(m, "model", "cond_classes", c.model.cond_classes);
  }
  if (root.contains("data")) {
    const auto& d = root["data"];
    detail::reject_unknown(d, "data", {"clips", "frames", "height", "width", "k_id", "k_mo", "seed"});
    read_key(d, "data", "clips", c.data.clips);
    read_key(d, "data", "frames", c.data.frames);
    read_key(d, "data", "height", c.data.height);
    read_key(d, "data", "width", c.data.width);
    read_key(d, "data", "k_id", c.data.k_id);
    read_key(d, "data", "k_mo", c.data.k_mo);
    read_key(d, "data", "seed", c.data.seed);
  }
  if (root.contains("lambda")) {
    const auto& l = root["lambda"];
    detail::reject_unknown(l, "lambda", {"lambda_default", "lambda_overrides"});
    read_key(l, "lambda", "lambda_default", c.lambda.lambda_default);
    if (l.contains("lambda_overrides")) {
      const auto& o = l["lambda_overrides"];
      if (!o.is_object()) throw ConfigError("lambda.lambda_overrides: expected an object of frame index -> value");
      for (const auto& [key, value] : o.items()) {
        std::size_t used = 0;
        int idx = -1;
        try {
          idx = std::stoi(key, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != key.size() || idx < 0) throw ConfigError("lambda.lambda_overrides: bad frame index '" + key + "'");
        if (!value.is_number()) throw ConfigError("lambda.lambda_overrides." + key + ": expected a number");
        c.lambda.lambda_overrides[idx] = value.get<double>();
      }
    }
  }
  if (root.contains("train")) {
    const auto& t = root["train"];
    detail::reject_unknown(t, "train", {"batch", "steps", "lr_base", "lr_residual", "joint_mode", "guided", "seed",
                                        "pretrain_steps", "pretrain_batch", "pretrain_lr"});
    read_key(t, "train", "batch", c.train.joint.batch);
    read_key(t, "train", "steps", c.train.joint.steps);
    read_key(t, "train", "lr_base", c.train.joint.lr_base);
    read_key(t, "train", "lr_residual", c.train.joint.lr_residual);
    std::string mode = to_string(c.train.joint.mode);
    read_key(t, "train", "joint_mode", mode);
    c.train.joint.mode = parse_joint_mode(mode);
    read_key(t, "train", "guided", c.train.joint.guided);
    read_key(t, "train", "seed", c.train.joint.seed);
    read_key(t, "train", "pretrain_steps", c.train.pretrain.steps);
    read_key(t, "train", "pretrain_batch", c.train.pretrain.batch);
    read_key(t, "train", "pretrain_lr", c.train.pretrain.lr);
    c.train.pretrain.seed = c.train.joint.seed;
  }
  if (root.contains("sample")) {
    const auto& s = root["sample"];
    detail::reject_unknown(s, "sample", {"kind", "steps", "eta", "seed"});
    std::string kind = to_string(c.sample.kind);
    read_key(s, "sample", "kind", kind);
    c.sample.kind = parse_sampler_kind(kind);
    read_key(s, "sample", "steps", c.sample.steps);
    read_key(s, "sample", "eta", c.sample.eta);
    read_key(s, "sample", "seed", c.sample.seed);
  }

  // Cross-field validation, all before any work starts.
  if (c.schedule.T < 1) throw ConfigError("schedule.T must be >= 1");
  if (!(c.schedule.beta_start > 0 && c.schedule.beta_start <= c.schedule.beta_end && c.schedule.beta_end < 1)) {
    throw ConfigError("schedule: require 0 < beta_start <= beta_end < 1");
  }
  if (c.model.channels_base == 0 || c.model.channels_residual == 0 || c.model.channels_base % c.model.groups ||
      c.model.channels_residual % c.model.groups) {
    throw ConfigError("model: channel widths must be positive multiples of " + std::to_string(c.model.groups));
  }
  if (c.data.frames < 2) throw ConfigError("data.frames must be >= 2");
  if (c.data.height % 2 || c.data.width % 2) throw ConfigError("data: height and width must be even");
  if (c.data.clips == 0) throw ConfigError("data.clips must be >= 1");
  if (c.data.k_id < 1 || c.data.k_id > kMaxIdentities || c.data.k_mo < 1 || c.data.k_mo > kMaxMotions) {
    throw ConfigError("data: k_id and k_mo must be in [1, 4]");
  }
  if (!(c.lambda.lambda_default >= 0 && c.lambda.lambda_default <= 1)) throw ConfigError("lambda.lambda_default must be in [0,1]");
  const int mid = static_cast<int>(c.data.frames / 2);
  for (auto& [i, v] : c.lambda.lambda_overrides) {
    if (i >= static_cast<int>(c.data.frames)) throw ConfigError("lambda.lambda_overrides: frame " + std::to_string(i) + " out of range");
    if (!(v >= 0 && v <= 1)) throw ConfigError("lambda.lambda_overrides: value for frame " + std::to_string(i) + " outside [0,1]");
    if (i == mid && v != 1.0) {
      c.warnings.push_back("lambda override for base frame " + std::to_string(mid) + " ignored; it is pinned to 1");
      v = 1.0;
    }
  }
  for (int i = 0; i < static_cast<int>(c.data.frames); ++i) {
    if (i == mid) continue;
    const auto it = c.lambda.lambda_overrides.find(i);
    const double v = it == c.lambda.lambda_overrides.end() ? c.lambda.lambda_default : it->second;
    if (v >= 1.0 && c.data.frames > 1) {
      // Allowed by the forward process but leaves nothing for the residual generator.
      c.warnings.push_back("lambda of frame " + std::to_string(i) + " is 1; its residual is unused");
    }
  }
  try {
    c.train.joint.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (c.train.pretrain.steps < 0 || c.train.pretrain.batch == 0 || !(c.train.pretrain.lr > 0)) {
    throw ConfigError("train: pretrain_steps >= 0, pretrain_batch >= 1 and pretrain_lr > 0 required");
  }
  if (c.sample.steps < 1 || c.sample.steps > c.schedule.T) throw ConfigError("sample.steps must be in [1, T]");
  if (!(c.sample.eta >= 0 && c.sample.eta <= 1)) throw ConfigError("sample.eta must be in [0,1]");
  if (c.model.cond_classes > 0 && c.model.cond_classes < static_cast<std::size_t>(c.data.k_id)) {
    throw ConfigError("model.cond_classes must be 0 or at least data.k_id");
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace vidfuse
