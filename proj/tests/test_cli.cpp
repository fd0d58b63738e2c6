// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "vidfuse/vidfuse.hpp"

namespace vidfuse {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json tiny_config() {
  return json::parse(R"({
    "schedule": {"T": 20, "beta_start": 0.001, "beta_end": 0.2},
    "model": {"channels_base": 16, "channels_residual": 8, "cond_classes": 0},
    "data": {"clips": 16, "frames": 4, "height": 8, "width": 8, "k_id": 2, "k_mo": 2, "seed": 3},
    "lambda": {"lambda_default": 0.5},
    "train": {"batch": 4, "steps": 4, "lr_base": 1e-4, "lr_residual": 1e-3, "joint_mode": "stop-grad",
              "guided": false, "seed": 1, "pretrain_steps": 4, "pretrain_batch": 8, "pretrain_lr": 1e-3},
    "sample": {"kind": "ddim", "steps": 5, "eta": 0.0, "seed": 11}
  })");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(read_text(p)); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("vidfuse_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path write_config(const std::string& name, const json& j) const {
    std::ofstream(path(name)) << j.dump(2);
    return path(name);
  }

  /// Runs the CLI and returns its exit code; stderr is kept in err_.
  int run(const std::string& args) {
    const fs::path err = path("stderr.txt");
    const std::string cmd = std::string(VIDFUSE_CLI_PATH) + " " + args + " >/dev/null 2>" + err.string();
    const int status = std::system(cmd.c_str());
    err_ = read_text(err);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  /// Pretrains and jointly trains the tiny model; returns the joint checkpoint.
  fs::path trained_model() {
    const fs::path cfg = write_config("run.json", tiny_config());
    EXPECT_EQ(run("pretrain-base --config " + cfg.string() + " --out " + path("pre.ckpt").string()), 0) << err_;
    EXPECT_EQ(run("train --config " + cfg.string() + " --init " + path("pre.ckpt").string() + " --out " +
                  path("joint.ckpt").string()),
              0)
        << err_;
    return path("joint.ckpt");
  }

  fs::path dir_;
  std::string err_;
};

TEST_F(Cli, MissingConfigNamesPath) {
  const std::string missing = path("absent.json").string();
  EXPECT_EQ(run("pretrain-base --config " + missing + " --out " + path("x.ckpt").string()), 2);
  EXPECT_NE(err_.find(missing), std::string::npos) << err_;
  EXPECT_FALSE(fs::exists(path("x.ckpt")));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("pretrain-base --bogus"), 2);
  EXPECT_EQ(run(""), 2);
  json bad = tiny_config();
  bad["train"]["lr"] = 1.0;
  const fs::path cfg = write_config("bad.json", bad);
  EXPECT_EQ(run("train --config " + cfg.string() + " --out " + path("x.ckpt").string()), 2);
  EXPECT_NE(err_.find("unknown key 'lr'"), std::string::npos) << err_;
}

TEST_F(Cli, PretrainIsReproducible) {
  const fs::path cfg = write_config("run.json", tiny_config());
  ASSERT_EQ(run("pretrain-base --config " + cfg.string() + " --out " + path("a.ckpt").string()), 0) << err_;
  ASSERT_EQ(run("pretrain-base --config " + cfg.string() + " --out " + path("b.ckpt").string()), 0) << err_;
  EXPECT_NO_THROW(load_checkpoint(path("a.ckpt")));
  EXPECT_EQ(read_text(path("a.ckpt")), read_text(path("b.ckpt")));
  EXPECT_TRUE(fs::exists(path("a.ckpt.metrics.jsonl")));
  const std::string log = read_text(path("a.ckpt.metrics.jsonl"));
  const json first = json::parse(log.substr(0, log.find('\n')));
  EXPECT_EQ(first["mode"], "pretrain");
}

TEST_F(Cli, FixedModeNeedsInitAndKeepsBase) {
  json j = tiny_config();
  const fs::path pre_cfg = write_config("run.json", j);
  ASSERT_EQ(run("pretrain-base --config " + pre_cfg.string() + " --out " + path("pre.ckpt").string()), 0) << err_;
  j["train"]["joint_mode"] = "fixed";
  const fs::path cfg = write_config("fixed.json", j);
  EXPECT_EQ(run("train --config " + cfg.string() + " --out " + path("f.ckpt").string()), 2);
  EXPECT_NE(err_.find("--init"), std::string::npos) << err_;

  ASSERT_EQ(run("train --config " + cfg.string() + " --init " + path("pre.ckpt").string() + " --out " +
                path("f.ckpt").string()),
            0)
      << err_;
  const Checkpoint init = load_checkpoint(path("pre.ckpt"));
  const Checkpoint out = load_checkpoint(path("f.ckpt"));
  int compared = 0;
  for (const auto& e : init.entries()) {
    if (e.name.rfind("base.", 0) != 0) continue;
    const auto it = std::find_if(out.entries().begin(), out.entries().end(), [&](const auto& o) { return o.name == e.name; });
    ASSERT_NE(it, out.entries().end()) << e.name;
    EXPECT_EQ(it->payload, e.payload) << e.name;
    ++compared;
  }
  EXPECT_GT(compared, 10);
}

TEST_F(Cli, TrainLogsAreTaggedByOrigin) {
  const fs::path cfg = write_config("run.json", tiny_config());
  ASSERT_EQ(run("pretrain-base --config " + cfg.string() + " --out " + path("pre.ckpt").string()), 0) << err_;
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + path("s.ckpt").string() + " --metrics " +
                path("scratch.jsonl").string()),
            0)
      << err_;
  ASSERT_EQ(run("train --config " + cfg.string() + " --init " + path("pre.ckpt").string() + " --out " +
                path("p.ckpt").string() + " --metrics " + path("pretrained.jsonl").string()),
            0)
      << err_;
  const auto first_line = [&](const std::string& name) {
    const std::string text = read_text(path(name));
    return json::parse(text.substr(0, text.find('\n')));
  };
  const json s = first_line("scratch.jsonl");
  const json p = first_line("pretrained.jsonl");
  EXPECT_EQ(s["init"], "scratch");
  EXPECT_EQ(p["init"], "pretrained");
  EXPECT_EQ(s["mode"], "stop-grad");
  EXPECT_EQ(p["mode"], "stop-grad");
  EXPECT_NE(read_text(path("scratch.jsonl")), read_text(path("pretrained.jsonl")));
}

TEST_F(Cli, GuidedWithoutLabelsIsRejected) {
  json j = tiny_config();
  j["train"]["guided"] = true;
  j["data"]["k_id"] = 1;
  const fs::path cfg = write_config("guided.json", j);
  EXPECT_EQ(run("train --config " + cfg.string() + " --out " + path("g.ckpt").string()), 2);
  EXPECT_FALSE(fs::exists(path("g.ckpt")));
}

TEST_F(Cli, SampleFixedBaseAndSeed) {
  const fs::path ckpt = trained_model();
  Tensor<float> base = Tensor<float>::zeros({1, 1, 1, 8, 8});
  Rng rng(42);
  for (float& v : base.mutable_data()) v = static_cast<float>(rng.normal());
  write_tensor(path("b.vftn"), base);

  ASSERT_EQ(run("sample --ckpt " + ckpt.string() + " --out " + path("s1").string() + " --count 4 --fix-base " +
                path("b.vftn").string()),
            0)
      << err_;
  const Tensor<float> videos = read_tensor<float>(path("s1") / "videos.vftn");
  ASSERT_EQ(videos.shape(), (Shape{4, 4, 1, 8, 8}));
  const std::size_t frame = 64, clip = 4 * frame, mid = 2;
  for (std::size_t k = 1; k < 4; ++k)
    for (std::size_t q = 0; q < frame; ++q)
      ASSERT_EQ(videos.data()[k * clip + mid * frame + q], videos.data()[mid * frame + q]) << k;
  for (std::size_t k = 0; k < 4; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "video_%03zu", k);
    EXPECT_TRUE(fs::exists(path("s1") / (std::string(name) + ".vftn")));
    EXPECT_TRUE(fs::exists(path("s1") / (std::string(name) + ".gif")));
  }
  const json report = read_json(path("s1") / "report.json");
  EXPECT_EQ(report["base_calls"], 5);
  EXPECT_EQ(report["steps"], 5);
  EXPECT_EQ(report["residual_frame_passes"], 5 * 3);
  EXPECT_EQ(report["seed"], 11);
  EXPECT_TRUE(report.contains("config"));

  ASSERT_EQ(run("sample --ckpt " + ckpt.string() + " --out " + path("s2").string() + " --count 2 --seed 5"), 0);
  ASSERT_EQ(run("sample --ckpt " + ckpt.string() + " --out " + path("s3").string() + " --count 2 --seed 5"), 0);
  EXPECT_EQ(read_text(path("s2") / "videos.vftn"), read_text(path("s3") / "videos.vftn"));
  EXPECT_EQ(read_text(path("s2") / "report.json"), read_text(path("s3") / "report.json"));

  write_tensor(path("wrong.vftn"), Tensor<float>::zeros({1, 1, 1, 4, 4}));
  EXPECT_EQ(run("sample --ckpt " + ckpt.string() + " --out " + path("s4").string() + " --count 2 --fix-base " +
                path("wrong.vftn").string()),
            3);
}

TEST_F(Cli, ExtendReplacesAndReusesBaseNoise) {
  const fs::path ckpt = trained_model();
  ASSERT_EQ(run("sample --ckpt " + ckpt.string() + " --out " + path("s").string() + " --count 1"), 0) << err_;
  const std::string input = (path("s") / "video_000.vftn").string();
  const std::string base = (path("s") / "video_000.base.vftn").string();
  const std::string common = "extend --ckpt " + ckpt.string() + " --input " + input + " --base-noise " + base;

  ASSERT_EQ(run(common + " --total-frames 4 --out " + path("e1").string()), 0) << err_;
  const Tensor<float> known = read_tensor<float>(input);
  const Tensor<float> same = read_tensor<float>(path("e1") / "extended.vftn");
  ASSERT_EQ(same.shape(), known.shape());
  double mad = 0;
  for (std::size_t k = 0; k < known.size(); ++k) mad += std::abs(known.data()[k] - same.data()[k]);
  EXPECT_LE(mad / static_cast<double>(known.size()), 0.05);

  ASSERT_EQ(run(common + " --total-frames 12 --out " + path("e3").string()), 0) << err_;
  EXPECT_EQ(read_tensor<float>(path("e3") / "extended.vftn").shape(), (Shape{1, 12, 1, 8, 8}));
  const json report = read_json(path("e3") / "report.json");
  const auto& hashes = report["base_noise_hash"];
  ASSERT_GE(hashes.size(), 2u);
  for (const auto& h : hashes) EXPECT_EQ(h, hashes[0]);
  EXPECT_TRUE(report.contains("overlap_mad"));

  std::string bytes = read_text(input);
  bytes[0] = 'X';
  std::ofstream(path("corrupt.vftn"), std::ios::binary) << bytes;
  EXPECT_EQ(run("extend --ckpt " + ckpt.string() + " --input " + path("corrupt.vftn").string() + " --base-noise " +
                base + " --total-frames 8 --out " + path("e4").string()),
            3);
  EXPECT_NE(err_.find("magic"), std::string::npos) << err_;
  EXPECT_EQ(run("extend --ckpt " + ckpt.string() + " --input " + input + " --base-noise " + path("none.vftn").string() +
                " --total-frames 8 --out " + path("e5").string()),
            3);
}

TEST_F(Cli, EvalReportIsCompleteAndReproducible) {
  const fs::path ckpt = trained_model();
  const fs::path cfg = path("run.json");
  const std::string args = "eval --ckpt " + ckpt.string() + " --config " + cfg.string() +
                           " --cov-samples 100000 --mse-clips 32 --sample-clips 4 --out ";
  ASSERT_EQ(run(args + path("r1.json").string()), 0) << err_;
  ASSERT_EQ(run(args + path("r2.json").string()), 0) << err_;
  EXPECT_EQ(read_text(path("r1.json")), read_text(path("r2.json")));
  const json r = read_json(path("r1.json"));
  for (const char* key : {"noise_cov_max_deviation", "noise_mean_max_deviation", "noise_var_max_deviation",
                          "noise_mse_mid", "noise_mse_nonmid", "noise_mse_combined", "sample_interframe_correlation",
                          "data_interframe_correlation", "sample_identity_consistency", "base_calls",
                          "residual_frame_passes"}) {
    EXPECT_TRUE(r["metrics"].contains(key)) << key;
  }
  EXPECT_LT(r["metrics"]["noise_cov_max_deviation"]["value"].get<double>(), 0.02);
  EXPECT_GE(r["metrics"]["noise_cov_max_deviation"]["samples"].get<long>(), 100000);
  EXPECT_TRUE(r.contains("config"));
  EXPECT_EQ(r["seed"], 11);
}

}  // namespace
}  // namespace vidfuse
