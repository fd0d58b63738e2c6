// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "support.hpp"
#include "vidfuse/vidfuse.hpp"

namespace vidfuse {
namespace {

using vidfuse::testing::random_normal;

ModelConfig tiny_config() {
  ModelConfig c;
  c.channels_base = 8;
  c.channels_residual = 8;
  c.groups = 4;
  c.embed_dim = 8;
  return c;
}

/// Replaces every parameter (including the zero-initialised output layer)
/// with small random values so that every pathway is live.
template <typename T>
void randomise(UNet<T>& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : net.parameters())
    for (auto& v : p.value.mutable_data()) v = static_cast<T>(0.3 * rng.normal());
}

TEST(Embedding, ZeroAlternatesSinCos) {
  const auto e = make_embedding(0, 8);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(e[k], k % 2 ? 1.0 : 0.0);
  EXPECT_THROW(make_embedding(1, 7), InvalidArgument);
}

TEST(Embedding, InjectiveAndBounded) {
  std::set<std::vector<double>> seen;
  for (long t = 0; t <= 1000; ++t) {
    const auto e = make_embedding(t, 64);
    double norm = 0;
    for (double v : e) norm += v * v;
    EXPECT_LE(std::sqrt(norm), 8.0 + 1e-12);
    seen.insert(e);
  }
  EXPECT_EQ(seen.size(), 1001u);
}

TEST(Generators, FreshBaseIsFiniteAndShaped) {
  const BaseGenerator<float> g(ModelConfig{}, {1, 16, 16}, 200, 1);
  const Tensor<float> x = Tensor<float>::full({3, 1, 16, 16}, 0.0f);
  const std::vector<int> steps{1, 100, 200};
  const Tensor<float> y = g.predict(x, steps);
  EXPECT_EQ(y.shape(), x.shape());
  for (float v : y.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(g.predict(x, std::vector<int>{1, 2, 201}), InvalidArgument);
  EXPECT_THROW(g.predict(Tensor<float>::full({3, 2, 16, 16}, 0.0f), steps), ShapeError);
}

TEST(Generators, DeterministicForward) {
  BaseGenerator<float> g(ModelConfig{}, {1, 16, 16}, 200, 2);
  randomise(g.net(), 3);
  const Tensor<float> x = random_normal<float>({2, 1, 16, 16}, 4);
  const std::vector<int> steps{5, 50};
  const Tensor<float> a = g.predict(x, steps), b = g.predict(x, steps);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  const BaseGenerator<float> h(ModelConfig{}, {1, 16, 16}, 200, 2);
  const BaseGenerator<float> k(ModelConfig{}, {1, 16, 16}, 200, 2);
  for (std::size_t p = 0; p < h.net().parameters().size(); ++p) {
    const auto& u = h.net().parameters()[p].value;
    const auto& v = k.net().parameters()[p].value;
    EXPECT_TRUE(std::equal(u.data().begin(), u.data().end(), v.data().begin()));
  }
}

TEST(Generators, FreshOutputIsZero) {
  const ResidualGenerator<float> g(ModelConfig{}, {1, 16, 16}, 8, 200, 5);
  const Tensor<float> x = random_normal<float>({2, 1, 16, 16}, 6);
  const Tensor<float> y = g.predict(x, std::vector<int>{3, 4}, std::vector<int>{0, 7});
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Generators, FrameIndexChangesResidualOutput) {
  ResidualGenerator<float> g(ModelConfig{}, {1, 16, 16}, 8, 200, 7);
  randomise(g.net(), 8);
  const Tensor<float> x = random_normal<float>({1, 1, 16, 16}, 9);
  const Tensor<float> a = g.predict(x, std::vector<int>{10}, std::vector<int>{0});
  const Tensor<float> b = g.predict(x, std::vector<int>{10}, std::vector<int>{1});
  EXPECT_GT(vidfuse::testing::max_abs_diff(a, b), 1e-4);
  EXPECT_THROW(g.predict(x, std::vector<int>{10}, std::vector<int>{4}), InvalidArgument);
  EXPECT_THROW(g.predict(x, std::vector<int>{10}, std::vector<int>{8}), InvalidArgument);
}

TEST(Generators, ConditioningPathwayIsWired) {
  ModelConfig c;
  c.cond_classes = 3;
  BaseGenerator<float> g(c, {1, 16, 16}, 200, 10);
  randomise(g.net(), 11);
  const Tensor<float> x = random_normal<float>({1, 1, 16, 16}, 12);
  const Tensor<float> a = g.predict(x, std::vector<int>{10}, std::vector<int>{0});
  const Tensor<float> b = g.predict(x, std::vector<int>{10}, std::vector<int>{2});
  EXPECT_GT(vidfuse::testing::max_abs_diff(a, b), 1e-4);
}

TEST(Generators, ResidualIsNoLargerThanBase) {
  const ModelConfig c;
  const BaseGenerator<float> base(c, {1, 16, 16}, 200, 1);
  const ResidualGenerator<float> resid(c, {1, 16, 16}, 8, 200, 2);
  EXPECT_LE(resid.net().parameter_count(), base.net().parameter_count());
  EXPECT_EQ(c.channels_base, 2 * c.channels_residual);
}

TEST(Generators, GradientCheckOverBothGenerators) {
  const ModelConfig c = tiny_config();
  const FrameShape frame{1, 8, 8};
  BaseGenerator<double> base(c, frame, 10, 1);
  ResidualGenerator<double> resid(c, frame, 2, 10, 2);
  randomise(base.net(), 3);
  randomise(resid.net(), 4);
  const NoiseSchedule s = make_linear_schedule(10, 0.05, 0.3);
  const LambdaProfile profile = LambdaProfile::uniform(2, 0.5);
  const Tensor<double> x = vidfuse::testing::random_uniform<double>({1, 2, 1, 8, 8}, 5);
  auto loss = [&] { return loss_step<double>(x, base, resid, s, profile, Rng(6), JointMode::kNoStopGrad).total; };
  double worst = 0;
  for (auto* net : {&base.net(), &resid.net()})
    for (auto& p : net->parameters()) worst = std::max(worst, grad_check(loss, p.value, 1e-4));
  EXPECT_LT(worst, 1e-3);
}

// ---------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint ck;
  BaseGenerator<float> g(ModelConfig{}, {1, 16, 16}, 200, 1);
  randomise(g.net(), 2);
  store_parameters(ck, "base.", g.net());
  ck.put_tensor("extra.f64", random_normal<double>({3, 5}, 3));
  ck.put_text("meta.config", "{\"a\":1}");
  ck.put_int("meta.step", -42);
  const auto bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_TRUE(back == ck);
  EXPECT_EQ(back.integer("meta.step"), -42);
  EXPECT_EQ(back.text("meta.config"), "{\"a\":1}");
  BaseGenerator<float> h(ModelConfig{}, {1, 16, 16}, 200, 9);
  restore_parameters(back, "base.", h.net());
  for (std::size_t p = 0; p < g.net().parameters().size(); ++p) {
    const auto& u = g.net().parameters()[p].value;
    const auto& v = h.net().parameters()[p].value;
    EXPECT_EQ(std::memcmp(u.data().data(), v.data().data(), u.size() * sizeof(float)), 0);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "vidfuse_test_ckpt.vfck";
  Checkpoint ck;
  ck.put_tensor("w", random_normal<float>({4, 4}, 1));
  save_checkpoint(path, ck);
  EXPECT_TRUE(load_checkpoint(path) == ck);
  std::filesystem::remove(path);
}

FormatErrorKind decode_kind(std::vector<std::uint8_t> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "corrupt checkpoint accepted";
  return FormatErrorKind::kIo;
}

TEST(Checkpoint, CorruptionRejectedWithStructuredErrors) {
  Checkpoint ck;
  ck.put_tensor("w", random_normal<float>({4, 4}, 1));
  ck.put_int("meta.step", 3);
  const auto good = encode_checkpoint(ck);
  auto magic = good;
  magic[0] = 'X';
  EXPECT_EQ(decode_kind(magic), FormatErrorKind::kBadMagic);
  auto version = good;
  version[4] = 9;
  EXPECT_EQ(decode_kind(version), FormatErrorKind::kBadVersion);
  EXPECT_EQ(decode_kind(std::vector<std::uint8_t>(good.begin(), good.end() - 5)), FormatErrorKind::kTruncated);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(decode_kind(trailing), FormatErrorKind::kTrailingBytes);
  EXPECT_EQ(decode_kind(std::vector<std::uint8_t>(good.begin(), good.begin() + 7)), FormatErrorKind::kTruncated);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.vfck"), FormatError);
}

TEST(Checkpoint, ShapeMismatchOnRestore) {
  Checkpoint ck;
  const BaseGenerator<float> g(ModelConfig{}, {1, 16, 16}, 200, 1);
  store_parameters(ck, "base.", g.net());
  ModelConfig wide;
  wide.channels_base = 64;
  BaseGenerator<float> h(wide, {1, 16, 16}, 200, 1);
  EXPECT_THROW(restore_parameters(ck, "base.", h.net()), FormatError);
}

}  // namespace
}  // namespace vidfuse
