// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "vidfuse/vidfuse.hpp"

namespace vidfuse {
namespace {

using vidfuse::testing::ZeroBase;
using vidfuse::testing::ZeroResidual;

TEST(EvalReport, RecordsSamplesAndTolerance) {
  EvalReport r;
  r.add("mse", 0.25, 1000, mean_tolerance(1000));
  const auto j = r.to_json();
  EXPECT_DOUBLE_EQ(j["mse"]["value"].get<double>(), 0.25);
  EXPECT_EQ(j["mse"]["samples"].get<long>(), 1000);
  EXPECT_NEAR(j["mse"]["tolerance"].get<double>(), 3.0 / std::sqrt(1000.0), 1e-15);
  EXPECT_THROW(r.at("missing"), InvalidArgument);
}

TEST(NoiseCovariance, AnalyticTargets) {
  const LambdaProfile p({0.5, 0.5, 1.0, 0.0});
  const CovarianceCheck c = noise_covariance_check(p, 200000, Rng(1));
  EXPECT_NEAR(c.cov(0, 1), 0.5, 0.02);
  EXPECT_NEAR(c.cov(0, 2), 0.70711, 0.02);
  EXPECT_NEAR(c.cov(0, 3), 0.0, 0.02);
  EXPECT_NEAR(c.cov(3, 3), 1.0, 0.02);
  EXPECT_LT(c.max_cov_deviation, 0.02);
  EXPECT_GE(c.samples, 200000);
  const CovarianceCheck zero = noise_covariance_check(LambdaProfile({0.0, 0.0, 1.0, 0.0}), 100000, Rng(2));
  EXPECT_NEAR(zero.cov(0, 1), 0.0, 0.02);
  EXPECT_NEAR(zero.cov(0, 3), 0.0, 0.02);
}

TEST(InterframeCorrelation, IdenticalAndIndependentFrames) {
  const Tensor<double> frame = vidfuse::testing::random_normal<double>({1, 1, 1, 16, 16}, 3);
  std::vector<double> same;
  for (int i = 0; i < 4; ++i) same.insert(same.end(), frame.data().begin(), frame.data().end());
  EXPECT_NEAR(interframe_correlation(Tensor<double>({1, 4, 1, 16, 16}, same)).value, 1.0, 1e-12);

  const auto noise = vidfuse::testing::random_normal<double>({64, 8, 1, 16, 16}, 4);
  const CorrelationResult r = interframe_correlation(noise);
  EXPECT_NEAR(r.value, 0.0, 0.05);
  EXPECT_EQ(r.pairs, 64 * 7);
  EXPECT_EQ(r.constant_pairs, 0);
}

TEST(InterframeCorrelation, ConstantFramesAreFlagged) {
  std::vector<double> v(3 * 16, 0.5);
  for (std::size_t q = 0; q < 16; ++q) v[32 + q] = static_cast<double>(q);
  const CorrelationResult r = interframe_correlation(Tensor<double>({1, 3, 1, 4, 4}, v));
  // Pair (0,1): equal constants -> 1; pair (1,2): constant vs varying -> 0.
  EXPECT_NEAR(r.value, 0.5, 1e-12);
  EXPECT_EQ(r.constant_pairs, 2);
  EXPECT_THROW(interframe_correlation(Tensor<double>({1, 1, 1, 4, 4}, std::vector<double>(16, 0.0))), ShapeError);
}

TEST(InterframeCorrelation, DiffusedLatentsFollowLambda) {
  const NoiseSchedule s = make_default_schedule();
  for (double lam : {0.2, 0.8}) {
    const LambdaProfile p = LambdaProfile::uniform(4, lam);
    const Tensor<double> x = Tensor<double>::zeros({64, 4, 1, 16, 16});
    const auto dn = sample_decomposed_noise<double>(64, p, {1, 16, 16}, Rng(5));
    const Tensor<double> z = diffuse(x, 200, dn, s, p);
    // Pair (0,1) has target lambda; (1,2) and (2,3) touch the middle frame.
    const double want = (lam + 2 * std::sqrt(lam)) / 3;
    EXPECT_NEAR(interframe_correlation(z).value, want, 0.03) << lam;
  }
}

TEST(NoisePredictionMse, ZeroGeneratorsGiveUnitError) {
  const NoiseSchedule s = make_default_schedule();
  const LambdaProfile p = LambdaProfile::uniform(4, 0.5);
  const Tensor<double> videos = vidfuse::testing::random_uniform<double>({16, 4, 1, 8, 8}, 6);
  const NoiseMse z = noise_prediction_mse<double>(ZeroBase<double>{}, ZeroResidual<double>{}, videos, s, p, 256, Rng(7));
  EXPECT_EQ(z.samples, 256);
  EXPECT_NEAR(z.mid, 1.0, 0.05);
  EXPECT_NEAR(z.nonmid, 1.0, 0.05);
  EXPECT_NEAR(z.combined, 1.0, 0.05);
}

TEST(IdentityClassifier, GroundTruthClipsAreConsistent) {
  const ToyVideoDataset data(ToyDatasetSpec{});
  IdentityClassifier c;
  EXPECT_THROW(identity_consistency(data.videos(), c), Error);
  EXPECT_THROW(c.classify(data.videos().data().subspan(0, 256)), Error);
  c.fit(data.videos(), data.identities());
  EXPECT_EQ(c.classes(), 3);
  EXPECT_GE(identity_consistency(data.videos(), c), 0.95);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < data.size(); ++k) correct += c.classify(data.videos().data().subspan(k * 8 * 256, 256)) == data.identities()[k];
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(data.size()), 0.95);
  // A held-out dataset drawn with another seed.
  ToyDatasetSpec other;
  other.seed = 77;
  other.clips = 90;
  EXPECT_GE(identity_consistency(ToyVideoDataset(other).videos(), c), 0.95);
}

TEST(IdentityClassifier, NoiseVideosAreNotAboveChance) {
  const ToyVideoDataset data(ToyDatasetSpec{});
  IdentityClassifier c;
  c.fit(data.videos(), data.identities());
  const auto noise = vidfuse::testing::random_uniform<float>({32, 8, 1, 16, 16}, 8);
  EXPECT_LE(identity_consistency(noise, c), 1.0 / 3.0 + 0.1);
  EXPECT_THROW(identity_consistency(noise, c, 5), InvalidArgument);
}

TEST(IdentityConsistency, GroupsPoolFrames) {
  ToyDatasetSpec spec;
  spec.clips = 6;
  const ToyVideoDataset data(spec);
  IdentityClassifier c;
  c.fit(ToyVideoDataset(ToyDatasetSpec{}).videos(), ToyVideoDataset(ToyDatasetSpec{}).identities());
  // Clips 0..5 cycle identities 0,1,2,0,1,2: a group of three mixes three identities.
  EXPECT_NEAR(identity_consistency(data.videos(), c, 3), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(identity_consistency(data.videos(), c, 1), 1.0, 1e-12);
}

TEST(PassCounter, ChecksBothCounts) {
  EXPECT_NO_THROW(pass_counter(PassCounts{50, 350, 50}, 50, 8));
  EXPECT_NO_THROW(pass_counter(PassCounts{1, 1, 1}, 1, 2));
  EXPECT_NO_THROW(pass_counter(PassCounts{50, 750, 50}, 50, 16));
  try {
    pass_counter(PassCounts{51, 350, 50}, 50, 8);
    ADD_FAILURE();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("base_calls=51"), std::string::npos);
    EXPECT_NE(msg.find("residual_frame_passes=350"), std::string::npos);
  }
}

}  // namespace
}  // namespace vidfuse
