// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "vidfuse/diffusion.hpp"
#include "vidfuse/evaluation.hpp"

namespace vidfuse {
namespace {

using vidfuse::testing::max_abs_diff;
using vidfuse::testing::random_normal;
using vidfuse::testing::random_uniform;

const FrameShape kTiny{1, 4, 4};

TEST(LambdaProfile, MiddleFramePinned) {
  const LambdaProfile p = LambdaProfile::uniform(8, 0.3);
  EXPECT_EQ(p.mid(), 4);
  EXPECT_EQ(p.lambda(4), 1.0);
  EXPECT_EQ(p.lambda(0), 0.3);
  EXPECT_EQ(LambdaProfile::uniform(16, 0.5).mid(), 8);
  EXPECT_THROW(LambdaProfile({0.5, 0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(LambdaProfile({1.2, 1.0}), InvalidArgument);
  EXPECT_NO_THROW(LambdaProfile({0.2, 1.0, 0.0}));
}

TEST(DecomposedNoise, DeterministicAndShaped) {
  const LambdaProfile p = LambdaProfile::uniform(5, 0.5);
  const auto a = sample_decomposed_noise<float>(3, p, kTiny, Rng(4));
  const auto b = sample_decomposed_noise<float>(3, p, kTiny, Rng(4));
  EXPECT_EQ(a.base.shape(), (Shape{3, 1, 1, 4, 4}));
  EXPECT_EQ(a.residuals.shape(), (Shape{3, 5, 1, 4, 4}));
  EXPECT_TRUE(std::equal(a.base.data().begin(), a.base.data().end(), b.base.data().begin()));
  EXPECT_TRUE(std::equal(a.residuals.data().begin(), a.residuals.data().end(), b.residuals.data().begin()));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(a.residuals[(c * 5 + 2) * 16 + k], 0.0f);
}

TEST(DecomposedNoise, BaseMoments) {
  const LambdaProfile p = LambdaProfile::uniform(2, 0.5);
  const auto dn = sample_decomposed_noise<double>(400, p, {1, 16, 16}, Rng(5));
  double m = 0, v = 0;
  for (double x : dn.base.data()) m += x;
  m /= static_cast<double>(dn.base.size());
  for (double x : dn.base.data()) v += (x - m) * (x - m);
  v /= static_cast<double>(dn.base.size());
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(v, 1.0, 0.02);
}

TEST(DecomposedNoise, SharedGroupsAreBitIdentical) {
  const LambdaProfile p = LambdaProfile::uniform(4, 0.5);
  NoiseAssignment g{{0, 0, 1}, {0, 1, 0}};
  const auto dn = sample_decomposed_noise<float>(3, p, kTiny, Rng(6), &g);
  const std::size_t fs = 16, clip = 4 * fs;
  EXPECT_TRUE(std::equal(dn.base.data().begin(), dn.base.data().begin() + fs, dn.base.data().begin() + fs));
  EXPECT_FALSE(std::equal(dn.base.data().begin(), dn.base.data().begin() + fs, dn.base.data().begin() + 2 * fs));
  EXPECT_TRUE(std::equal(dn.residuals.data().begin(), dn.residuals.data().begin() + clip, dn.residuals.data().begin() + 2 * clip));
  EXPECT_FALSE(std::equal(dn.residuals.data().begin(), dn.residuals.data().begin() + clip, dn.residuals.data().begin() + clip));
  NoiseAssignment bad{{0, 0}, {0, 1}};
  EXPECT_THROW(sample_decomposed_noise<float>(3, p, kTiny, Rng(6), &bad), ShapeError);
}

TEST(ComposeNoise, LimitsAndHandValue) {
  const LambdaProfile p({1.0, 0.0, 1.0, 0.5, 0.25});  // mid = 2
  const Tensor<double> base({1, 1, 1, 1, 1}, {2.0});
  const Tensor<double> res({1, 5, 1, 1, 1}, {0.7, -0.4, 0.0, 0.0, 1.0});
  const Tensor<double> eps = compose_noise(DecomposedNoise<double>{base, res}, p);
  EXPECT_DOUBLE_EQ(eps[0], 2.0);                  // lambda 1: pure base
  EXPECT_DOUBLE_EQ(eps[1], -0.4);                 // lambda 0: pure residual
  EXPECT_DOUBLE_EQ(eps[2], 2.0);                  // middle frame
  EXPECT_NEAR(eps[3], 1.41421, 1e-5);             // sqrt(0.5) * 2
  EXPECT_NEAR(eps[4], 0.5 * 2.0 + std::sqrt(0.75), 1e-12);
  EXPECT_THROW(compose_noise(DecomposedNoise<double>{base, res}, LambdaProfile::uniform(4, 0.5)), ShapeError);
}

TEST(Diffuse, HandValueAndCleanEndpoint) {
  const NoiseSchedule s = make_linear_schedule(4, 0.1, 0.4);
  const Tensor<double> x({1, 1, 1, 1, 1}, {1.0});
  const Tensor<double> eps({1, 1, 1, 1, 1}, {1.0});
  const std::vector<int> t4{4}, t0{0};
  EXPECT_NEAR(diffuse_with_noise(x, std::span<const int>(t4), eps, s)[0], 1.38514, 1e-5);
  EXPECT_EQ(diffuse_with_noise(x, std::span<const int>(t0), eps, s)[0], 1.0);
  const std::vector<int> t9{9};
  EXPECT_THROW(diffuse_with_noise(x, std::span<const int>(t9), eps, s), InvalidArgument);
}

TEST(Diffuse, MiddleFrameUsesPureBaseNoise) {
  const NoiseSchedule s = make_default_schedule();
  const LambdaProfile p = LambdaProfile::uniform(4, 0.3);
  const auto dn = sample_decomposed_noise<double>(2, p, kTiny, Rng(8));
  const Tensor<double> x = random_uniform<double>({2, 4, 1, 4, 4}, 9);
  const Tensor<double> z = diffuse(x, 50, dn, s, p);
  const auto [a, n] = s.marginal_coeffs(50);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 16; ++k)
      EXPECT_NEAR(z[(b * 4 + 2) * 16 + k], a * x[(b * 4 + 2) * 16 + k] + n * dn.base[b * 16 + k], 1e-12);
}

TEST(StepTransition, PureShrinkAndHandValue) {
  const NoiseSchedule s = make_linear_schedule(2, 0.1, 0.2);
  const LambdaProfile p({1.0});
  const Tensor<double> z({1, 1, 1, 1, 1}, {1.0});
  const Tensor<double> zero({1, 1, 1, 1, 1}, {0.0});
  const Tensor<double> one({1, 1, 1, 1, 1}, {1.0});
  EXPECT_NEAR(step_transition(z, 1, zero, zero, s, p)[0], std::sqrt(0.9), 1e-15);
  EXPECT_NEAR(step_transition(z, 1, one, zero, s, p)[0], 1.26491, 1e-5);
  EXPECT_THROW(step_transition(z, 1, one, Tensor<double>({1, 2, 1, 1, 1}, {0, 0}), s, p), ShapeError);
}

TEST(AccumulateBase, FirstStepAndHandValue) {
  const NoiseSchedule s = make_linear_schedule(2, 0.1, 0.2);  // alpha_hat_1 = 0.9, alpha_hat_2 = 0.72
  const Tensor<double> b1({1}, {1.0});
  const Tensor<double> step({1}, {1.0});
  EXPECT_NEAR(accumulate_base(b1, Tensor<double>({1}, {0.37}), s, 1)[0], 0.37, 1e-15);
  EXPECT_NEAR(accumulate_base(b1, step, s, 2)[0], 1.37967, 1e-5);
  EXPECT_THROW(accumulate_base(b1, step, s, 0), InvalidArgument);
}

TEST(AccumulateBase, PreservesUnitVariance) {
  const NoiseSchedule s = make_default_schedule();
  const Tensor<double> prev = random_normal<double>({100000}, 10);
  const Tensor<double> step = random_normal<double>({100000}, 11);
  for (int t : {2, 50, 200}) {
    const Tensor<double> b = accumulate_base(prev, step, s, t);
    double v = 0;
    for (double x : b.data()) v += x * x;
    EXPECT_NEAR(v / 1e5, 1.0, 0.02) << "t=" << t;
    const double coeff = (s.alpha(t) * (1 - s.alpha_hat(t - 1)) + (1 - s.alpha(t))) / (1 - s.alpha_hat(t));
    EXPECT_NEAR(coeff, 1.0, 1e-12);
  }
}

TEST(StepMarginal, ConsistentIn32And64Bit) {
  const NoiseSchedule s = make_linear_schedule(10, 0.05, 0.3);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const LambdaProfile p({0.2, 0.9, 1.0, 0.5});
    EXPECT_LE(vidfuse::testing::step_marginal_gap<float>(s, p, 2, kTiny, seed), 1e-5);
    EXPECT_LE(vidfuse::testing::step_marginal_gap<double>(s, p, 2, kTiny, seed), 1e-10);
  }
}

TEST(DecomposeFrames, RecompositionIdentity) {
  const LambdaProfile p({0.5, 0.0, 1.0, 0.9});
  const Tensor<double> x = random_uniform<double>({3, 4, 1, 4, 4}, 12);
  const auto parts = decompose_frames(x, p);
  EXPECT_LE(max_abs_diff(recompose_frames(parts, p), x), 1e-12);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t k = 0; k < 16; ++k) {
      EXPECT_EQ(parts.deltas[(b * 4 + 2) * 16 + k], 0.0);
      EXPECT_EQ(parts.deltas[(b * 4 + 1) * 16 + k], x[(b * 4 + 1) * 16 + k]);  // lambda 0
    }
  const Tensor<float> xf = random_uniform<float>({2, 4, 1, 4, 4}, 13);
  EXPECT_LE(max_abs_diff(recompose_frames(decompose_frames(xf, p), p), xf), 1e-6);
}

TEST(DecomposeFrames, IdenticalFrames) {
  const LambdaProfile p({0.36, 1.0});
  std::vector<double> v(32);
  for (std::size_t k = 0; k < 16; ++k) v[k] = v[16 + k] = 0.1 * static_cast<double>(k) - 0.5;
  const Tensor<double> x({1, 2, 1, 4, 4}, v);
  const auto parts = decompose_frames(x, p);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(parts.deltas[k], v[k] * (1 - 0.6) / 0.8, 1e-12);
  EXPECT_THROW(decompose_frames(x, LambdaProfile({1.0, 1.0})), InvalidArgument);
}

TEST(NoiseStatistics, MarginalAndCrossFrame) {
  for (double lam : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const LambdaProfile p = LambdaProfile::uniform(4, lam);
    const CovarianceCheck c = noise_covariance_check(p, 100000, Rng(20));
    EXPECT_GE(c.samples, 100000);
    EXPECT_LT(c.max_mean_deviation, 0.02) << lam;
    EXPECT_LT(c.max_var_deviation, 0.02) << lam;
    EXPECT_LT(c.max_cov_deviation, 0.02) << lam;
    EXPECT_NEAR(c.cov(0, 1), lam, 0.02);
    EXPECT_NEAR(c.cov(0, 2), std::sqrt(lam), 0.02);
  }
}

}  // namespace
}  // namespace vidfuse
