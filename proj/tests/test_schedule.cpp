#include "support.hpp"

#include <gtest/gtest.h>

using namespace rlab;

TEST(Schedule, LinearThousandStepTerminalAlphaBar) {
  const auto s = build_schedule(ScheduleKind::linear, 1000, 1e-4, 0.02);
  EXPECT_NEAR(s.alpha_bar(1000), 4.035829765375683e-05, 1e-15);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(1000), 0.02);
}

TEST(Schedule, TwoStepHandComputed) {
  const auto s = build_schedule(ScheduleKind::linear, 2, 0.1, 0.2);
  EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
  EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
}

TEST(Schedule, FortyStepTerminalAlphaBar) {
  const auto s = build_schedule(ScheduleKind::linear, 40, 1e-4, 0.02);
  EXPECT_NEAR(s.alpha_bar(40), 0.66714909110329547935, 1e-14);
}

TEST(Schedule, TrainingScheduleReachesNearPureNoise) {
  const auto s = build_schedule(ScheduleKind::linear, 100, 1e-3, 0.2);
  EXPECT_NEAR(s.alpha_bar(100), 2.039008975564077654e-05, 1e-15);
}

TEST(Schedule, AlphaBarIsRunningProductAndDecreasing) {
  const CounterRng rng(3, stream_id("schedule-property"));
  for (int trial = 0; trial < 50; ++trial) {
    const int T = 2 + rng.uniform_int(1000 * trial, 0, 60);
    std::vector<double> betas(T + 1, 0.0);
    std::vector<int> ts(T + 1);
    for (int t = 0; t <= T; ++t) ts[t] = t;
    for (int t = 1; t <= T; ++t) betas[t] = 1e-4 + 0.3 * rng.uniform(1000 * trial + t);
    const NoiseSchedule s(betas, ts, T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= 1.0 - betas[t];
      EXPECT_NEAR(s.alpha_bar(t), prod, 1e-15 * T);
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      EXPECT_GT(s.alpha_bar(t), 0.0);
    }
  }
}

TEST(Schedule, CosineStaysWithinBetaBounds) {
  const auto s = build_schedule(ScheduleKind::cosine, 50, 1e-4, 0.999 - 1e-9);
  for (int t = 1; t <= 50; ++t) {
    EXPECT_GE(s.beta(t), 1e-4);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  }
}

TEST(Schedule, RejectsInvalidParameters) {
  EXPECT_THROW((void)build_schedule(ScheduleKind::linear, 1, 1e-4, 0.02), ConfigError);
  EXPECT_THROW((void)build_schedule(ScheduleKind::linear, 10, 0.0, 0.02), ConfigError);
  EXPECT_THROW((void)build_schedule(ScheduleKind::linear, 10, 0.03, 0.02), ConfigError);
  EXPECT_THROW((void)build_schedule(ScheduleKind::linear, 10, 1e-4, 1.0), ConfigError);
  EXPECT_THROW((void)schedule_kind_from("quadratic"), ConfigError);
  const auto s = build_schedule(ScheduleKind::linear, 10, 1e-4, 0.02);
  EXPECT_THROW((void)s.alpha_bar(11), ArgumentError);
  EXPECT_THROW((void)s.alpha_bar(-1), ArgumentError);
  EXPECT_THROW((void)respace(s, 0), ConfigError);
  EXPECT_THROW((void)respace(s, 11), ConfigError);
}

TEST(Schedule, RespacingKeepsAlphaBarAtSelectedSteps) {
  const auto base = build_schedule(ScheduleKind::linear, 100, 1e-3, 0.2);
  const auto r = respace(base, 40);
  ASSERT_EQ(r.steps(), 40);
  EXPECT_EQ(r.train_steps(), 100);
  EXPECT_EQ(r.model_timestep(1), 1);
  EXPECT_EQ(r.model_timestep(2), 4);
  EXPECT_EQ(r.model_timestep(3), 6);
  EXPECT_EQ(r.model_timestep(40), 100);
  for (int k = 1; k <= 40; ++k) {
    EXPECT_NEAR(r.alpha_bar(k), base.alpha_bar(r.model_timestep(k)), 1e-15);
    if (k > 1) {
      EXPECT_GT(r.model_timestep(k), r.model_timestep(k - 1));
    }
  }
  const auto one = respace(base, 1);
  EXPECT_EQ(one.model_timestep(1), 100);
  const auto same = respace(base, 100);
  for (int t = 1; t <= 100; ++t) EXPECT_NEAR(same.beta(t), base.beta(t), 1e-15);
}

TEST(Schedule, ForwardNoiseClosedForm) {
  const auto s = build_schedule(ScheduleKind::linear, 2, 0.1, 0.2);
  const Matrix<double> one = Matrix<double>::Ones(1, 1);
  EXPECT_NEAR(forward_noise(s, one, 2, one)(0, 0), 1.3776783996367751474, 1e-15);
  EXPECT_THROW((void)forward_noise(s, one, 0, one), ArgumentError);
  EXPECT_THROW((void)forward_noise(s, one, 1, Matrix<double>(Matrix<double>::Ones(2, 1))), ArgumentError);
}

TEST(Schedule, AncestralCoefficientsHandComputed) {
  const auto s = build_schedule(ScheduleKind::linear, 2, 0.1, 0.2);
  const auto k = sampler_coeffs(s, 2, SamplerKind::ancestral);
  EXPECT_NEAR(k.a, 1.1180339887498948482, 1e-15);
  EXPECT_NEAR(k.b, -0.42257712736425828875, 1e-15);
  EXPECT_NEAR(k.c, 0.26726124191242438468, 1e-15);
  EXPECT_DOUBLE_EQ(sampler_coeffs(s, 1, SamplerKind::ancestral).c, 0.0);
}

TEST(Schedule, DeterministicCoefficientsHandComputed) {
  const auto s = build_schedule(ScheduleKind::linear, 2, 0.1, 0.2);
  const auto k = sampler_coeffs(s, 2, SamplerKind::deterministic, 0.0);
  EXPECT_NEAR(k.a, 1.1180339887498948482, 1e-15);
  EXPECT_NEAR(k.b, -0.27538021229312367106, 1e-15);
  EXPECT_EQ(k.c, 0.0);
  EXPECT_THROW((void)sampler_coeffs(s, 2, SamplerKind::deterministic, 1.5), ArgumentError);
}

TEST(Schedule, EtaOneMatchesAncestralStep) {
  const auto s = build_schedule(ScheduleKind::linear, 30, 1e-3, 0.2);
  for (int t = 2; t <= 30; ++t) {
    const auto anc = sampler_coeffs(s, t, SamplerKind::ancestral);
    const auto det = sampler_coeffs(s, t, SamplerKind::deterministic, 1.0);
    EXPECT_NEAR(anc.a, det.a, 1e-12);
    EXPECT_NEAR(anc.b, det.b, 1e-12);
    EXPECT_NEAR(anc.c, det.c, 1e-12);
  }
}
