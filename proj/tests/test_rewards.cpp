#include "support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace rlab;
using rlab::testing::central_difference;
using rlab::testing::relative_error;

namespace {

RewardSpec spec_of(RewardKind kind) {
  RewardSpec r;
  r.kind = kind;
  r.anchors = {{1.0, -0.5}, {-2.0, 0.25}, {0.3, 0.9}};
  r.norm_lo = -3.0;
  r.norm_hi = 1.0;
  return r;
}

void check_reward_gradient(const RewardModel<double>& m, const Matrix<double>& x, const std::vector<int>& cls) {
  const std::vector<double> w{0.7, -1.3, 0.4};
  Matrix<double> d;
  (void)m.raw_with_grad(x, cls, w, d);
  Vector<double> flat = Eigen::Map<const Vector<double>>(x.data(), x.size());
  auto f = [&](const Vector<double>& v) {
    const Matrix<double> xv = Eigen::Map<const Matrix<double>>(v.data(), x.rows(), x.cols());
    const Vector<double> r = m.raw(xv, cls);
    return w[0] * r[0] + w[1] * r[1] + w[2] * r[2];
  };
  for (Index i = 0; i < flat.size(); ++i)
    EXPECT_LT(relative_error(d.data()[i], central_difference(f, flat, i)), 1e-5) << to_string(m.spec().kind) << " " << i;
}

}  // namespace

TEST(Rewards, RegionTargetClosedForm) {
  const RewardModel<double> m(spec_of(RewardKind::region_target));
  Matrix<double> x(2, 2);
  x << 1.0, 0.0, 0.5, 0.0;
  const Vector<double> r = m.raw(x, std::vector<int>{0, 1});
  EXPECT_DOUBLE_EQ(r[0], -1.0);
  EXPECT_DOUBLE_EQ(r[1], -(4.0 + 0.0625));
}

TEST(Rewards, BrightnessClosedForm) {
  RewardSpec s;
  s.kind = RewardKind::brightness;
  const RewardModel<double> m(s);
  Matrix<double> x(4, 1);
  x << 1, -1, 0.5, 0.3;
  EXPECT_DOUBLE_EQ(m.raw(x, std::vector<int>{0})[0], 0.2);
}

TEST(Rewards, PrototypeSimilarityIsCosineUnderIdentityFeatures) {
  const RewardModel<double> m(spec_of(RewardKind::prototype_similarity));
  Matrix<double> x(2, 1);
  x << 2.0, -1.0;
  EXPECT_NEAR(m.raw(x, std::vector<int>{0})[0], 1.0, 1e-15);
  x << 1.0, 2.0;
  EXPECT_NEAR(m.raw(x, std::vector<int>{0})[0], 0.0, 1e-15);
}

TEST(Rewards, ClassifierMarginIsLogitGap) {
  const auto c = init_classifier<double>(2, 6, 3, 4);
  const RewardModel<double> m(spec_of(RewardKind::classifier_margin), c);
  const Matrix<double> x = normal_matrix<double>(2, 3, 0, "x");
  const std::vector<int> cls{0, 1, 2};
  const Vector<double> r = m.raw(x, cls);
  const Matrix<double> logits = detail::classifier_forward(c, x).logits;
  for (Index j = 0; j < 3; ++j) {
    double rival = -1e300;
    for (Index k = 0; k < 3; ++k)
      if (k != cls[j]) rival = std::max(rival, logits(k, j));
    EXPECT_NEAR(r[j], logits(cls[j], j) - rival, 1e-14);
  }
}

TEST(Rewards, GradientsMatchFiniteDifferences) {
  const Matrix<double> x = normal_matrix<double>(2, 3, 1, "x");
  const std::vector<int> cls{0, 2, 1};
  check_reward_gradient(RewardModel<double>(spec_of(RewardKind::region_target)), x, cls);
  auto proto = spec_of(RewardKind::prototype_similarity);
  proto.extractor = ExtractorSpec{"random_features", 2, 16, 0, 0.7, 3};
  check_reward_gradient(RewardModel<double>(proto), x, cls);
  check_reward_gradient(RewardModel<double>(spec_of(RewardKind::classifier_margin), init_classifier<double>(2, 6, 3, 4)), x,
                        cls);
  RewardSpec b;
  b.kind = RewardKind::brightness;
  check_reward_gradient(RewardModel<double>(b), x, cls);
}

TEST(Rewards, RescaleClampsAndScales) {
  RewardSpec s;
  s.norm_lo = -2.0;
  s.norm_hi = 2.0;
  s.scale = 1e-3;
  EXPECT_DOUBLE_EQ(rescale_reward(s, -5.0), 0.0);
  EXPECT_DOUBLE_EQ(rescale_reward(s, 0.0), 0.5e-3);
  EXPECT_DOUBLE_EQ(rescale_reward(s, 1.0), 0.75e-3);
  EXPECT_DOUBLE_EQ(rescale_reward(s, 9.0), 1e-3);
  EXPECT_DOUBLE_EQ(rescale_slope(s, 0.0), 0.25e-3);
  EXPECT_DOUBLE_EQ(rescale_slope(s, 3.0), 0.0);
  double prev = -1.0;
  for (double r = -4.0; r <= 4.0; r += 0.01) {
    const double v = rescale_reward(s, r);
    EXPECT_GE(v, prev);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, s.scale);
    prev = v;
  }
}

TEST(Rewards, PercentileInterpolatesLinearly) {
  std::vector<double> v(101);
  std::iota(v.begin(), v.end(), 0.0);
  std::reverse(v.begin(), v.end());
  EXPECT_DOUBLE_EQ(percentile(v, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 99.0), 99.0);
  EXPECT_DOUBLE_EQ(percentile({0.0, 10.0}, 25.0), 2.5);
  EXPECT_THROW((void)percentile({}, 50.0), ArgumentError);
}

TEST(Rewards, CalibrationBoundsOfStandardNormal) {
  const CounterRng rng(8, stream_id("calibration-test"));
  std::vector<double> v(200000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal(i);
  const auto [lo, hi] = calibrate_bounds(v);
  EXPECT_NEAR(lo, -2.3263478740408408, 0.03);
  EXPECT_NEAR(hi, 2.3263478740408408, 0.03);
}

TEST(Rewards, DegenerateCalibrationIsRejected) {
  EXPECT_THROW((void)calibrate_bounds(std::vector<double>(500, 1.5)), ConfigError);
  EXPECT_THROW((void)calibrate_bounds(std::vector<double>(50, 0.0)), ConfigError);
}

TEST(Rewards, SpecValidation) {
  auto s = spec_of(RewardKind::region_target);
  s.norm_hi = s.norm_lo;
  EXPECT_THROW(RewardModel<double>{s}, ConfigError);
  s = spec_of(RewardKind::region_target);
  s.anchors.clear();
  EXPECT_THROW(RewardModel<double>{s}, ConfigError);
  EXPECT_THROW(RewardModel<double>{spec_of(RewardKind::classifier_margin)}, ConfigError);
  const RewardModel<double> m(spec_of(RewardKind::region_target));
  EXPECT_THROW((void)m.raw(Matrix<double>(Matrix<double>::Zero(2, 1)), std::vector<int>{3}), ArgumentError);
  EXPECT_THROW((void)reward_kind_from("aesthetic"), ConfigError);
}

TEST(Rewards, ClassifierLearnsSeparableClasses) {
  Matrix<double> x(2, 200);
  std::vector<int> labels(200);
  const auto noise = normal_matrix<double>(2, 200, 1, "cls");
  for (Index j = 0; j < 200; ++j) {
    labels[j] = static_cast<int>(j % 2);
    x.col(j) = 0.3 * noise.col(j) + Vector<double>::Constant(2, labels[j] ? 1.5 : -1.5);
  }
  const auto c = train_classifier<double>(x, labels, 2, 16, 300, 5);
  const RewardModel<double> m(spec_of(RewardKind::classifier_margin), c);
  const Vector<double> r = m.raw(x, labels);
  EXPECT_GT((r.array() > 0).count(), 195);
  const auto dir = rlab::testing::scratch_dir("classifier");
  save_classifier((dir / "c.ckpt").string(), c);
  EXPECT_EQ(load_classifier<double>((dir / "c.ckpt").string()).weights, c.weights);
}
