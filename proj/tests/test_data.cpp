#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace rlab;

TEST(Data, SynthesisIsDeterministicPerSeed) {
  const DataParams d;
  const auto a = synthesize_dataset<double>(d, 4), b = synthesize_dataset<double>(d, 4), c = synthesize_dataset<double>(d, 5);
  EXPECT_EQ(dataset_checksum(a.train), dataset_checksum(b.train));
  EXPECT_EQ(dataset_checksum(a.heldout), dataset_checksum(b.heldout));
  EXPECT_NE(dataset_checksum(a.train), dataset_checksum(c.train));
}

TEST(Data, SplitsAreDisjointPrefixesOfOneStream) {
  DataParams d;
  d.train_count = 300;
  d.heldout_count = 100;
  const auto s = synthesize_dataset<double>(d, 2);
  ASSERT_EQ(s.train.size(), 300);
  ASSERT_EQ(s.heldout.size(), 100);
  std::set<std::pair<double, double>> train;
  for (Index j = 0; j < s.train.size(); ++j) train.insert({s.train.x(0, j), s.train.x(1, j)});
  for (Index j = 0; j < s.heldout.size(); ++j) EXPECT_FALSE(train.count({s.heldout.x(0, j), s.heldout.x(1, j)}));
  d.train_count = 250;
  d.heldout_count = 150;
  const auto t = synthesize_dataset<double>(d, 2);
  EXPECT_EQ(t.train.x, s.train.x.leftCols(250));
  EXPECT_EQ(t.heldout.x.leftCols(50), s.train.x.rightCols(50));
}

TEST(Data, ClassMomentsMatchGenerator) {
  DataParams d;
  d.train_count = 40000;
  const auto s = synthesize_dataset<double>(d, 9);
  const double var = class_variance(d);
  for (int k = 0; k < d.classes; ++k) {
    const Matrix<double> m = class_subset(s.train, k);
    ASSERT_GT(m.cols(), 8000);
    const Vector<double> mean = m.rowwise().mean();
    const double se = std::sqrt(var / double(m.cols()));
    EXPECT_LT((mean - class_center(d, k)).cwiseAbs().maxCoeff(), 3.0 * se) << "class " << k;
    const Matrix<double> centered = m.colwise() - mean;
    const Matrix<double> cov = centered * centered.transpose() / double(m.cols() - 1);
    EXPECT_NEAR(cov(0, 0), var, 0.05 * var);
    EXPECT_NEAR(cov(1, 1), var, 0.05 * var);
    EXPECT_NEAR(cov(0, 1), 0.0, 0.05 * var);
  }
}

TEST(Data, PointsLieOnRingsAroundCenters) {
  DataParams d;
  d.blob_std = 1e-9;
  d.train_count = 200;
  const auto s = synthesize_dataset<double>(d, 1);
  for (Index j = 0; j < s.train.size(); ++j) {
    const int k = s.train.labels[static_cast<std::size_t>(j)];
    EXPECT_NEAR((s.train.x.col(j) - class_center(d, k)).norm(), d.ring_radius, 1e-6);
  }
}

TEST(Data, TinyImagesAreBoundedAndClassDistinct) {
  DataParams d;
  d.task = Task::tinyimages;
  d.train_count = 400;
  d.heldout_count = 16;
  const auto s = synthesize_dataset<float>(d, 3);
  EXPECT_EQ(s.train.x.rows(), 64);
  EXPECT_LE(s.train.x.maxCoeff(), 1.0f);
  EXPECT_GE(s.train.x.minCoeff(), -1.0f);
  // Bars light 16 pixels, the square 9, the diagonal 8 or fewer.
  for (int k = 0; k < 4; ++k) {
    const Matrix<float> m = class_subset(s.train, k);
    ASSERT_GT(m.cols(), 0);
    const double lit = (m.array() > 0.0f).cast<double>().colwise().sum().mean();
    const double want = k < 2 ? 16.0 : k == 2 ? 9.0 : 6.0;
    EXPECT_NEAR(lit, want, k == 3 ? 2.0 : 0.5) << "class " << k;
  }
}

TEST(Data, ParameterValidation) {
  DataParams d;
  d.blob_std = 0.0;
  EXPECT_THROW(d.validate(), ConfigError);
  d = DataParams{};
  d.train_count = 0;
  EXPECT_THROW(d.validate(), ConfigError);
  d = DataParams{};
  d.task = Task::tinyimages;
  d.classes = 5;
  EXPECT_THROW(d.validate(), ConfigError);
  EXPECT_THROW((void)task_from("cifar"), ConfigError);
  const auto back = nlohmann::json(DataParams{}).get<DataParams>();
  EXPECT_EQ(back, DataParams{});
}
