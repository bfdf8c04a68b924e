#include "support.hpp"

#include <gtest/gtest.h>

using namespace rlab;
using rlab::testing::central_difference;
using rlab::testing::relative_error;

namespace {

Gaussian gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return Gaussian{std::move(mean), std::move(cov)}; }

Eigen::MatrixXd cov_a() {
  Eigen::MatrixXd a(3, 3);
  a << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5;
  return a;
}
Eigen::MatrixXd cov_b() {
  Eigen::MatrixXd b(3, 3);
  b << 1.0, -0.4, 0.0, -0.4, 0.8, 0.25, 0.0, 0.25, 1.5;
  return b;
}

/// N samples of N(mean, cov) as an N x D feature set.
FeatureSet draw(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Index n, const char* tag) {
  const Eigen::MatrixXd l = cov.llt().matrixL();
  FeatureSet f;
  f.features = (l * normal_matrix<double>(mean.size(), n, 1, tag)).colwise() + mean;
  f.features.transposeInPlace();
  return f;
}

FeatureSet rows(Eigen::MatrixXd m) {
  FeatureSet f;
  f.features = std::move(m);
  return f;
}

}  // namespace

TEST(Metrics, FrechetClosedFormForScaledIdentity) {
  const Eigen::VectorXd m = Eigen::Vector3d(1.0, -2.0, 0.5);
  const double fd = frechet_distance(gaussian(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)),
                                     gaussian(m, 4.0 * Eigen::MatrixXd::Identity(3, 3)));
  EXPECT_NEAR(fd, m.squaredNorm() + 3.0, 1e-12);
}

TEST(Metrics, FrechetNonCommutingCovariances) {
  const double fd = frechet_distance(gaussian(Eigen::Vector3d(0.1, -0.2, 0.3), cov_a()),
                                     gaussian(Eigen::Vector3d(-0.5, 0.0, 0.4), cov_b()));
  EXPECT_NEAR(fd, 1.2473495202366345, 1e-10);
  EXPECT_NEAR(frechet_distance(gaussian(Eigen::Vector3d::Zero(), cov_a()), gaussian(Eigen::Vector3d::Zero(), cov_a())),
              0.0, 1e-10);
}

TEST(Metrics, LogCovDistanceClosedForm) {
  EXPECT_NEAR(log_cov_distance(gaussian(Eigen::Vector3d::Zero(), cov_a()), gaussian(Eigen::Vector3d::Zero(), cov_b())),
              0.6381136185434085, 1e-9);
  const Eigen::MatrixXd d = Eigen::Vector2d(1.0, 4.0).asDiagonal();
  const double e = kLogCovEpsilon;
  EXPECT_NEAR(log_cov_distance(gaussian(Eigen::Vector2d::Zero(), d), gaussian(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity())),
              (std::log(4.0 + e) - std::log(1.0 + e)) / 2.0, 1e-12);
}

TEST(Metrics, CovDistanceMatchesBruteForce) {
  const FeatureSet a = draw(Eigen::Vector3d::Zero(), cov_a(), 50, "a");
  const FeatureSet b = draw(Eigen::Vector3d::Ones(), cov_b(), 70, "b");
  auto brute_cov = [](const Eigen::MatrixXd& x) {
    const Index n = x.rows(), d = x.cols();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) {
        const double mi = x.col(i).mean(), mj = x.col(j).mean();
        for (Index k = 0; k < n; ++k) c(i, j) += (x(k, i) - mi) * (x(k, j) - mj);
        c(i, j) /= double(n - 1);
      }
    return c;
  };
  double sq = 0.0;
  const Eigen::MatrixXd diff = brute_cov(a.features) - brute_cov(b.features);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) sq += diff(i, j) * diff(i, j);
  EXPECT_NEAR(cov_distance(a, b), std::sqrt(sq) / 3.0, 1e-12);
  EXPECT_EQ(cov_distance(a, a), 0.0);
}

TEST(Metrics, MonteCarloEstimatesConverge) {
  const Eigen::Vector3d ma(0.1, -0.2, 0.3), mb(-0.5, 0.0, 0.4);
  const FeatureSet a = draw(ma, cov_a(), 20000, "mc-a");
  const FeatureSet b = draw(mb, cov_b(), 20000, "mc-b");
  EXPECT_NEAR(frechet_distance(a, b), 1.2473495202366345, 0.05);
  EXPECT_NEAR(cov_distance(a, b), 0.6186903731090195, 0.03);
  EXPECT_NEAR(log_cov_distance(a, b), 0.6381136185434085, 0.03);
}

TEST(Metrics, FrechetInvariantToSharedRigidMotion) {
  const FeatureSet a = draw(Eigen::Vector3d::Zero(), cov_a(), 300, "inv-a");
  const FeatureSet b = draw(Eigen::Vector3d::Ones(), cov_b(), 300, "inv-b");
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  const Eigen::RowVector3d shift(5.0, -3.0, 2.0);
  const FeatureSet ar = rows((a.features * r.transpose()).rowwise() + shift);
  const FeatureSet br = rows((b.features * r.transpose()).rowwise() + shift);
  EXPECT_NEAR(frechet_distance(a, b), frechet_distance(ar, br), 1e-9);
  EXPECT_NEAR(cov_distance(a, b), cov_distance(ar, br), 1e-12);
  EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-9);
}

TEST(Metrics, MetricInputsAreValidated) {
  const FeatureSet a = rows(Eigen::MatrixXd::Random(5, 3));
  EXPECT_THROW((void)frechet_distance(a, rows(Eigen::MatrixXd::Random(5, 2))), ArgumentError);
  EXPECT_THROW((void)fit_gaussian(rows(Eigen::MatrixXd::Random(1, 3))), ArgumentError);
  EXPECT_THROW((void)embedding_diversity(std::vector<FeatureSet>{rows(Eigen::MatrixXd::Random(1, 3))}), ArgumentError);
  EXPECT_THROW((void)embedding_diversity(std::vector<FeatureSet>{rows(Eigen::MatrixXd::Zero(3, 3))}), NumericError);
}

TEST(Metrics, DiversityMatchesPairwiseBruteForce) {
  std::vector<FeatureSet> sets{draw(Eigen::Vector3d::Zero(), cov_a(), 17, "d1"), draw(Eigen::Vector3d::Ones(), cov_b(), 9, "d2")};
  double total = 0.0;
  for (const auto& s : sets) {
    double sum = 0.0;
    int pairs = 0;
    for (Index i = 0; i < s.count(); ++i)
      for (Index j = i + 1; j < s.count(); ++j) {
        const auto u = s.features.row(i), v = s.features.row(j);
        sum += 1.0 - u.dot(v) / (u.norm() * v.norm());
        ++pairs;
      }
    total += sum / pairs;
  }
  EXPECT_NEAR(embedding_diversity(sets), total / 2.0, 1e-12);
}

TEST(Metrics, DiversityExtremesAndScaleInvariance) {
  Eigen::MatrixXd same(4, 2);
  same << 1, 1, 2, 2, 3, 3, 0.5, 0.5;
  EXPECT_NEAR(embedding_diversity(std::vector<FeatureSet>{rows(same)}), 0.0, 1e-14);
  Eigen::MatrixXd opposite(2, 2);
  opposite << 1, 0, -1, 0;
  EXPECT_NEAR(embedding_diversity(std::vector<FeatureSet>{rows(opposite)}), 2.0, 1e-14);
  const FeatureSet a = draw(Eigen::Vector3d::Ones(), cov_a(), 20, "scale");
  EXPECT_NEAR(embedding_diversity(std::vector<FeatureSet>{a}),
              embedding_diversity(std::vector<FeatureSet>{rows(3.5 * a.features)}), 1e-13);
}

TEST(Metrics, AlignmentIsMeanCosineToPrototype) {
  Eigen::MatrixXd f(3, 2), protos(2, 2);
  f << 1, 0, 0, 2, 1, 1;
  protos << 1, 0, 0, 1;
  const std::vector<int> cond{0, 0, 1};
  EXPECT_NEAR(alignment_score(rows(f), cond, protos), (1.0 + 0.0 + std::sqrt(0.5)) / 3.0, 1e-15);
  EXPECT_THROW((void)alignment_score(rows(f), std::vector<int>{0, 0, 2}, protos), ConfigError);
  EXPECT_THROW((void)alignment_score(rows(f), std::vector<int>{0, 0}, protos), ArgumentError);
}

TEST(Metrics, SpearmanWithTies) {
  const std::vector<double> x{1, 2, 2, 3, 5, 4}, y{3, 1, 4, 1, 5, 9};
  EXPECT_NEAR(spearman(x, y), 0.5441176470588235, 1e-14);
  const std::vector<double> up{1, 2, 3, 4}, sq{1, 4, 9, 16}, down{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(up, sq), 1.0);
  EXPECT_DOUBLE_EQ(spearman(up, down), -1.0);
  EXPECT_EQ(spearman(up, std::vector<double>{2, 2, 2, 2}), 0.0);
  const auto r = average_ranks(std::vector<double>{10, 20, 20, 5});
  EXPECT_EQ(r, (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Metrics, ReportRoundTripsThroughJsonAndCsv) {
  MetricReport r;
  r.seed = 3;
  r.algorithm = "refl_combined";
  r.switch_point = 12;
  r.reward_mean = -0.1;
  r.frechet = 0.123456789012345678;
  r.embedding_diversity = 0.3;
  r.alignment = 0.9;
  const auto back = nlohmann::json(r).get<MetricReport>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(r));
  EXPECT_EQ(csv_header(), "seed,algorithm,T_prime,reward_mean,frechet,cov_distance,log_cov_distance,embedding_diversity,alignment");
  const auto row = to_csv_row(r);
  EXPECT_EQ(row.substr(0, 19), "3,refl_combined,12,");
  EXPECT_EQ(std::stod(row.substr(row.find(",", 19) + 1)), r.frechet);
  r.alignment = 1.5;
  EXPECT_THROW(r.validate(), NumericError);
}

TEST(Extractors, RandomFeaturesApproximateGaussianKernel) {
  const FeatureExtractor<double> e(ExtractorSpec{"random_features", 2, 4096, 0, 0.5, 7});
  Matrix<double> x(2, 2);
  x << 0.0, 0.3, 0.0, -0.2;
  const Matrix<double> f = e.features(x);
  const double k = f.col(0).dot(f.col(1));
  EXPECT_NEAR(k, std::exp(-0.13 / (2 * 0.25)), 0.05);
  EXPECT_NEAR(f.col(0).squaredNorm(), 1.0, 0.05);
}

TEST(Extractors, VectorJacobianProductsMatchFiniteDifferences) {
  for (const auto& spec : {ExtractorSpec{"random_projection", 3, 5, 0, 1.0, 2}, ExtractorSpec{"random_features", 3, 7, 0, 0.8, 2},
                           ExtractorSpec{"random_conv", 16, 3, 4, 1.0, 2}}) {
    const FeatureExtractor<double> e(spec);
    const Matrix<double> x = normal_matrix<double>(spec.input_dim, 2, 0, "x");
    const Matrix<double> u = normal_matrix<double>(e.feature_dim(), 2, 0, "u");
    const Matrix<double> g = e.vjp(x, u);
    Vector<double> flat = Eigen::Map<const Vector<double>>(x.data(), x.size());
    auto f = [&](const Vector<double>& v) {
      return (u.array() * e.features(Eigen::Map<const Matrix<double>>(v.data(), x.rows(), x.cols())).array()).sum();
    };
    for (Index i = 0; i < flat.size(); ++i)
      EXPECT_LT(relative_error(g.data()[i], central_difference(f, flat, i)), 1e-6) << spec.kind << " " << i;
  }
}

TEST(Extractors, SpecValidation) {
  EXPECT_THROW(FeatureExtractor<double>(ExtractorSpec{"inception", 2, 2, 0, 1.0, 0}), ConfigError);
  EXPECT_THROW(FeatureExtractor<double>(ExtractorSpec{"random_conv", 15, 2, 4, 1.0, 0}), ConfigError);
  EXPECT_THROW(FeatureExtractor<double>(ExtractorSpec{"random_features", 2, 8, 0, 0.0, 0}), ConfigError);
  EXPECT_EQ(ExtractorSpec{}.id(), "identity");
  EXPECT_EQ((ExtractorSpec{"random_features", 2, 256, 0, 0.5, 7}.id()), "random_features-d256-h0.5-s7");
}
