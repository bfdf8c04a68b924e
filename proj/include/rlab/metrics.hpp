#pragma once

#include "rlab/core.hpp"
#include "rlab/extractors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rlab {

/// N x D feature matrix (one row per sample) in double precision.
struct FeatureSet {
  Eigen::MatrixXd features;
  std::string source = "generated";
  std::string extractor_id = "identity";

  [[nodiscard]] Index count() const { return features.rows(); }
  [[nodiscard]] Index dim() const { return features.cols(); }
};

template <typename Scalar>
[[nodiscard]] FeatureSet extract_features(const Matrix<Scalar>& samples, const FeatureExtractor<Scalar>& extractor,
                                          std::string source = "generated") {
  FeatureSet f;
  f.features = extractor.features(samples).transpose().template cast<double>();
  f.source = std::move(source);
  f.extractor_id = extractor.spec().id();
  if (!f.features.allFinite()) throw NumericError("extract_features: non-finite features");
  return f;
}

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance.
[[nodiscard]] inline Gaussian fit_gaussian(const FeatureSet& f) {
  if (f.count() < 2) throw ArgumentError("fit_gaussian needs at least two samples");
  Gaussian g;
  g.mean = f.features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.features.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / double(f.count() - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

namespace detail {

constexpr double kEigTolerance = 1e-8;

/// Eigenvalues of a symmetric matrix with small negatives clipped to zero;
/// anything more negative than the tolerance is a numeric failure.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -kEigTolerance * scale)
    throw NumericError(std::string(what) + ": matrix is not positive semi-definite");
  return es;
}

inline Eigen::MatrixXd psd_function(const Eigen::MatrixXd& m, const char* what, double (*fn)(double)) {
  const auto es = psd_eigen(m, what);
  const Eigen::VectorXd mapped = es.eigenvalues().unaryExpr([fn](double v) { return fn(std::max(v, 0.0)); });
  return es.eigenvectors() * mapped.asDiagonal() * es.eigenvectors().transpose();
}

inline void check_pair(const FeatureSet& a, const FeatureSet& b, const char* what) {
  if (a.dim() != b.dim()) throw ArgumentError(std::string(what) + ": feature dimensions differ");
  if (a.count() < 2 || b.count() < 2) throw ArgumentError(std::string(what) + ": need at least two samples each");
}

}  // namespace detail

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the cross term
/// computed as Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}) so every root is of a
/// symmetric PSD matrix.
[[nodiscard]] inline double frechet_distance(const Gaussian& a, const Gaussian& b) {
  if (a.mean.size() != b.mean.size()) throw ArgumentError("frechet_distance: dimensions differ");
  const Eigen::MatrixXd root_a = detail::psd_function(a.cov, "frechet_distance", [](double v) { return std::sqrt(v); });
  const Eigen::MatrixXd inner = root_a * b.cov * root_a;
  const auto es = detail::psd_eigen(inner, "frechet_distance");
  const double cross = es.eigenvalues().unaryExpr([](double v) { return std::sqrt(std::max(v, 0.0)); }).sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

[[nodiscard]] inline double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  detail::check_pair(a, b, "frechet_distance");
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

/// |S_a - S_b|_F / D.
[[nodiscard]] inline double cov_distance(const FeatureSet& a, const FeatureSet& b) {
  detail::check_pair(a, b, "cov_distance");
  const auto ga = fit_gaussian(a), gb = fit_gaussian(b);
  return (ga.cov - gb.cov).norm() / double(a.dim());
}

inline constexpr double kLogCovEpsilon = 1e-6;

/// |logm(S_a + eps I) - logm(S_b + eps I)|_F / D.
[[nodiscard]] inline double log_cov_distance(const Gaussian& a, const Gaussian& b) {
  const auto d = a.cov.rows();
  const Eigen::MatrixXd reg = kLogCovEpsilon * Eigen::MatrixXd::Identity(d, d);
  auto logm = [&](const Eigen::MatrixXd& c) {
    detail::psd_eigen(c, "log_cov_distance");
    return detail::psd_function(c + reg, "log_cov_distance", [](double v) { return std::log(v); });
  };
  return (logm(a.cov) - logm(b.cov)).norm() / double(d);
}

[[nodiscard]] inline double log_cov_distance(const FeatureSet& a, const FeatureSet& b) {
  detail::check_pair(a, b, "log_cov_distance");
  return log_cov_distance(fit_gaussian(a), fit_gaussian(b));
}

/// Mean over unordered pairs of (1 - cosine similarity) within one feature set.
[[nodiscard]] inline double pairwise_cosine_distance(const Eigen::MatrixXd& rows) {
  const Index n = rows.rows();
  if (n < 2) throw ArgumentError("embedding_diversity needs at least two samples per condition");
  const Eigen::VectorXd norms = rows.rowwise().norm();
  if (!(norms.minCoeff() > 0.0)) throw NumericError("embedding_diversity: zero-norm feature row");
  const Eigen::MatrixXd unit = norms.cwiseInverse().asDiagonal() * rows;
  const Eigen::MatrixXd gram = unit * unit.transpose();
  // Sum of the strict upper triangle.
  const double off = (gram.sum() - gram.trace()) / 2.0;
  const double pairs = double(n) * double(n - 1) / 2.0;
  return 1.0 - off / pairs;
}

/// Per-condition mean pairwise cosine distance, averaged over conditions.
[[nodiscard]] inline double embedding_diversity(std::span<const FeatureSet> per_condition) {
  if (per_condition.empty()) throw ArgumentError("embedding_diversity: no conditions");
  double total = 0.0;
  for (const auto& f : per_condition) total += pairwise_cosine_distance(f.features);
  return total / double(per_condition.size());
}

template <typename Scalar>
[[nodiscard]] double embedding_diversity(std::span<const Matrix<Scalar>> per_condition_samples,
                                         const FeatureExtractor<Scalar>& extractor) {
  std::vector<FeatureSet> sets;
  sets.reserve(per_condition_samples.size());
  for (const auto& s : per_condition_samples) sets.push_back(extract_features(s, extractor));
  return embedding_diversity(sets);
}

/// Mean cosine similarity between each sample's features and the prototype
/// row of its condition. `prototypes` is K x F.
[[nodiscard]] inline double alignment_score(const FeatureSet& samples, std::span<const int> conditions,
                                            const Eigen::MatrixXd& prototypes) {
  if (static_cast<Index>(conditions.size()) != samples.count())
    throw ArgumentError("alignment_score: one condition per sample required");
  if (samples.count() == 0) throw ArgumentError("alignment_score: no samples");
  if (prototypes.cols() != samples.dim()) throw ArgumentError("alignment_score: prototype dimension mismatch");
  double total = 0.0;
  for (Index i = 0; i < samples.count(); ++i) {
    const int c = conditions[static_cast<std::size_t>(i)];
    if (c < 0 || c >= prototypes.rows()) throw ConfigError("alignment_score: no prototype for condition " + std::to_string(c));
    const auto f = samples.features.row(i);
    const auto p = prototypes.row(c);
    const double denom = f.norm() * p.norm();
    if (!(denom > 0.0)) throw NumericError("alignment_score: zero-norm feature");
    total += f.dot(p) / denom;
  }
  return total / double(samples.count());
}

/// Ranks with ties averaged (1-based).
[[nodiscard]] inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
[[nodiscard]] inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("spearman: need two equal-length series");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const auto n = double(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// One evaluation row. Column order of the CSV form is fixed by kMetricColumns.
struct MetricReport {
  std::uint64_t seed = 0;
  std::string algorithm;
  int switch_point = 0;
  double reward_mean = 0.0;
  double frechet = 0.0;
  double cov_distance = 0.0;
  double log_cov_distance = 0.0;
  double embedding_diversity = 0.0;
  double alignment = 0.0;
  Index sample_count = 0;
  Index reference_count = 0;
  std::string distribution_extractor;
  std::string diversity_extractor;

  void validate() const {
    for (double v : {reward_mean, frechet, cov_distance, log_cov_distance, embedding_diversity, alignment})
      if (!std::isfinite(v)) throw NumericError("metric report holds a non-finite value");
    if (embedding_diversity < -1e-9 || embedding_diversity > 2.0 + 1e-9)
      throw NumericError("embedding diversity outside [0, 2]");
    if (alignment < -1.0 - 1e-9 || alignment > 1.0 + 1e-9) throw NumericError("alignment outside [-1, 1]");
  }
};

inline constexpr int kMetricSchemaVersion = 1;
inline constexpr const char* kMetricColumns[] = {"seed",         "algorithm",        "T_prime",
                                                 "reward_mean",  "frechet",          "cov_distance",
                                                 "log_cov_distance", "embedding_diversity", "alignment"};

[[nodiscard]] inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[nodiscard]] inline std::string csv_header() {
  std::string out;
  for (const char* c : kMetricColumns) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

[[nodiscard]] inline std::string to_csv_row(const MetricReport& r) {
  return std::to_string(r.seed) + ',' + r.algorithm + ',' + std::to_string(r.switch_point) + ',' +
         format_double(r.reward_mean) + ',' + format_double(r.frechet) + ',' + format_double(r.cov_distance) + ',' +
         format_double(r.log_cov_distance) + ',' + format_double(r.embedding_diversity) + ',' +
         format_double(r.alignment);
}

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"schema_version", kMetricSchemaVersion},
       {"seed", r.seed},
       {"algorithm", r.algorithm},
       {"T_prime", r.switch_point},
       {"reward_mean", r.reward_mean},
       {"frechet", r.frechet},
       {"cov_distance", r.cov_distance},
       {"log_cov_distance", r.log_cov_distance},
       {"embedding_diversity", r.embedding_diversity},
       {"alignment", r.alignment},
       {"sample_count", r.sample_count},
       {"reference_count", r.reference_count},
       {"distribution_extractor", r.distribution_extractor},
       {"diversity_extractor", r.diversity_extractor}};
}

inline void from_json(const nlohmann::json& j, MetricReport& r) {
  r.seed = j.at("seed").get<std::uint64_t>();
  r.algorithm = j.at("algorithm").get<std::string>();
  r.switch_point = j.at("T_prime").get<int>();
  r.reward_mean = j.at("reward_mean").get<double>();
  r.frechet = j.at("frechet").get<double>();
  r.cov_distance = j.at("cov_distance").get<double>();
  r.log_cov_distance = j.at("log_cov_distance").get<double>();
  r.embedding_diversity = j.at("embedding_diversity").get<double>();
  r.alignment = j.at("alignment").get<double>();
  r.sample_count = j.value("sample_count", Index{0});
  r.reference_count = j.value("reference_count", Index{0});
  r.distribution_extractor = j.value("distribution_extractor", "");
  r.diversity_extractor = j.value("diversity_extractor", "");
}

}  // namespace rlab
