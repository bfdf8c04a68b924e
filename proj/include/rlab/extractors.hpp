#pragma once

#include "rlab/core.hpp"
#include "rlab/layers.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <string>

namespace rlab {

/// Frozen, seeded feature maps standing in for pretrained image embedders.
///
///   identity           phi(x) = x
///   random_projection  phi(x) = W x,                      W_ij ~ N(0, 1/D_in)
///   random_features    phi(x) = sqrt(2/F) cos(W x / h + b),  W_ij ~ N(0,1), b ~ U(0, 2 pi)
///   random_conv        3x3 conv (1 -> C) with N(0, 1/9) taps, tanh, 2x2 average pool
///
/// Random Fourier features make cosine similarity approximate an RBF kernel
/// with bandwidth h, which is what the per-condition diversity metric needs on
/// low-dimensional point data.
struct ExtractorSpec {
  std::string kind = "identity";
  int input_dim = 2;
  int out_dim = 2;
  int image_side = 0;
  double bandwidth = 1.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::string id() const {
    if (kind == "identity") return "identity";
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s-d%d-h%g-s%llu", kind.c_str(), out_dim, bandwidth,
                  static_cast<unsigned long long>(seed));
    return buf;
  }

  void validate() const {
    if (input_dim <= 0) throw ConfigError("extractor input_dim must be positive");
    if (kind == "identity") return;
    if (kind == "random_projection" || kind == "random_features") {
      if (out_dim <= 0) throw ConfigError("extractor out_dim must be positive");
      if (kind == "random_features" && !(bandwidth > 0.0)) throw ConfigError("extractor bandwidth must be positive");
      return;
    }
    if (kind == "random_conv") {
      if (image_side <= 1 || image_side % 2 != 0 || image_side * image_side != input_dim)
        throw ConfigError("random_conv extractor needs an even image_side with input_dim == side^2");
      if (out_dim <= 0) throw ConfigError("random_conv out_dim (channels) must be positive");
      return;
    }
    throw ConfigError("unknown extractor kind '" + kind + "'");
  }

  bool operator==(const ExtractorSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const ExtractorSpec& e) {
  j = {{"kind", e.kind},       {"input_dim", e.input_dim}, {"out_dim", e.out_dim},
       {"image_side", e.image_side}, {"bandwidth", e.bandwidth}, {"seed", e.seed}};
}
inline void from_json(const nlohmann::json& j, ExtractorSpec& e) {
  e.kind = j.at("kind").get<std::string>();
  e.input_dim = j.at("input_dim").get<int>();
  e.out_dim = j.value("out_dim", e.input_dim);
  e.image_side = j.value("image_side", 0);
  e.bandwidth = j.value("bandwidth", 1.0);
  e.seed = j.value("seed", std::uint64_t{0});
}

template <typename Scalar>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const CounterRng rng(spec_.seed, stream_id("extractor:" + spec_.kind));
    std::uint64_t pos = 0;
    if (spec_.kind == "random_projection" || spec_.kind == "random_features") {
      weight_.resize(spec_.out_dim, spec_.input_dim);
      const double scale = spec_.kind == "random_projection" ? 1.0 / std::sqrt(double(spec_.input_dim))
                                                            : 1.0 / spec_.bandwidth;
      for (Index j = 0; j < weight_.cols(); ++j)
        for (Index i = 0; i < weight_.rows(); ++i) weight_(i, j) = static_cast<Scalar>(scale * rng.normal(pos++));
      if (spec_.kind == "random_features") {
        bias_.resize(spec_.out_dim);
        for (Index i = 0; i < bias_.size(); ++i)
          bias_[i] = static_cast<Scalar>(2.0 * std::numbers::pi * rng.uniform(pos++));
      }
    } else if (spec_.kind == "random_conv") {
      weight_.resize(spec_.out_dim, 9);
      for (Index j = 0; j < 9; ++j)
        for (Index i = 0; i < weight_.rows(); ++i) weight_(i, j) = static_cast<Scalar>(rng.normal(pos++) / 3.0);
      bias_ = Vector<Scalar>::Zero(spec_.out_dim);
    }
  }

  [[nodiscard]] const ExtractorSpec& spec() const { return spec_; }

  [[nodiscard]] int feature_dim() const {
    if (spec_.kind == "identity") return spec_.input_dim;
    if (spec_.kind == "random_conv") return spec_.out_dim * (spec_.image_side / 2) * (spec_.image_side / 2);
    return spec_.out_dim;
  }

  /// F x N features of a D x N batch.
  [[nodiscard]] Matrix<Scalar> features(const Matrix<Scalar>& x) const {
    if (x.rows() != spec_.input_dim) throw ArgumentError("extractor: sample dimension mismatch");
    if (spec_.kind == "identity") return x;
    if (spec_.kind == "random_projection") return weight_ * x;
    if (spec_.kind == "random_features") return rff_scale() * ((weight_ * x).colwise() + bias_).array().cos().matrix();
    return pool(conv_act(x), x.cols());
  }

  /// Vector-Jacobian product: d(loss)/dx given d(loss)/d(features).
  [[nodiscard]] Matrix<Scalar> vjp(const Matrix<Scalar>& x, const Matrix<Scalar>& d_features) const {
    if (spec_.kind == "identity") return d_features;
    if (spec_.kind == "random_projection") return weight_.transpose() * d_features;
    if (spec_.kind == "random_features") {
      const Matrix<Scalar> z = (weight_ * x).colwise() + bias_;
      return weight_.transpose() * (-rff_scale() * (d_features.array() * z.array().sin())).matrix();
    }
    const layers::ConvGeometry geo{spec_.image_side};
    const Matrix<Scalar> act = conv_act(x);
    Matrix<Scalar> d_act = unpool(d_features, x.cols());
    d_act.array() *= Scalar(1) - act.array().square();
    const Matrix<Scalar> d_cols = weight_.transpose() * d_act;
    const Matrix<Scalar> d_h = layers::col2im(d_cols, 1, geo);
    return Eigen::Map<const Matrix<Scalar>>(d_h.data(), x.rows(), x.cols());
  }

 private:
  [[nodiscard]] Scalar rff_scale() const { return static_cast<Scalar>(std::sqrt(2.0 / spec_.out_dim)); }

  // C x (HW*N) activations after tanh.
  [[nodiscard]] Matrix<Scalar> conv_act(const Matrix<Scalar>& x) const {
    const layers::ConvGeometry geo{spec_.image_side};
    const Matrix<Scalar> h = Eigen::Map<const Matrix<Scalar>>(x.data(), 1, x.size());
    Matrix<Scalar> z = weight_ * layers::im2col(h, geo);
    return z.array().tanh();
  }

  [[nodiscard]] Matrix<Scalar> pool(const Matrix<Scalar>& act, Index n) const {
    const Index side = spec_.image_side, half = side / 2, c = act.rows();
    Matrix<Scalar> out = Matrix<Scalar>::Zero(c * half * half, n);
    for (Index s = 0; s < n; ++s)
      for (Index y = 0; y < side; ++y)
        for (Index x = 0; x < side; ++x)
          for (Index ch = 0; ch < c; ++ch)
            out(ch * half * half + (y / 2) * half + x / 2, s) += Scalar(0.25) * act(ch, s * side * side + y * side + x);
    return out;
  }

  [[nodiscard]] Matrix<Scalar> unpool(const Matrix<Scalar>& d, Index n) const {
    const Index side = spec_.image_side, half = side / 2, c = spec_.out_dim;
    Matrix<Scalar> out(c, side * side * n);
    for (Index s = 0; s < n; ++s)
      for (Index y = 0; y < side; ++y)
        for (Index x = 0; x < side; ++x)
          for (Index ch = 0; ch < c; ++ch)
            out(ch, s * side * side + y * side + x) = Scalar(0.25) * d(ch * half * half + (y / 2) * half + x / 2, s);
    return out;
  }

  ExtractorSpec spec_;
  Matrix<Scalar> weight_;
  Vector<Scalar> bias_;
};

}  // namespace rlab
