#pragma once

#include "rlab/core.hpp"

#include <cmath>

namespace rlab {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// Decoupled-weight-decay Adam over a flat parameter vector.
template <typename Scalar>
class AdamW {
 public:
  AdamW(Index size, AdamWConfig cfg) : cfg_(cfg), m_(Vector<Scalar>::Zero(size)), v_(Vector<Scalar>::Zero(size)) {}

  /// Clips `grad` in place to the configured global norm and returns the
  /// pre-clip norm.
  double clip(Vector<Scalar>& grad) const {
    const double norm = static_cast<double>(grad.norm());
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) grad *= static_cast<Scalar>(cfg_.clip_norm / norm);
    return norm;
  }

  void step(Vector<Scalar>& weights, const Vector<Scalar>& grad) {
    if (weights.size() != m_.size() || grad.size() != m_.size()) throw ArgumentError("AdamW: size mismatch");
    ++t_;
    const auto b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const auto step = static_cast<Scalar>(cfg_.lr / bc1);
    const auto root_bc2 = static_cast<Scalar>(std::sqrt(bc2));
    weights *= static_cast<Scalar>(1.0 - cfg_.lr * cfg_.weight_decay);
    weights.array() -= step * m_.array() / (v_.array().sqrt() / root_bc2 + static_cast<Scalar>(cfg_.eps));
  }

  [[nodiscard]] long steps_taken() const { return t_; }
  [[nodiscard]] const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  Vector<Scalar> m_, v_;
  long t_ = 0;
};

}  // namespace rlab
