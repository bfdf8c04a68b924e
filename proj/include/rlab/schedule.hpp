#pragma once

#include "rlab/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace rlab {

enum class ScheduleKind { linear, cosine };
enum class SamplerKind { ancestral, deterministic };

[[nodiscard]] inline std::string to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }
[[nodiscard]] inline std::string to_string(SamplerKind k) {
  return k == SamplerKind::ancestral ? "ancestral" : "deterministic";
}
[[nodiscard]] inline ScheduleKind schedule_kind_from(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + s + "'");
}
[[nodiscard]] inline SamplerKind sampler_kind_from(const std::string& s) {
  if (s == "ancestral") return SamplerKind::ancestral;
  if (s == "deterministic") return SamplerKind::deterministic;
  throw ConfigError("unknown sampler kind '" + s + "'");
}

/// Discrete noise schedule over steps t = 1..T; t = 0 is the clean sample.
///
/// Every table is stored with T + 1 entries so it can be indexed directly by
/// step; entry 0 holds the clean-sample convention (alpha_bar = 1, beta = 0).
/// `model_timestep(t)` is the timestep the denoiser is conditioned on. It is
/// the identity for a training schedule and the original training step for a
/// respaced inference schedule.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas, std::vector<int> model_timesteps, int train_steps)
      : betas_(std::move(betas)), model_timesteps_(std::move(model_timesteps)), train_steps_(train_steps) {
    const auto n = betas_.size();
    if (n < 2) throw ConfigError("schedule needs at least one step");
    if (model_timesteps_.size() != n) throw ConfigError("schedule timestep map has wrong length");
    alphas_.assign(n, 1.0);
    alpha_bars_.assign(n, 1.0);
    for (std::size_t t = 1; t < n; ++t) {
      if (!(betas_[t] > 0.0 && betas_[t] < 1.0)) throw ConfigError("schedule beta out of (0,1)");
      alphas_[t] = 1.0 - betas_[t];
      alpha_bars_[t] = alpha_bars_[t - 1] * alphas_[t];
    }
    if (!(alpha_bars_.back() > 0.0)) throw NumericError("schedule alpha_bar underflowed to zero");
  }

  [[nodiscard]] int steps() const { return static_cast<int>(betas_.size()) - 1; }
  [[nodiscard]] int train_steps() const { return train_steps_; }
  [[nodiscard]] double beta(int t) const { return betas_.at(check(t)); }
  [[nodiscard]] double alpha(int t) const { return alphas_.at(check(t)); }
  [[nodiscard]] double alpha_bar(int t) const { return alpha_bars_.at(check(t)); }
  [[nodiscard]] int model_timestep(int t) const { return model_timesteps_.at(check(t)); }

  [[nodiscard]] const std::vector<double>& betas() const { return betas_; }
  [[nodiscard]] const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  [[nodiscard]] const std::vector<int>& model_timesteps() const { return model_timesteps_; }

 private:
  [[nodiscard]] std::size_t check(int t) const {
    if (t < 0 || t > steps()) throw ArgumentError("step index " + std::to_string(t) + " outside [0, T]");
    return static_cast<std::size_t>(t);
  }

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<int> model_timesteps_;
  int train_steps_;
};

[[nodiscard]] inline NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_min, double beta_max) {
  if (steps < 2) throw ConfigError("schedule needs T >= 2, got " + std::to_string(steps));
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw ConfigError("schedule needs 0 < beta_min <= beta_max < 1");

  std::vector<double> betas(static_cast<std::size_t>(steps) + 1, 0.0);
  std::vector<int> timesteps(betas.size());
  for (int t = 0; t <= steps; ++t) timesteps[static_cast<std::size_t>(t)] = t;

  if (kind == ScheduleKind::linear) {
    for (int t = 1; t <= steps; ++t)
      betas[static_cast<std::size_t>(t)] = beta_min + (beta_max - beta_min) * (t - 1) / double(steps - 1);
  } else {
    // Squared-cosine alpha_bar with offset s = 0.008; betas clipped into the bounds.
    constexpr double s = 0.008;
    auto f = [&](int t) {
      const double c = std::cos((t / double(steps) + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 1; t <= steps; ++t)
      betas[static_cast<std::size_t>(t)] = std::clamp(1.0 - f(t) / f(t - 1), beta_min, beta_max);
  }
  return NoiseSchedule(std::move(betas), std::move(timesteps), steps);
}

/// Uniform-stride subset of `base` with `steps` entries. Step k maps to
/// training step 1 + round((k - 1)(T - 1)/(steps - 1)) (a single step maps to
/// T); the respaced betas are recomputed so that alpha_bar(k) equals the base
/// alpha_bar at that step.
[[nodiscard]] inline NoiseSchedule respace(const NoiseSchedule& base, int steps) {
  const int train = base.steps();
  if (steps < 1 || steps > train) throw ConfigError("respaced step count must lie in [1, T]");
  std::vector<double> betas(static_cast<std::size_t>(steps) + 1, 0.0);
  std::vector<int> timesteps(betas.size(), 0);
  double prev_bar = 1.0;
  for (int k = 1; k <= steps; ++k) {
    const int t =
        steps == 1 ? train : 1 + static_cast<int>(std::lround(double(k - 1) * (train - 1) / double(steps - 1)));
    const double bar = base.alpha_bar(t);
    timesteps[static_cast<std::size_t>(k)] = base.model_timestep(t);
    betas[static_cast<std::size_t>(k)] = 1.0 - bar / prev_bar;
    prev_bar = bar;
  }
  return NoiseSchedule(std::move(betas), std::move(timesteps), base.train_steps());
}

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, columnwise.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> forward_noise(const NoiseSchedule& s, const Matrix<Scalar>& x0, int t,
                                           const Matrix<Scalar>& eps) {
  if (t < 1 || t > s.steps()) throw ArgumentError("forward_noise: t outside [1, T]");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ArgumentError("forward_noise: shape mismatch");
  const auto bar = s.alpha_bar(t);
  return static_cast<Scalar>(std::sqrt(bar)) * x0 + static_cast<Scalar>(std::sqrt(1.0 - bar)) * eps;
}

struct SamplerCoeffs {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  SamplerKind kind = SamplerKind::deterministic;
  double eta = 0.0;
};

/// Coefficients of x_{t-1} = a x_t + b eps_hat + c noise.
///
/// ancestral:     posterior-mean step with posterior standard deviation c.
/// deterministic: the eta-family; eta = 0 is the noise-free implicit sampler
///                and eta = 1 coincides with the ancestral step.
[[nodiscard]] inline SamplerCoeffs sampler_coeffs(const NoiseSchedule& s, int t, SamplerKind kind, double eta = 0.0) {
  if (t < 1 || t > s.steps()) throw ArgumentError("sampler_coeffs: t outside [1, T]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ArgumentError("sampler_coeffs: eta outside [0, 1]");
  const double alpha = s.alpha(t);
  const double bar = s.alpha_bar(t);
  const double bar_prev = s.alpha_bar(t - 1);
  SamplerCoeffs out;
  out.kind = kind;
  out.eta = eta;
  out.a = 1.0 / std::sqrt(alpha);
  if (kind == SamplerKind::ancestral) {
    out.b = -(1.0 - alpha) / (std::sqrt(alpha) * std::sqrt(1.0 - bar));
    out.c = std::sqrt((1.0 - bar_prev) / (1.0 - bar) * (1.0 - alpha));
  } else {
    const double sigma = eta * std::sqrt((1.0 - bar_prev) / (1.0 - bar) * (1.0 - bar / bar_prev));
    // 1 - bar_prev - sigma^2 can dip a hair below zero at eta = 1, t = 1.
    const double dir = std::sqrt(std::max(0.0, 1.0 - bar_prev - sigma * sigma));
    out.b = -std::sqrt(bar_prev) * std::sqrt(1.0 - bar) / std::sqrt(bar) + dir;
    out.c = sigma;
  }
  return out;
}

}  // namespace rlab
