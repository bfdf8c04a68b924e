#pragma once

#include "rlab/core.hpp"
#include "rlab/denoiser.hpp"
#include "rlab/schedule.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rlab {

/// Inference settings. `switch_point` (T') counts inference steps: steps
/// t <= T' use the fine-tuned parameters, steps t > T' the base parameters.
struct TrajectoryConfig {
  int steps = 40;
  SamplerKind kind = SamplerKind::deterministic;
  double eta = 0.0;
  double guidance_scale_base = 7.5;
  double guidance_scale_ft = 1.0;
  int switch_point = 0;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (steps < 1) throw ConfigError("trajectory steps must be >= 1");
    if (switch_point < 0 || switch_point > steps) throw ConfigError("switch point must lie in [0, steps]");
    if (!(guidance_scale_base >= 0.0 && guidance_scale_ft >= 0.0))
      throw ConfigError("guidance scales must be >= 0");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  }
};

/// a x_t + b eps_hat + c noise. `noise` may be empty when c == 0.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> reverse_step(const SamplerCoeffs& k, const Matrix<Scalar>& eps_hat,
                                          const Matrix<Scalar>& x_t, const Matrix<Scalar>& noise) {
  if (eps_hat.rows() != x_t.rows() || eps_hat.cols() != x_t.cols())
    throw ArgumentError("reverse_step: eps_hat/x_t shape mismatch");
  Matrix<Scalar> out = static_cast<Scalar>(k.a) * x_t + static_cast<Scalar>(k.b) * eps_hat;
  if (k.c != 0.0) {
    if (noise.rows() != x_t.rows() || noise.cols() != x_t.cols())
      throw ArgumentError("reverse_step: noise shape mismatch");
    out += static_cast<Scalar>(k.c) * noise;
  }
  return out;
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> reverse_step(const NoiseSchedule& s, const Matrix<Scalar>& eps_hat,
                                          const Matrix<Scalar>& x_t, int t, const Matrix<Scalar>& noise,
                                          SamplerKind kind, double eta = 0.0) {
  return reverse_step(sampler_coeffs(s, t, kind, eta), eps_hat, x_t, noise);
}

namespace detail {
inline double checked_alpha_bar(const NoiseSchedule& s, int t) {
  const double bar = s.alpha_bar(t);
  if (!(bar > 1e-12)) throw NumericError("predict_x0: alpha_bar underflow at step " + std::to_string(t));
  return bar;
}
}  // namespace detail

/// (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> predict_x0(const NoiseSchedule& s, const Matrix<Scalar>& eps_hat,
                                        const Matrix<Scalar>& x_t, int t) {
  if (eps_hat.rows() != x_t.rows() || eps_hat.cols() != x_t.cols()) throw ArgumentError("predict_x0: shape mismatch");
  const double bar = detail::checked_alpha_bar(s, t);
  return (x_t - static_cast<Scalar>(std::sqrt(1.0 - bar)) * eps_hat) / static_cast<Scalar>(std::sqrt(bar));
}

/// Per-column step indices.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> predict_x0(const NoiseSchedule& s, const Matrix<Scalar>& eps_hat,
                                        const Matrix<Scalar>& x_t, std::span<const int> t) {
  if (eps_hat.rows() != x_t.rows() || eps_hat.cols() != x_t.cols()) throw ArgumentError("predict_x0: shape mismatch");
  if (static_cast<Index>(t.size()) != x_t.cols()) throw ArgumentError("predict_x0: one step per column required");
  Matrix<Scalar> out(x_t.rows(), x_t.cols());
  for (Index j = 0; j < x_t.cols(); ++j) {
    const double bar = detail::checked_alpha_bar(s, t[static_cast<std::size_t>(j)]);
    out.col(j) = (x_t.col(j) - static_cast<Scalar>(std::sqrt(1.0 - bar)) * eps_hat.col(j)) /
                 static_cast<Scalar>(std::sqrt(bar));
  }
  return out;
}

/// Per-step noise for columns [offset, offset + cols) at step t. Every sampler
/// draws from this one source so base, fine-tuned and combined runs see the
/// same noise sequence.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> step_noise(Index rows, Index cols, std::uint64_t seed, int t, Index column_offset = 0) {
  return normal_matrix<Scalar>(rows, cols, seed, "step-noise", static_cast<std::uint64_t>(t), column_offset);
}

/// Initial latent x_T for columns [offset, offset + cols).
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> initial_noise(Index rows, Index cols, std::uint64_t seed, Index column_offset = 0) {
  return normal_matrix<Scalar>(rows, cols, seed, "initial-noise", 0, column_offset);
}

/// Noise predictor used at inference step t: (t, x_t) -> eps_hat.
template <typename Scalar>
using StepPredictor = std::function<Matrix<Scalar>(int, const Matrix<Scalar>&)>;

/// Runs reverse steps t = from, from - 1, ..., 1 and returns x_0.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> run_reverse(const NoiseSchedule& s, Matrix<Scalar> x, int from,
                                         const TrajectoryConfig& cfg, const StepPredictor<Scalar>& predict) {
  for (int t = from; t >= 1; --t) {
    const auto k = sampler_coeffs(s, t, cfg.kind, cfg.eta);
    const Matrix<Scalar> eps = predict(t, x);
    const Matrix<Scalar> noise =
        k.c != 0.0 ? step_noise<Scalar>(x.rows(), x.cols(), cfg.rng_seed, t) : Matrix<Scalar>();
    x = reverse_step(k, eps, x, noise);
  }
  return x;
}

namespace detail {
inline void check_trajectory(const NoiseSchedule& s, const TrajectoryConfig& cfg) {
  cfg.validate();
  if (cfg.steps != s.steps())
    throw ConfigError("trajectory config has " + std::to_string(cfg.steps) + " steps, schedule has " +
                      std::to_string(s.steps()));
}
}  // namespace detail

/// Full trajectory from x_T with one parameter set and one guidance scale.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> sample_trajectory(const DenoiserParams<Scalar>& p, const NoiseSchedule& s,
                                               const Matrix<Scalar>& x_T, std::span<const int> cls,
                                               const TrajectoryConfig& cfg, double guidance_scale) {
  detail::check_trajectory(s, cfg);
  return run_reverse<Scalar>(s, x_T, s.steps(), cfg, [&](int t, const Matrix<Scalar>& x) {
    return predict_eps_cfg(p, x, s.model_timestep(t), cls, guidance_scale);
  });
}

/// Base parameters (with guidance_scale_base) for t > T', fine-tuned
/// parameters (with guidance_scale_ft) for t <= T'.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> combined_sample(const DenoiserParams<Scalar>& base, const DenoiserParams<Scalar>& ft,
                                             const NoiseSchedule& s, const Matrix<Scalar>& x_T,
                                             std::span<const int> cls, const TrajectoryConfig& cfg) {
  detail::check_trajectory(s, cfg);
  if (!(base.arch == ft.arch)) throw ConfigError("combined_sample: base and fine-tuned architectures differ");
  return run_reverse<Scalar>(s, x_T, s.steps(), cfg, [&](int t, const Matrix<Scalar>& x) {
    const bool use_ft = t <= cfg.switch_point;
    return predict_eps_cfg(use_ft ? ft : base, x, s.model_timestep(t), cls,
                           use_ft ? cfg.guidance_scale_ft : cfg.guidance_scale_base);
  });
}

/// Interpolation-guidance baseline: every step uses
/// (1 - lambda) eps_base + lambda eps_ft. Stand-in for the two-model guidance
/// baseline; it is not a reproduction of any published method's internals.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> interpolated_guidance_sample(const DenoiserParams<Scalar>& base,
                                                          const DenoiserParams<Scalar>& ft, double lambda,
                                                          const NoiseSchedule& s, const Matrix<Scalar>& x_T,
                                                          std::span<const int> cls, const TrajectoryConfig& cfg) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("interpolation lambda must lie in [0, 1]");
  detail::check_trajectory(s, cfg);
  if (!(base.arch == ft.arch)) throw ConfigError("interpolated sampling: architectures differ");
  return run_reverse<Scalar>(s, x_T, s.steps(), cfg, [&](int t, const Matrix<Scalar>& x) -> Matrix<Scalar> {
    const int mt = s.model_timestep(t);
    if (lambda == 0.0) return predict_eps_cfg(base, x, mt, cls, cfg.guidance_scale_base);
    if (lambda == 1.0) return predict_eps_cfg(ft, x, mt, cls, cfg.guidance_scale_ft);
    const auto l = static_cast<Scalar>(lambda);
    return (Scalar(1) - l) * predict_eps_cfg(base, x, mt, cls, cfg.guidance_scale_base) +
           l * predict_eps_cfg(ft, x, mt, cls, cfg.guidance_scale_ft);
  });
}

/// Result of a partial trajectory that ends with a gradient-carrying x0
/// prediction. `backward` turns d(loss)/d(x0_hat) into a parameter gradient.
template <typename Scalar>
class PartialSample {
 public:
  Matrix<Scalar> x0_hat;
  Matrix<Scalar> x_final;  // x_{t_f}, the input of the final prediction
  std::vector<int> stop;   // t_f per column

  /// Accumulates into `grad` (sized like the parameters).
  void backward(const Matrix<Scalar>& d_x0, Vector<Scalar>& grad) const {
    if (d_x0.rows() != x0_hat.rows() || d_x0.cols() != x0_hat.cols())
      throw ArgumentError("PartialSample::backward: gradient shape mismatch");
    // x0 = (x - sqrt(1 - abar) eps(x)) / sqrt(abar)
    Matrix<Scalar> d_eps(d_x0.rows(), d_x0.cols());
    Matrix<Scalar> d_x(d_x0.rows(), d_x0.cols());
    for (Index j = 0; j < d_x0.cols(); ++j) {
      const double bar = schedule_->alpha_bar(stop[static_cast<std::size_t>(j)]);
      d_eps.col(j) = static_cast<Scalar>(-std::sqrt(1.0 - bar) / std::sqrt(bar)) * d_x0.col(j);
      d_x.col(j) = static_cast<Scalar>(1.0 / std::sqrt(bar)) * d_x0.col(j);
    }
    d_x += backward_eps_cfg(*params_, final_tape_, d_eps, grad);
    // Untruncated mode: continue through the recorded reverse steps.
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
      Matrix<Scalar> d_next(d_x0.rows(), static_cast<Index>(it->columns.size()));
      for (std::size_t i = 0; i < it->columns.size(); ++i) d_next.col(static_cast<Index>(i)) = d_x.col(it->columns[i]);
      // x_{t-1} = a x_t + b eps(x_t) + c noise
      Matrix<Scalar> d_prev = static_cast<Scalar>(it->a) * d_next;
      d_prev += backward_eps_cfg(*params_, it->tape, Matrix<Scalar>(static_cast<Scalar>(it->b) * d_next), grad);
      for (std::size_t i = 0; i < it->columns.size(); ++i) d_x.col(it->columns[i]) = d_prev.col(static_cast<Index>(i));
    }
  }

 private:
  template <typename S>
  friend PartialSample<S> partial_sample(const DenoiserParams<S>&, const NoiseSchedule&, const Matrix<S>&,
                                         std::span<const int>, std::span<const int>, std::span<const int>, bool,
                                         const TrajectoryConfig&, double);

  struct RecordedStep {
    std::vector<Index> columns;
    double a = 1.0, b = 0.0;
    GuidedTape<Scalar> tape;
  };

  const DenoiserParams<Scalar>* params_ = nullptr;
  const NoiseSchedule* schedule_ = nullptr;
  GuidedTape<Scalar> final_tape_;
  std::vector<RecordedStep> steps_;
};

/// Continues column j from x_{start[j]} down to x_{stop[j]} and then predicts
/// x0 at stop[j]. With `truncate_grad` every evaluation before the final one
/// runs under gradient isolation; otherwise the whole chain is recorded.
///
/// The returned object keeps pointers to `p` and `s`; both must outlive it.
template <typename Scalar>
[[nodiscard]] PartialSample<Scalar> partial_sample(const DenoiserParams<Scalar>& p, const NoiseSchedule& s,
                                                   const Matrix<Scalar>& x_start, std::span<const int> start,
                                                   std::span<const int> stop, std::span<const int> cls,
                                                   bool truncate_grad, const TrajectoryConfig& cfg,
                                                   double guidance_scale) {
  const auto n = static_cast<std::size_t>(x_start.cols());
  if (start.size() != n || stop.size() != n || (cls.size() != n && cls.size() != 1))
    throw ArgumentError("partial_sample: one start/stop/class per column required");
  int top = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!(start[j] > stop[j] && stop[j] >= 1 && start[j] <= s.steps()))
      throw ArgumentError("partial_sample: need T >= t' > t_f >= 1");
    top = std::max(top, start[j]);
  }
  auto class_of = [&](std::size_t j) { return cls.size() == 1 ? cls[0] : cls[j]; };

  PartialSample<Scalar> out;
  out.params_ = &p;
  out.schedule_ = &s;
  out.stop.assign(stop.begin(), stop.end());
  Matrix<Scalar> x = x_start;

  for (int t = top; t >= 2; --t) {
    std::vector<Index> active;
    for (std::size_t j = 0; j < n; ++j)
      if (t <= start[j] && t > stop[j]) active.push_back(static_cast<Index>(j));
    if (active.empty()) continue;
    const auto k = sampler_coeffs(s, t, cfg.kind, cfg.eta);
    Matrix<Scalar> xs(x.rows(), static_cast<Index>(active.size()));
    std::vector<int> cs(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      xs.col(static_cast<Index>(i)) = x.col(active[i]);
      cs[i] = class_of(static_cast<std::size_t>(active[i]));
    }
    GuidedTape<Scalar> tape;
    tape.record = !truncate_grad;
    const Matrix<Scalar> eps = predict_eps_cfg(p, xs, s.model_timestep(t), cs, guidance_scale, &tape);
    Matrix<Scalar> next = static_cast<Scalar>(k.a) * xs + static_cast<Scalar>(k.b) * eps;
    if (k.c != 0.0) {
      for (std::size_t i = 0; i < active.size(); ++i)
        next.col(static_cast<Index>(i)) +=
            static_cast<Scalar>(k.c) * step_noise<Scalar>(x.rows(), 1, cfg.rng_seed, t, active[i]).col(0);
    }
    for (std::size_t i = 0; i < active.size(); ++i) x.col(active[i]) = next.col(static_cast<Index>(i));
    if (!truncate_grad) out.steps_.push_back({std::move(active), k.a, k.b, std::move(tape)});
  }

  std::vector<int> model_t(n), cs(n);
  for (std::size_t j = 0; j < n; ++j) {
    model_t[j] = s.model_timestep(stop[j]);
    cs[j] = class_of(j);
  }
  out.final_tape_.record = true;
  const Matrix<Scalar> eps = predict_eps_cfg(p, x, model_t, cs, guidance_scale, &out.final_tape_);
  out.x0_hat = predict_x0(s, eps, x, stop);
  out.x_final = std::move(x);
  return out;
}

}  // namespace rlab
