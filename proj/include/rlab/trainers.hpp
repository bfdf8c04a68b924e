#pragma once

#include "rlab/core.hpp"
#include "rlab/denoiser.hpp"
#include "rlab/optim.hpp"
#include "rlab/rewards.hpp"
#include "rlab/samplers.hpp"
#include "rlab/schedule.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace rlab {

enum class Algorithm { pretrain, refl, imagerefl };

[[nodiscard]] inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::pretrain: return "pretrain";
    case Algorithm::refl: return "refl";
    case Algorithm::imagerefl: return "imagerefl";
  }
  return "?";
}

[[nodiscard]] inline Algorithm algorithm_from(const std::string& s) {
  if (s == "pretrain") return Algorithm::pretrain;
  if (s == "refl") return Algorithm::refl;
  if (s == "imagerefl") return Algorithm::imagerefl;
  throw ConfigError("unknown algorithm '" + s + "'");
}

/// Training settings. Step windows are in inference-step indices of the
/// sampling schedule (1-based; t = 0 is the clean sample): the gradient-carrying
/// x0 prediction happens at t_f in [tf_min, tf_max], and ImageReFL starts its
/// partial trajectory from a noised real sample at t' in [tp_min, tp_max].
struct TrainConfig {
  Algorithm algorithm = Algorithm::refl;
  AdamWConfig optimizer{};
  int batch_size = 64;
  int epochs = 1;
  int max_steps = 0;  // > 0 overrides the epoch-derived step count
  int tf_min = 1;
  int tf_max = 10;
  int tp_min = 11;
  int tp_max = 14;
  double reward_scale = 1e-3;
  double diffusion_loss_weight = 1e-5;
  int imagerefl_per_refl = 3;
  double cfg_dropout_prob = 0.1;
  std::uint64_t seed = 0;

  // Reverse process used for reward trajectories.
  SamplerKind sampler = SamplerKind::deterministic;
  double eta = 0.0;
  double guidance_scale = 1.0;

  int eval_every = 100;
  int checkpoint_every = 0;

  void validate(int inference_steps) const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0 || max_steps < 0) throw ConfigError("epochs and max_steps must be >= 0");
    if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (reward_scale < 0.0 || diffusion_loss_weight < 0.0) throw ConfigError("loss weights must be >= 0");
    if (!(cfg_dropout_prob >= 0.0 && cfg_dropout_prob <= 1.0)) throw ConfigError("cfg_dropout_prob outside [0, 1]");
    if (imagerefl_per_refl < 0) throw ConfigError("imagerefl_per_refl must be >= 0");
    if (!(guidance_scale >= 0.0)) throw ConfigError("guidance_scale must be >= 0");
    if (algorithm == Algorithm::pretrain) return;
    if (!(tf_min >= 1 && tf_min <= tf_max && tf_max < inference_steps))
      throw ConfigError("t_f window must satisfy 1 <= tf_min <= tf_max < steps");
    if (algorithm == Algorithm::imagerefl && !(tp_min > tf_max && tp_min <= tp_max && tp_max <= inference_steps))
      throw ConfigError("t' window must satisfy tf_max < tp_min <= tp_max <= steps");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"algorithm", to_string(c.algorithm)},
       {"optimizer",
        {{"lr", c.optimizer.lr},
         {"beta1", c.optimizer.beta1},
         {"beta2", c.optimizer.beta2},
         {"eps", c.optimizer.eps},
         {"weight_decay", c.optimizer.weight_decay},
         {"clip_norm", c.optimizer.clip_norm}}},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"tf_window", {c.tf_min, c.tf_max}},
       {"tp_window", {c.tp_min, c.tp_max}},
       {"reward_scale", c.reward_scale},
       {"diffusion_loss_weight", c.diffusion_loss_weight},
       {"imagerefl_per_refl", c.imagerefl_per_refl},
       {"cfg_dropout_prob", c.cfg_dropout_prob},
       {"seed", c.seed},
       {"sampler", to_string(c.sampler)},
       {"eta", c.eta},
       {"guidance_scale", c.guidance_scale},
       {"eval_every", c.eval_every},
       {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.algorithm = algorithm_from(j.at("algorithm").get<std::string>());
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = o.value("eps", c.optimizer.eps);
    c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
    c.optimizer.clip_norm = o.value("clip_norm", c.optimizer.clip_norm);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  if (j.contains("tf_window")) {
    c.tf_min = j.at("tf_window").at(0).get<int>();
    c.tf_max = j.at("tf_window").at(1).get<int>();
  }
  if (j.contains("tp_window")) {
    c.tp_min = j.at("tp_window").at(0).get<int>();
    c.tp_max = j.at("tp_window").at(1).get<int>();
  }
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  c.diffusion_loss_weight = j.value("diffusion_loss_weight", c.diffusion_loss_weight);
  c.imagerefl_per_refl = j.value("imagerefl_per_refl", c.imagerefl_per_refl);
  c.cfg_dropout_prob = j.value("cfg_dropout_prob", c.cfg_dropout_prob);
  c.seed = j.value("seed", c.seed);
  c.sampler = sampler_kind_from(j.value("sampler", std::string("deterministic")));
  c.eta = j.value("eta", c.eta);
  c.guidance_scale = j.value("guidance_scale", c.guidance_scale);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

enum class Branch { pretrain, refl, imagerefl };

[[nodiscard]] inline std::string to_string(Branch b) {
  return b == Branch::pretrain ? "pretrain" : b == Branch::refl ? "refl" : "imagerefl";
}

/// total == reward + diffusion_weight * diffusion for the components applied.
struct StepReport {
  long step = 0;
  Branch branch = Branch::refl;
  double diffusion = 0.0;
  double reward = 0.0;
  double diffusion_weight = 0.0;
  double total = 0.0;
  double mean_raw_reward = 0.0;
  double grad_norm = 0.0;
};

inline void to_json(nlohmann::json& j, const StepReport& r) {
  j = {{"step", r.step},
       {"branch", to_string(r.branch)},
       {"diffusion", r.diffusion},
       {"reward", r.reward},
       {"diffusion_weight", r.diffusion_weight},
       {"total", r.total},
       {"mean_raw_reward", r.mean_raw_reward},
       {"grad_norm", r.grad_norm}};
}

/// Both schedules a fine-tuning run needs: the training schedule (diffusion
/// loss during pretraining) and its respaced inference schedule (reward
/// trajectories, t_f and t' windows).
struct Schedules {
  NoiseSchedule train;
  NoiseSchedule inference;
};

template <typename Scalar>
struct GradStep {
  StepReport report;
  Vector<Scalar> grad;
};

/// ||eps - eps_hat||^2 summed over dimensions, averaged over the batch.
/// Writes d(loss)/d(eps_hat) to `d_eps_hat`.
template <typename Scalar>
double diffusion_loss(const Matrix<Scalar>& eps_hat, const Matrix<Scalar>& eps, Matrix<Scalar>& d_eps_hat) {
  if (eps_hat.rows() != eps.rows() || eps_hat.cols() != eps.cols()) throw ArgumentError("diffusion_loss: shape mismatch");
  const Matrix<Scalar> diff = eps_hat - eps;
  const auto n = static_cast<double>(eps.cols());
  d_eps_hat = static_cast<Scalar>(2.0 / n) * diff;
  return static_cast<double>(diff.squaredNorm()) / n;
}

/// -mean_j rescale(R(x0_j)), with d(loss)/d(x0) in `d_x0`.
/// `scale` multiplies the [0, 1]-normalized reward.
template <typename Scalar>
double reward_loss(const RewardModel<Scalar>& reward, const Matrix<Scalar>& x0, std::span<const int> cls, double scale,
                   Matrix<Scalar>& d_x0, double* mean_raw = nullptr) {
  const Index n = x0.cols();
  const auto& spec = reward.spec();
  const Vector<double> raw_plain = reward.raw(x0, cls);
  std::vector<double> weight(static_cast<std::size_t>(n));
  double loss = 0.0;
  for (Index j = 0; j < n; ++j) {
    const double norm01 = std::clamp((raw_plain[j] - spec.norm_lo) / (spec.norm_hi - spec.norm_lo), 0.0, 1.0);
    loss -= scale * norm01 / double(n);
    const bool inside = raw_plain[j] > spec.norm_lo && raw_plain[j] < spec.norm_hi;
    weight[static_cast<std::size_t>(j)] = inside ? -scale / (spec.norm_hi - spec.norm_lo) / double(n) : 0.0;
  }
  (void)reward.raw_with_grad(x0, cls, weight, d_x0);
  if (mean_raw) *mean_raw = raw_plain.mean();
  if (!std::isfinite(loss)) throw NumericError("reward loss is not finite");
  return loss;
}

// --- Randomness for one step -------------------------------------------------

template <typename Scalar>
struct PretrainDraws {
  std::vector<int> t;      // training-schedule steps
  Matrix<Scalar> eps;
  std::vector<int> cls;    // after condition dropout
};

template <typename Scalar>
struct ReflDraws {
  Matrix<Scalar> x_T;
  std::vector<int> t_f;
};

template <typename Scalar>
struct ImageReflDraws {
  Matrix<Scalar> eps;
  std::vector<int> t_prime;
  std::vector<int> t_f;
};

template <typename Scalar>
[[nodiscard]] PretrainDraws<Scalar> draw_pretrain(const TrainConfig& cfg, const NoiseSchedule& train, Index dim,
                                                  std::span<const int> cls, long step) {
  PretrainDraws<Scalar> d;
  const auto n = cls.size();
  d.eps = normal_matrix<Scalar>(dim, static_cast<Index>(n), cfg.seed, "pretrain-eps", static_cast<std::uint64_t>(step));
  const CounterRng rng(cfg.seed, stream_id("pretrain-t", static_cast<std::uint64_t>(step)));
  d.t.resize(n);
  d.cls.assign(cls.begin(), cls.end());
  for (std::size_t j = 0; j < n; ++j) {
    d.t[j] = rng.uniform_int(2 * j, 1, train.steps());
    if (rng.uniform(2 * j + 1) < cfg.cfg_dropout_prob) d.cls[j] = kNullClass;
  }
  return d;
}

template <typename Scalar>
[[nodiscard]] ReflDraws<Scalar> draw_refl(const TrainConfig& cfg, Index dim, Index n, long step) {
  ReflDraws<Scalar> d;
  d.x_T = normal_matrix<Scalar>(dim, n, cfg.seed, "refl-xT", static_cast<std::uint64_t>(step));
  const CounterRng rng(cfg.seed, stream_id("refl-tf", static_cast<std::uint64_t>(step)));
  d.t_f.resize(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) d.t_f[static_cast<std::size_t>(j)] = rng.uniform_int(j, cfg.tf_min, cfg.tf_max);
  return d;
}

template <typename Scalar>
[[nodiscard]] ImageReflDraws<Scalar> draw_imagerefl(const TrainConfig& cfg, Index dim, Index n, long step) {
  ImageReflDraws<Scalar> d;
  d.eps = normal_matrix<Scalar>(dim, n, cfg.seed, "imagerefl-eps", static_cast<std::uint64_t>(step));
  const CounterRng rng(cfg.seed, stream_id("imagerefl-t", static_cast<std::uint64_t>(step)));
  d.t_prime.resize(static_cast<std::size_t>(n));
  d.t_f.resize(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    d.t_prime[static_cast<std::size_t>(j)] = rng.uniform_int(2 * j, cfg.tp_min, cfg.tp_max);
    d.t_f[static_cast<std::size_t>(j)] = rng.uniform_int(2 * j + 1, cfg.tf_min, cfg.tf_max);
  }
  return d;
}

// --- Gradients ------------------------------------------------------------------

/// Noise-prediction loss on the training schedule.
template <typename Scalar>
[[nodiscard]] GradStep<Scalar> pretrain_gradient(const DenoiserParams<Scalar>& p, const NoiseSchedule& train,
                                                 const Matrix<Scalar>& x0, const PretrainDraws<Scalar>& d) {
  const Index n = x0.cols();
  Matrix<Scalar> x_t(x0.rows(), n);
  for (Index j = 0; j < n; ++j) {
    const double bar = train.alpha_bar(d.t[static_cast<std::size_t>(j)]);
    x_t.col(j) = static_cast<Scalar>(std::sqrt(bar)) * x0.col(j) + static_cast<Scalar>(std::sqrt(1.0 - bar)) * d.eps.col(j);
  }
  std::vector<int> model_t(d.t.size());
  for (std::size_t j = 0; j < d.t.size(); ++j) model_t[j] = train.model_timestep(d.t[j]);
  Tape<Scalar> tape;
  const Matrix<Scalar> eps_hat = predict_eps(p, x_t, model_t, d.cls, &tape);
  Matrix<Scalar> d_eps;
  GradStep<Scalar> out;
  out.report.branch = Branch::pretrain;
  out.report.diffusion = diffusion_loss(eps_hat, d.eps, d_eps);
  out.report.diffusion_weight = 1.0;
  out.report.total = out.report.diffusion;
  out.grad = Vector<Scalar>::Zero(p.size());
  (void)backward_eps(p, tape, d_eps, out.grad);
  return out;
}

/// Reward loss of a full trajectory from x_T with gradient only through the
/// x0 prediction at t_f.
template <typename Scalar>
[[nodiscard]] GradStep<Scalar> refl_gradient(const DenoiserParams<Scalar>& p, const NoiseSchedule& inference,
                                             const RewardModel<Scalar>& reward, std::span<const int> cls,
                                             const ReflDraws<Scalar>& d, const TrainConfig& cfg) {
  const auto n = static_cast<std::size_t>(d.x_T.cols());
  const std::vector<int> start(n, inference.steps());
  const TrajectoryConfig traj{.steps = inference.steps(), .kind = cfg.sampler, .eta = cfg.eta,
                              .rng_seed = cfg.seed};
  const auto ps = partial_sample(p, inference, d.x_T, start, d.t_f, cls, true, traj, cfg.guidance_scale);
  GradStep<Scalar> out;
  out.report.branch = Branch::refl;
  Matrix<Scalar> d_x0;
  out.report.reward = reward_loss(reward, ps.x0_hat, cls, cfg.reward_scale, d_x0, &out.report.mean_raw_reward);
  out.report.total = out.report.reward;
  out.grad = Vector<Scalar>::Zero(p.size());
  ps.backward(d_x0, out.grad);
  return out;
}

/// Reward loss of a partial trajectory from a noised real sample at t', plus
/// the weighted noise-prediction loss at (x_t', t').
template <typename Scalar>
[[nodiscard]] GradStep<Scalar> imagerefl_gradient(const DenoiserParams<Scalar>& p, const NoiseSchedule& inference,
                                                  const RewardModel<Scalar>& reward, const Matrix<Scalar>& x0_real,
                                                  std::span<const int> cls, const ImageReflDraws<Scalar>& d,
                                                  const TrainConfig& cfg) {
  const Index n = x0_real.cols();
  Matrix<Scalar> x_tp(x0_real.rows(), n);
  std::vector<int> model_t(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const int tp = d.t_prime[static_cast<std::size_t>(j)];
    const double bar = inference.alpha_bar(tp);
    x_tp.col(j) = static_cast<Scalar>(std::sqrt(bar)) * x0_real.col(j) +
                  static_cast<Scalar>(std::sqrt(1.0 - bar)) * d.eps.col(j);
    model_t[static_cast<std::size_t>(j)] = inference.model_timestep(tp);
  }
  GradStep<Scalar> out;
  out.report.branch = Branch::imagerefl;
  out.grad = Vector<Scalar>::Zero(p.size());

  if (cfg.reward_scale > 0.0) {
    const TrajectoryConfig traj{.steps = inference.steps(), .kind = cfg.sampler, .eta = cfg.eta,
                                .rng_seed = cfg.seed};
    const auto ps = partial_sample(p, inference, x_tp, d.t_prime, d.t_f, cls, true, traj, cfg.guidance_scale);
    Matrix<Scalar> d_x0;
    out.report.reward = reward_loss(reward, ps.x0_hat, cls, cfg.reward_scale, d_x0, &out.report.mean_raw_reward);
    ps.backward(d_x0, out.grad);
  }

  Tape<Scalar> tape;
  const Matrix<Scalar> eps_hat = predict_eps(p, x_tp, model_t, cls, &tape);
  Matrix<Scalar> d_eps;
  out.report.diffusion = diffusion_loss(eps_hat, d.eps, d_eps);
  out.report.diffusion_weight = cfg.diffusion_loss_weight;
  if (cfg.diffusion_loss_weight > 0.0) {
    d_eps *= static_cast<Scalar>(cfg.diffusion_loss_weight);
    (void)backward_eps(p, tape, d_eps, out.grad);
  }
  out.report.total = out.report.reward + cfg.diffusion_loss_weight * out.report.diffusion;
  return out;
}

// --- Stateful stepping ------------------------------------------------------------

/// Owns the optimizer state for one trainable parameter set.
template <typename Scalar>
class Trainer {
 public:
  Trainer(DenoiserParams<Scalar>& params, TrainConfig cfg)
      : params_(params), cfg_(std::move(cfg)), opt_(params.size(), cfg_.optimizer) {}

  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] long steps_taken() const { return step_; }

  StepReport pretrain_step(const NoiseSchedule& train, const Matrix<Scalar>& x0, std::span<const int> cls) {
    require_trainable();
    const auto draws = draw_pretrain<Scalar>(cfg_, train, x0.rows(), cls, step_);
    return apply(pretrain_gradient(params_, train, x0, draws));
  }

  StepReport refl_step(const NoiseSchedule& inference, const RewardModel<Scalar>& reward, std::span<const int> cls) {
    require_trainable();
    const auto draws = draw_refl<Scalar>(cfg_, params_.arch.input_dim, static_cast<Index>(cls.size()), step_);
    return apply(refl_gradient(params_, inference, reward, cls, draws, cfg_));
  }

  StepReport imagerefl_step(const NoiseSchedule& inference, const RewardModel<Scalar>& reward,
                            const Matrix<Scalar>& x0_real, std::span<const int> cls) {
    require_trainable();
    const auto draws = draw_imagerefl<Scalar>(cfg_, x0_real.rows(), x0_real.cols(), step_);
    return apply(imagerefl_gradient(params_, inference, reward, x0_real, cls, draws, cfg_));
  }

  /// Applies an externally computed gradient (used by the step functions above).
  StepReport apply(GradStep<Scalar> g) {
    require_trainable();
    if (!all_finite(g.grad)) throw NumericError("non-finite gradient at step " + std::to_string(step_));
    g.report.step = step_;
    g.report.grad_norm = opt_.clip(g.grad);
    opt_.step(params_.weights, g.grad);
    ++step_;
    return g.report;
  }

 private:
  void require_trainable() const {
    if (params_.frozen) throw StateError("parameters '" + params_.name + "' are frozen");
  }

  DenoiserParams<Scalar>& params_;
  TrainConfig cfg_;
  AdamW<Scalar> opt_;
  long step_ = 0;
};

/// Labeled training samples, one column per sample.
template <typename Scalar>
struct Dataset {
  Matrix<Scalar> x;
  std::vector<int> labels;

  [[nodiscard]] Index size() const { return x.cols(); }
};

/// Branch for loop step i: ImageReFL runs `ratio` ImageReFL steps then one ReFL step.
[[nodiscard]] inline Branch branch_for_step(const TrainConfig& cfg, long i) {
  if (cfg.algorithm == Algorithm::pretrain) return Branch::pretrain;
  if (cfg.algorithm == Algorithm::refl) return Branch::refl;
  const long period = cfg.imagerefl_per_refl + 1;
  return i % period == period - 1 ? Branch::refl : Branch::imagerefl;
}

/// Epoch-seeded Fisher-Yates order over the dataset; a new permutation is drawn
/// whenever fewer than one batch of indices remain.
class BatchCursor {
 public:
  BatchCursor(Index size, int batch, std::uint64_t seed) : size_(size), batch_(batch), seed_(seed) {
    if (size_ < 1) throw ConfigError("training data is empty");
    reshuffle();
  }

  [[nodiscard]] std::vector<Index> next() {
    const auto want = static_cast<std::size_t>(std::min<Index>(batch_, size_));
    if (pos_ + want > order_.size()) {
      ++epoch_;
      reshuffle();
    }
    std::vector<Index> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                           order_.begin() + static_cast<std::ptrdiff_t>(pos_ + want));
    pos_ += want;
    return out;
  }

  [[nodiscard]] long epoch() const { return epoch_; }

 private:
  void reshuffle() {
    order_.resize(static_cast<std::size_t>(size_));
    std::iota(order_.begin(), order_.end(), Index{0});
    const CounterRng rng(seed_, stream_id("epoch-order", static_cast<std::uint64_t>(epoch_)));
    for (std::size_t i = order_.size(); i-- > 1;) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(i, 0, static_cast<int>(i)));
      std::swap(order_[i], order_[j]);
    }
    pos_ = 0;
  }

  Index size_;
  int batch_;
  std::uint64_t seed_;
  std::vector<Index> order_;
  std::size_t pos_ = 0;
  long epoch_ = 0;
};

[[nodiscard]] inline long planned_steps(const TrainConfig& cfg, Index data_size) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  const long per_epoch = std::max<long>(1, static_cast<long>(data_size) / std::max(1, cfg.batch_size));
  return per_epoch * cfg.epochs;
}

template <typename Scalar>
struct TrainResult {
  DenoiserParams<Scalar> params;
  std::vector<StepReport> log;
};

/// Hooks invoked after optimizer step `step` (1-based count of completed
/// steps) at the configured cadences.
template <typename Scalar>
struct TrainHooks {
  std::function<void(long, const DenoiserParams<Scalar>&)> on_eval;
  std::function<void(long, const DenoiserParams<Scalar>&)> on_checkpoint;
  std::function<void(const StepReport&)> on_step;
};

template <typename Scalar>
[[nodiscard]] TrainResult<Scalar> train_loop(const TrainConfig& cfg, const Dataset<Scalar>& data,
                                             const Schedules& schedules, const RewardModel<Scalar>* reward,
                                             const DenoiserParams<Scalar>& p_init, const TrainHooks<Scalar>& hooks = {}) {
  cfg.validate(schedules.inference.steps());
  if (p_init.frozen) throw StateError("cannot train frozen parameters '" + p_init.name + "'");
  if (cfg.algorithm != Algorithm::pretrain && reward == nullptr) throw ConfigError("fine-tuning needs a reward");
  TrainResult<Scalar> result{p_init, {}};
  const long total = cfg.epochs == 0 && cfg.max_steps == 0 ? 0 : planned_steps(cfg, data.size());
  if (total == 0) return result;

  Trainer<Scalar> trainer(result.params, cfg);
  BatchCursor cursor(data.size(), cfg.batch_size, cfg.seed);
  result.log.reserve(static_cast<std::size_t>(total));
  for (long i = 0; i < total; ++i) {
    const auto idx = cursor.next();
    Matrix<Scalar> x(data.x.rows(), static_cast<Index>(idx.size()));
    std::vector<int> cls(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      x.col(static_cast<Index>(k)) = data.x.col(idx[k]);
      cls[k] = data.labels[static_cast<std::size_t>(idx[k])];
    }
    StepReport report;
    switch (branch_for_step(cfg, i)) {
      case Branch::pretrain: report = trainer.pretrain_step(schedules.train, x, cls); break;
      case Branch::refl: report = trainer.refl_step(schedules.inference, *reward, cls); break;
      case Branch::imagerefl: report = trainer.imagerefl_step(schedules.inference, *reward, x, cls); break;
    }
    result.log.push_back(report);
    if (hooks.on_step) hooks.on_step(report);
    const long done = i + 1;
    if (hooks.on_eval && cfg.eval_every > 0 && done % cfg.eval_every == 0) hooks.on_eval(done, result.params);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(done, result.params);
  }
  return result;
}

}  // namespace rlab
