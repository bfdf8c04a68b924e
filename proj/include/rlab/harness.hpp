#pragma once

#include "rlab/config.hpp"
#include "rlab/core.hpp"
#include "rlab/data.hpp"
#include "rlab/denoiser.hpp"
#include "rlab/extractors.hpp"
#include "rlab/metrics.hpp"
#include "rlab/plot.hpp"
#include "rlab/rewards.hpp"
#include "rlab/samplers.hpp"
#include "rlab/trainers.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace rlab {

namespace fs = std::filesystem;

// --- File helpers -----------------------------------------------------------------

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

[[nodiscard]] inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[nodiscard]] inline std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_text(path))); }

/// Lists output files with content hashes; written last so a present
/// manifest with status "ok" marks a complete run directory.
class Manifest {
 public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name) { files_.insert(name); }

  void write_ok(const ExperimentConfig& cfg, const std::string& command) const {
    write(cfg, command, "ok", "", "");
  }

  void write_failure(const ExperimentConfig& cfg, const std::string& command, const std::string& stage,
                     const std::string& error) const {
    write(cfg, command, "failed", stage, error);
  }

 private:
  void write(const ExperimentConfig& cfg, const std::string& command, const std::string& status,
             const std::string& stage, const std::string& error) const {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : files_) {
      const fs::path p = dir_ / f;
      if (!fs::exists(p)) continue;
      files.push_back({{"path", f}, {"bytes", fs::file_size(p)}, {"fnv1a64", file_hash(p)}});
    }
    nlohmann::json doc = {{"format", "rlab-manifest"}, {"version", 1},     {"command", command},
                          {"status", status},          {"files", files},   {"config", cfg}};
    if (status != "ok") doc["failure"] = {{"stage", stage}, {"error", error}};
    write_text(dir_ / "manifest.json", doc.dump(2) + "\n");
  }

  fs::path dir_;
  std::set<std::string> files_;
};

// --- Task context -------------------------------------------------------------------

/// Everything fixed by the config before any model exists.
template <typename Scalar>
struct TaskContext {
  ExperimentConfig cfg;
  SplitDataset<Scalar> data;
  Schedules schedules;
  std::vector<std::vector<double>> anchors;
  FeatureExtractor<Scalar> distribution;
  FeatureExtractor<Scalar> diversity;
  FeatureSet reference;
  Eigen::MatrixXd prototypes;  // K x F in diversity-feature space

  [[nodiscard]] int classes() const { return cfg.data.classes; }
  [[nodiscard]] int steps() const { return cfg.schedule.inference_steps; }
};

template <typename Scalar>
[[nodiscard]] std::vector<std::vector<double>> resolve_anchors(const ExperimentConfig& cfg,
                                                               const Dataset<Scalar>& train) {
  std::vector<std::vector<double>> out;
  if (cfg.reward.anchors.is_array()) {
    out = cfg.reward.anchors.get<std::vector<std::vector<double>>>();
    if (static_cast<int>(out.size()) != cfg.data.classes) throw ConfigError("reward.anchors needs one point per class");
    for (const auto& a : out)
      if (static_cast<int>(a.size()) != cfg.data.dim()) throw ConfigError("reward anchor has the wrong dimension");
    return out;
  }
  const auto gen = cfg.reward.anchors.get<std::string>();
  for (int k = 0; k < cfg.data.classes; ++k) {
    Vector<double> a;
    if (gen == "class_centers") {
      a = class_center(cfg.data, k);
    } else {
      const Matrix<Scalar> members = class_subset(train, k);
      if (members.cols() == 0) throw ConfigError("class " + std::to_string(k) + " has no training samples");
      a = members.template cast<double>().rowwise().mean();
    }
    out.emplace_back(a.data(), a.data() + a.size());
  }
  return out;
}

template <typename Scalar>
[[nodiscard]] TaskContext<Scalar> make_context(const ExperimentConfig& cfg) {
  cfg.validate();
  auto data = synthesize_dataset<Scalar>(cfg.data, stage_seed(cfg, "data"));
  auto anchors = resolve_anchors(cfg, data.train);
  FeatureExtractor<Scalar> dist(cfg.evaluation.distribution_extractor);
  FeatureExtractor<Scalar> div(cfg.evaluation.diversity_extractor);
  FeatureSet reference = extract_features(data.heldout.x, dist, "real");
  Matrix<Scalar> a(cfg.data.dim(), cfg.data.classes);
  for (int k = 0; k < cfg.data.classes; ++k)
    for (int i = 0; i < cfg.data.dim(); ++i) a(i, k) = static_cast<Scalar>(anchors[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]);
  Eigen::MatrixXd prototypes = div.features(a).transpose().template cast<double>();
  return TaskContext<Scalar>{cfg,      std::move(data), make_schedules(cfg.schedule), std::move(anchors),
                             std::move(dist), std::move(div), std::move(reference), std::move(prototypes)};
}

// --- Generation and evaluation -----------------------------------------------------

/// Class-major condition layout: `per_class` columns of class 0, then class 1, ...
[[nodiscard]] inline std::vector<int> class_major_conditions(int classes, int per_class) {
  std::vector<int> cls(static_cast<std::size_t>(classes * per_class));
  for (std::size_t i = 0; i < cls.size(); ++i) cls[i] = static_cast<int>(i) / per_class;
  return cls;
}

enum class GenMode { base_only, ft_only, combined, interp_guidance };

/// Common-noise generation: every mode draws x_T and step noise from the same
/// streams, so rows of one sweep differ only in which parameters run where.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> generate(const TaskContext<Scalar>& ctx, const DenoiserParams<Scalar>& base,
                                      const std::type_identity_t<DenoiserParams<Scalar>>* ft, GenMode mode,
                                      int switch_point, std::span<const int> cls, std::uint64_t rng_seed) {
  const TrajectoryConfig tc = trajectory_config(ctx.cfg, switch_point, rng_seed);
  const Matrix<Scalar> x_T = initial_noise<Scalar>(ctx.cfg.data.dim(), static_cast<Index>(cls.size()), rng_seed);
  if (mode != GenMode::base_only && ft == nullptr) throw ConfigError("fine-tuned checkpoint required");
  switch (mode) {
    case GenMode::base_only: return sample_trajectory(base, ctx.schedules.inference, x_T, cls, tc, tc.guidance_scale_base);
    case GenMode::ft_only: return sample_trajectory(*ft, ctx.schedules.inference, x_T, cls, tc, tc.guidance_scale_ft);
    case GenMode::combined: return combined_sample(base, *ft, ctx.schedules.inference, x_T, cls, tc);
    case GenMode::interp_guidance:
      return interpolated_guidance_sample(base, *ft, ctx.cfg.sampling.interp_lambda, ctx.schedules.inference, x_T,
                                          cls, tc);
  }
  throw StateError("unreachable generation mode");
}

template <typename Scalar>
[[nodiscard]] MetricReport evaluate_samples(const TaskContext<Scalar>& ctx, const RewardModel<Scalar>& reward,
                                            const Matrix<Scalar>& x, std::span<const int> cls, int per_class,
                                            const std::string& algorithm, int switch_point) {
  MetricReport r;
  r.seed = ctx.cfg.seed;
  r.algorithm = algorithm;
  r.switch_point = switch_point;
  r.reward_mean = reward.raw(x, cls).mean();
  const FeatureSet f = extract_features(x, ctx.distribution);
  r.frechet = frechet_distance(f, ctx.reference);
  r.cov_distance = cov_distance(f, ctx.reference);
  r.log_cov_distance = log_cov_distance(f, ctx.reference);
  std::vector<FeatureSet> per;
  for (int k = 0; k < ctx.classes(); ++k) {
    FeatureSet fk = extract_features(Matrix<Scalar>(x.middleCols(Index(k) * per_class, per_class)), ctx.diversity);
    per.push_back(std::move(fk));
  }
  r.embedding_diversity = embedding_diversity(per);
  const FeatureSet d = extract_features(x, ctx.diversity);
  r.alignment = alignment_score(d, cls, ctx.prototypes);
  r.sample_count = x.cols();
  r.reference_count = ctx.reference.count();
  r.distribution_extractor = ctx.distribution.spec().id();
  r.diversity_extractor = ctx.diversity.spec().id();
  r.validate();
  return r;
}

template <typename Scalar>
[[nodiscard]] MetricReport evaluate_mode(const TaskContext<Scalar>& ctx, const RewardModel<Scalar>& reward,
                                         const DenoiserParams<Scalar>& base,
                                         const std::type_identity_t<DenoiserParams<Scalar>>* ft,
                                         GenMode mode, int switch_point, const std::string& tag, int per_class,
                                         std::uint64_t rng_seed) {
  const auto cls = class_major_conditions(ctx.classes(), per_class);
  const Matrix<Scalar> x = generate(ctx, base, ft, mode, switch_point, cls, rng_seed);
  return evaluate_samples(ctx, reward, x, cls, per_class, tag, switch_point);
}

// --- Pipeline stages ----------------------------------------------------------------

template <typename Scalar>
[[nodiscard]] TrainResult<Scalar> pretrain_stage(const TaskContext<Scalar>& ctx) {
  TrainConfig tc = ctx.cfg.pretrain;
  tc.seed = stage_seed(ctx.cfg, "pretrain");
  auto init = init_denoiser<Scalar>(ctx.cfg.arch, stage_seed(ctx.cfg, "init"), "base");
  auto result = train_loop<Scalar>(tc, ctx.data.train, ctx.schedules, nullptr, init);
  result.params.name = "base";
  return result;
}

/// Builds the reward, training a classifier and calibrating bounds on
/// base-only samples as the config requests. Bounds are frozen afterwards.
template <typename Scalar>
[[nodiscard]] RewardModel<Scalar> build_reward(const TaskContext<Scalar>& ctx, const DenoiserParams<Scalar>& base,
                                               std::optional<Classifier<Scalar>> classifier = std::nullopt) {
  const auto& rc = ctx.cfg.reward;
  RewardSpec spec;
  spec.kind = rc.kind;
  spec.anchors = ctx.anchors;
  spec.extractor = rc.kind == RewardKind::prototype_similarity ? rc.extractor : ExtractorSpec{};
  spec.scale = rc.scale;
  spec.norm_lo = rc.calibrate ? 0.0 : rc.norm_lo;
  spec.norm_hi = rc.calibrate ? 1.0 : rc.norm_hi;
  if (rc.kind == RewardKind::classifier_margin && !classifier)
    classifier = train_classifier<Scalar>(ctx.data.train.x, ctx.data.train.labels, ctx.classes(), rc.classifier_hidden,
                                          rc.classifier_steps, stage_seed(ctx.cfg, "classifier"));
  RewardModel<Scalar> model(spec, classifier);
  if (rc.calibrate) {
    const int per_class = (rc.calibration_samples + ctx.classes() - 1) / ctx.classes();
    const auto cls = class_major_conditions(ctx.classes(), per_class);
    const Matrix<Scalar> x = generate(ctx, base, nullptr, GenMode::base_only, 0, cls, stage_seed(ctx.cfg, "calibration"));
    const Vector<double> raw = model.raw(x, cls);
    const auto [lo, hi] = calibrate_bounds(std::span<const double>(raw.data(), static_cast<std::size_t>(raw.size())));
    model.mutable_spec().norm_lo = lo;
    model.mutable_spec().norm_hi = hi;
  }
  return model;
}

struct ProbeRow {
  long step = 0;
  MetricReport report;
};

template <typename Scalar>
struct FinetuneResult {
  TrainResult<Scalar> train;
  std::vector<ProbeRow> probe;
};

/// Fine-tunes a clone of `base`; the probe set (fixed noise, ft-only) is
/// evaluated before the first step and every `eval_every` steps.
template <typename Scalar>
[[nodiscard]] FinetuneResult<Scalar> finetune_stage(const TaskContext<Scalar>& ctx, const DenoiserParams<Scalar>& base,
                                                    const RewardModel<Scalar>& reward) {
  TrainConfig tc = ctx.cfg.finetune;
  tc.seed = stage_seed(ctx.cfg, "finetune");
  tc.sampler = ctx.cfg.sampling.sampler;
  tc.eta = ctx.cfg.sampling.eta;
  FinetuneResult<Scalar> out;
  const int per_class = std::max(2, ctx.cfg.evaluation.probe_samples / ctx.classes());
  const std::uint64_t probe_seed = stage_seed(ctx.cfg, "probe");
  auto probe = [&](long step, const DenoiserParams<Scalar>& p) {
    out.probe.push_back({step, evaluate_mode(ctx, reward, base, &p, GenMode::ft_only, ctx.steps(), "probe", per_class,
                                             probe_seed)});
  };
  auto ft = clone_params(base, "ft-" + to_string(tc.algorithm));
  if (tc.eval_every > 0) probe(0, ft);
  TrainHooks<Scalar> hooks;
  if (tc.eval_every > 0) hooks.on_eval = probe;
  out.train = train_loop<Scalar>(tc, ctx.data.train, ctx.schedules, &reward, ft, hooks);
  return out;
}

// --- Trade-off sweep -----------------------------------------------------------------

/// Grid rows sorted by ascending T' plus the two independently generated
/// endpoints. `method` names the fine-tuning that produced the ft parameters.
struct TradeoffCurve {
  std::string method;
  MetricReport base_only;
  std::vector<MetricReport> rows;
  MetricReport ft_only;

  /// base_only, grid rows, ft_only.
  [[nodiscard]] std::vector<MetricReport> all_rows() const {
    std::vector<MetricReport> out{base_only};
    out.insert(out.end(), rows.begin(), rows.end());
    out.push_back(ft_only);
    return out;
  }
};

template <typename Scalar>
[[nodiscard]] TradeoffCurve sweep_switch_point(const TaskContext<Scalar>& ctx, const DenoiserParams<Scalar>& base,
                                               const DenoiserParams<Scalar>& ft, const RewardModel<Scalar>& reward,
                                               std::vector<int> grid, const std::string& method) {
  if (base.arch != ft.arch) throw ConfigError("sweep: base and fine-tuned architectures differ");
  for (int g : grid)
    if (g < 0 || g > ctx.steps()) throw ConfigError("sweep: grid entry outside [0, steps]");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const int per_class = ctx.cfg.evaluation.samples_per_class;
  const std::uint64_t seed = stage_seed(ctx.cfg, "sweep");
  TradeoffCurve curve;
  curve.method = method;
  curve.base_only = evaluate_mode(ctx, reward, base, &ft, GenMode::base_only, 0, "base_only", per_class, seed);
  for (int g : grid)
    curve.rows.push_back(evaluate_mode(ctx, reward, base, &ft, GenMode::combined, g, method, per_class, seed));
  curve.ft_only = evaluate_mode(ctx, reward, base, &ft, GenMode::ft_only, ctx.steps(), "ft_only", per_class, seed);
  return curve;
}

inline void to_json(nlohmann::json& j, const TradeoffCurve& c) {
  j = {{"schema_version", kMetricSchemaVersion}, {"method", c.method}, {"base_only", c.base_only},
       {"rows", c.rows},                         {"ft_only", c.ft_only}};
}

inline void from_json(const nlohmann::json& j, TradeoffCurve& c) {
  c.method = j.at("method").get<std::string>();
  c.base_only = j.at("base_only").get<MetricReport>();
  c.rows = j.at("rows").get<std::vector<MetricReport>>();
  c.ft_only = j.at("ft_only").get<MetricReport>();
}

[[nodiscard]] inline std::string curve_csv(const TradeoffCurve& c) {
  std::string out = csv_header() + "\n";
  for (const auto& r : c.all_rows()) out += to_csv_row(r) + "\n";
  return out;
}

// --- Emission ------------------------------------------------------------------------

struct Panel {
  std::string file;
  std::string x_label;
  double MetricReport::*x;
};

inline const std::vector<Panel>& tradeoff_panels() {
  static const std::vector<Panel> panels{
      {"tradeoff_diversity.svg", "embedding diversity", &MetricReport::embedding_diversity},
      {"tradeoff_frechet.svg", "Frechet distance", &MetricReport::frechet},
      {"tradeoff_cov.svg", "covariance distance", &MetricReport::cov_distance},
      {"tradeoff_logcov.svg", "log covariance distance", &MetricReport::log_cov_distance}};
  return panels;
}

/// Writes sweep.csv, sweep.json and one reward-vs-metric panel per diversity
/// metric. Returns the file names written.
inline std::vector<std::string> emit_curve(const TradeoffCurve& c, const fs::path& dir) {
  ensure_dir(dir);
  std::vector<std::string> files{"sweep.csv", "sweep.json"};
  write_text(dir / "sweep.csv", curve_csv(c));
  write_text(dir / "sweep.json", nlohmann::json(c).dump(2) + "\n");
  for (const auto& panel : tradeoff_panels()) {
    plot::Series s{c.method + " (T' = fine-tuned steps)", {}, {}, {}, true};
    for (const auto& r : c.all_rows()) {
      s.x.push_back(r.*(panel.x));
      s.y.push_back(r.reward_mean);
      s.point_labels.push_back(r.algorithm == "base_only" ? "base" : r.algorithm == "ft_only" ? "ft" : std::to_string(r.switch_point));
    }
    write_text(dir / panel.file, plot::render_svg({"reward vs " + panel.x_label, panel.x_label, "mean raw reward", {s}}));
    files.push_back(panel.file);
  }
  return files;
}

inline std::string train_log_jsonl(const std::vector<StepReport>& log) {
  std::string out;
  for (const auto& r : log) out += nlohmann::json(r).dump() + "\n";
  return out;
}

inline std::string probe_csv(const std::vector<ProbeRow>& rows) {
  std::string out = "step," + csv_header() + "\n";
  for (const auto& r : rows) out += std::to_string(r.step) + "," + to_csv_row(r.report) + "\n";
  return out;
}

/// Training-time curves: per-step loss components and probe metrics.
inline std::vector<std::string> emit_training(const std::vector<StepReport>& log, const std::vector<ProbeRow>& probe,
                                              const std::string& prefix, const fs::path& dir) {
  ensure_dir(dir);
  std::vector<std::string> files{prefix + "_log.jsonl"};
  write_text(dir / files[0], train_log_jsonl(log));
  if (!probe.empty()) {
    files.push_back(prefix + "_probe.csv");
    write_text(dir / files.back(), probe_csv(probe));
    plot::Series reward{"probe reward", {}, {}, {}, true}, diversity{"probe diversity", {}, {}, {}, true};
    for (const auto& p : probe) {
      reward.x.push_back(double(p.step));
      reward.y.push_back(p.report.reward_mean);
      diversity.x.push_back(double(p.step));
      diversity.y.push_back(p.report.embedding_diversity);
    }
    files.push_back(prefix + "_reward_vs_step.svg");
    write_text(dir / files.back(), plot::render_svg({"reward during training", "optimizer step", "mean raw reward", {reward}}));
    files.push_back(prefix + "_diversity_vs_step.svg");
    write_text(dir / files.back(),
               plot::render_svg({"diversity during training", "optimizer step", "embedding diversity", {diversity}}));
  }
  return files;
}

// --- End-to-end runs ------------------------------------------------------------------

template <typename Scalar>
struct RunArtifacts {
  DenoiserParams<Scalar> base;
  DenoiserParams<Scalar> ft;
  RewardSpec reward;
  std::vector<StepReport> pretrain_log;
  std::vector<StepReport> finetune_log;
  std::vector<ProbeRow> probe;
  MetricReport base_only;
  MetricReport ft_only;
  MetricReport combined;
  std::optional<TradeoffCurve> curve;
  std::vector<std::string> files;
};

[[nodiscard]] inline nlohmann::json checkpoint_extra(const ExperimentConfig& cfg, const TrainConfig& tc) {
  return {{"experiment", cfg.name}, {"train_config", tc}};
}

/// Runs one named stage; on failure writes a failure manifest naming it and rethrows.
template <typename F>
auto staged(const Manifest& m, const ExperimentConfig& cfg, const std::string& command, const std::string& stage, F&& f)
    -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    try {
      m.write_failure(cfg, command, stage, e.what());
    } catch (...) {
    }
    throw;
  }
}

/// pretrain -> calibrate reward -> fine-tune -> evaluate (-> sweep). Every
/// artifact lands in `out_dir` together with manifest.json.
template <typename Scalar>
[[nodiscard]] RunArtifacts<Scalar> run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                                                  bool with_sweep = false, const std::string& command = "run") {
  ensure_dir(out_dir);
  Manifest manifest(out_dir);
  auto ctx = staged(manifest, cfg, command, "config", [&] { return make_context<Scalar>(cfg); });
  write_text(out_dir / "config.resolved.json", canonical_text(cfg));
  manifest.add("config.resolved.json");

  RunArtifacts<Scalar> run;
  auto pre = staged(manifest, cfg, command, "pretrain", [&] { return pretrain_stage(ctx); });
  run.base = freeze(std::move(pre.params));
  run.pretrain_log = std::move(pre.log);
  staged(manifest, cfg, command, "pretrain-output", [&] {
    save_checkpoint((out_dir / "base.ckpt").string(), run.base, checkpoint_extra(cfg, cfg.pretrain));
    for (const auto& f : emit_training(run.pretrain_log, {}, "pretrain", out_dir)) manifest.add(f);
    manifest.add("base.ckpt");
  });

  auto reward = staged(manifest, cfg, command, "reward", [&] { return build_reward(ctx, run.base); });
  run.reward = reward.spec();
  write_text(out_dir / "reward.json", nlohmann::json(run.reward).dump(2) + "\n");
  manifest.add("reward.json");

  auto ft = staged(manifest, cfg, command, "finetune", [&] { return finetune_stage(ctx, run.base, reward); });
  run.ft = std::move(ft.train.params);
  run.finetune_log = std::move(ft.train.log);
  run.probe = std::move(ft.probe);
  staged(manifest, cfg, command, "finetune-output", [&] {
    const std::string name = "ft-" + to_string(cfg.finetune.algorithm) + ".ckpt";
    save_checkpoint((out_dir / name).string(), run.ft, checkpoint_extra(cfg, cfg.finetune));
    manifest.add(name);
    for (const auto& f : emit_training(run.finetune_log, run.probe, "finetune", out_dir)) manifest.add(f);
  });

  staged(manifest, cfg, command, "evaluate", [&] {
    const int per_class = cfg.evaluation.samples_per_class;
    const std::uint64_t seed = stage_seed(cfg, "sweep");
    run.base_only = evaluate_mode(ctx, reward, run.base, &run.ft, GenMode::base_only, 0, "base_only", per_class, seed);
    run.ft_only =
        evaluate_mode(ctx, reward, run.base, &run.ft, GenMode::ft_only, ctx.steps(), "ft_only", per_class, seed);
    run.combined = evaluate_mode(ctx, reward, run.base, &run.ft, GenMode::combined, cfg.sampling.switch_point,
                                 to_string(cfg.finetune.algorithm) + "_combined", per_class, seed);
    write_text(out_dir / "metrics.json",
               nlohmann::json{{"base_only", run.base_only}, {"ft_only", run.ft_only}, {"combined", run.combined}}
                       .dump(2) +
                   "\n");
    manifest.add("metrics.json");
  });

  if (with_sweep) {
    run.curve = staged(manifest, cfg, command, "sweep", [&] {
      return sweep_switch_point(ctx, run.base, run.ft, reward, resolved_grid(cfg),
                                to_string(cfg.finetune.algorithm) + "_combined");
    });
    staged(manifest, cfg, command, "sweep-output", [&] {
      for (const auto& f : emit_curve(*run.curve, out_dir)) manifest.add(f);
    });
  }
  manifest.write_ok(cfg, command);
  run.files = {"manifest.json"};
  return run;
}

}  // namespace rlab
