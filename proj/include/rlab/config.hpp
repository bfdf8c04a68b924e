#pragma once

#include "rlab/core.hpp"
#include "rlab/data.hpp"
#include "rlab/denoiser.hpp"
#include "rlab/extractors.hpp"
#include "rlab/rewards.hpp"
#include "rlab/samplers.hpp"
#include "rlab/schedule.hpp"
#include "rlab/trainers.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rlab {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kConfigFormat = "rlab-experiment";

/// Classifier-free guidance scales of the two reference text-to-image models.
inline constexpr double kSd15GuidanceScale = 7.5;
inline constexpr double kSdxlGuidanceScale = 5.0;

/// Switch-point grid of the reference 40-step frontier, in fine-tuned steps.
inline const std::vector<int> kReferenceGrid{37, 35, 33, 30, 25, 20, 15, 8, 5};
inline constexpr int kReferenceSteps = 40;

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::linear;
  int train_steps = 100;
  double beta_min = 1e-3;
  double beta_max = 0.2;
  int inference_steps = 40;

  bool operator==(const ScheduleConfig&) const = default;
};

/// How the reward is instantiated for a task. `anchors` is either explicit
/// per-class points or one of the generators "class_centers" (points2d) or
/// "class_means" (mean training sample per class).
struct RewardConfig {
  RewardKind kind = RewardKind::region_target;
  nlohmann::json anchors = "class_centers";
  ExtractorSpec extractor{};
  bool calibrate = true;
  int calibration_samples = 1024;
  double norm_lo = 0.0;
  double norm_hi = 1.0;
  double scale = 1e-3;
  int classifier_hidden = 32;
  int classifier_steps = 400;

  bool operator==(const RewardConfig&) const = default;
};

struct SamplingConfig {
  SamplerKind sampler = SamplerKind::deterministic;
  double eta = 0.0;
  double guidance_scale_base = kSd15GuidanceScale;
  double guidance_scale_ft = 1.0;
  int switch_point = 30;
  double interp_lambda = 1.0;

  bool operator==(const SamplingConfig&) const = default;
};

struct EvalConfig {
  int samples_per_class = 256;
  int probe_samples = 512;
  ExtractorSpec distribution_extractor{};
  ExtractorSpec diversity_extractor{};

  bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string precision = "float32";
  DataParams data{};
  ScheduleConfig schedule{};
  Arch arch{};
  RewardConfig reward{};
  TrainConfig pretrain{};
  TrainConfig finetune{};
  SamplingConfig sampling{};
  EvalConfig evaluation{};
  std::vector<int> sweep_grid;  // empty: reference grid scaled to inference_steps
  std::string output_dir = "runs/experiment";

  void validate() const;
};

// --- JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ScheduleConfig& s) {
  j = {{"kind", to_string(s.kind)},
       {"train_steps", s.train_steps},
       {"beta_min", s.beta_min},
       {"beta_max", s.beta_max},
       {"inference_steps", s.inference_steps}};
}
inline void from_json(const nlohmann::json& j, ScheduleConfig& s) {
  s = ScheduleConfig{};
  s.kind = schedule_kind_from(j.value("kind", std::string("linear")));
  s.train_steps = j.value("train_steps", s.train_steps);
  s.beta_min = j.value("beta_min", s.beta_min);
  s.beta_max = j.value("beta_max", s.beta_max);
  s.inference_steps = j.value("inference_steps", s.inference_steps);
}

inline void to_json(nlohmann::json& j, const RewardConfig& r) {
  j = {{"kind", to_string(r.kind)},
       {"anchors", r.anchors},
       {"extractor", r.extractor},
       {"calibrate", r.calibrate},
       {"calibration_samples", r.calibration_samples},
       {"norm_lo", r.norm_lo},
       {"norm_hi", r.norm_hi},
       {"scale", r.scale},
       {"classifier_hidden", r.classifier_hidden},
       {"classifier_steps", r.classifier_steps}};
}
inline void from_json(const nlohmann::json& j, RewardConfig& r) {
  r = RewardConfig{};
  r.kind = reward_kind_from(j.at("kind").get<std::string>());
  r.anchors = j.value("anchors", r.anchors);
  if (j.contains("extractor")) r.extractor = j.at("extractor").get<ExtractorSpec>();
  r.calibrate = j.value("calibrate", r.calibrate);
  r.calibration_samples = j.value("calibration_samples", r.calibration_samples);
  r.norm_lo = j.value("norm_lo", r.norm_lo);
  r.norm_hi = j.value("norm_hi", r.norm_hi);
  r.scale = j.value("scale", r.scale);
  r.classifier_hidden = j.value("classifier_hidden", r.classifier_hidden);
  r.classifier_steps = j.value("classifier_steps", r.classifier_steps);
}

inline void to_json(nlohmann::json& j, const SamplingConfig& s) {
  j = {{"sampler", to_string(s.sampler)},
       {"eta", s.eta},
       {"guidance_scale_base", s.guidance_scale_base},
       {"guidance_scale_ft", s.guidance_scale_ft},
       {"switch_point", s.switch_point},
       {"interp_lambda", s.interp_lambda}};
}
inline void from_json(const nlohmann::json& j, SamplingConfig& s) {
  s = SamplingConfig{};
  s.sampler = sampler_kind_from(j.value("sampler", std::string("deterministic")));
  s.eta = j.value("eta", s.eta);
  s.guidance_scale_base = j.value("guidance_scale_base", s.guidance_scale_base);
  s.guidance_scale_ft = j.value("guidance_scale_ft", s.guidance_scale_ft);
  s.switch_point = j.value("switch_point", s.switch_point);
  s.interp_lambda = j.value("interp_lambda", s.interp_lambda);
}

inline void to_json(nlohmann::json& j, const EvalConfig& e) {
  j = {{"samples_per_class", e.samples_per_class},
       {"probe_samples", e.probe_samples},
       {"distribution_extractor", e.distribution_extractor},
       {"diversity_extractor", e.diversity_extractor}};
}
inline void from_json(const nlohmann::json& j, EvalConfig& e) {
  e = EvalConfig{};
  e.samples_per_class = j.value("samples_per_class", e.samples_per_class);
  e.probe_samples = j.value("probe_samples", e.probe_samples);
  if (j.contains("distribution_extractor"))
    e.distribution_extractor = j.at("distribution_extractor").get<ExtractorSpec>();
  if (j.contains("diversity_extractor")) e.diversity_extractor = j.at("diversity_extractor").get<ExtractorSpec>();
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"format", kConfigFormat},
       {"version", kConfigVersion},
       {"name", c.name},
       {"seed", c.seed},
       {"precision", c.precision},
       {"data", c.data},
       {"schedule", c.schedule},
       {"arch", c.arch},
       {"reward", c.reward},
       {"pretrain", c.pretrain},
       {"finetune", c.finetune},
       {"sampling", c.sampling},
       {"evaluation", c.evaluation},
       {"sweep_grid", c.sweep_grid},
       {"output_dir", c.output_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.value("format", std::string()) != kConfigFormat) throw ConfigError("config: missing or wrong 'format'");
  const int version = j.value("version", 0);
  if (version != kConfigVersion) throw ConfigError("config: unsupported version " + std::to_string(version));
  c = ExperimentConfig{};
  c.name = j.value("name", c.name);
  c.seed = j.value("seed", c.seed);
  c.precision = j.value("precision", c.precision);
  c.data = j.at("data").get<DataParams>();
  c.schedule = j.value("schedule", nlohmann::json::object()).get<ScheduleConfig>();
  c.arch = j.at("arch").get<Arch>();
  c.reward = j.at("reward").get<RewardConfig>();
  c.pretrain = j.at("pretrain").get<TrainConfig>();
  c.finetune = j.at("finetune").get<TrainConfig>();
  c.sampling = j.value("sampling", nlohmann::json::object()).get<SamplingConfig>();
  c.evaluation = j.value("evaluation", nlohmann::json::object()).get<EvalConfig>();
  c.sweep_grid = j.value("sweep_grid", std::vector<int>{});
  c.output_dir = j.value("output_dir", c.output_dir);
}

/// Parses and validates; every nlohmann error becomes a ConfigError.
[[nodiscard]] inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_config(j);
}

/// Canonical text form: sorted keys, two-space indent, trailing newline.
[[nodiscard]] inline std::string canonical_text(const ExperimentConfig& c) {
  return nlohmann::json(c).dump(2) + "\n";
}

// --- Derived quantities ----------------------------------------------------------

/// Reference grid mapped onto `steps` inference steps, deduplicated, descending.
[[nodiscard]] inline std::vector<int> scaled_reference_grid(int steps) {
  std::set<int, std::greater<>> out;
  for (int g : kReferenceGrid)
    out.insert(std::clamp(static_cast<int>(std::lround(double(g) * steps / kReferenceSteps)), 0, steps));
  return {out.begin(), out.end()};
}

[[nodiscard]] inline std::vector<int> resolved_grid(const ExperimentConfig& c) {
  return c.sweep_grid.empty() ? scaled_reference_grid(c.schedule.inference_steps) : c.sweep_grid;
}

/// Independent seed per pipeline stage.
[[nodiscard]] inline std::uint64_t stage_seed(const ExperimentConfig& c, std::string_view stage) {
  return stream_id(stage, c.seed);
}

[[nodiscard]] inline Schedules make_schedules(const ScheduleConfig& s) {
  NoiseSchedule train = build_schedule(s.kind, s.train_steps, s.beta_min, s.beta_max);
  NoiseSchedule inference = respace(train, s.inference_steps);
  return {std::move(train), std::move(inference)};
}

[[nodiscard]] inline TrajectoryConfig trajectory_config(const ExperimentConfig& c, int switch_point,
                                                        std::uint64_t rng_seed) {
  TrajectoryConfig t;
  t.steps = c.schedule.inference_steps;
  t.kind = c.sampling.sampler;
  t.eta = c.sampling.eta;
  t.guidance_scale_base = c.sampling.guidance_scale_base;
  t.guidance_scale_ft = c.sampling.guidance_scale_ft;
  t.switch_point = switch_point;
  t.rng_seed = rng_seed;
  return t;
}

inline void ExperimentConfig::validate() const {
  if (precision != "float32" && precision != "float64") throw ConfigError("precision must be float32 or float64");
  data.validate();
  arch.validate();
  if (arch.input_dim != data.dim()) throw ConfigError("arch.input_dim does not match the task dimension");
  if (arch.class_count != data.classes) throw ConfigError("arch.class_count does not match data.classes");
  if (data.task == Task::tinyimages && arch.kind == ArchKind::conv && arch.image_side != data.image_side)
    throw ConfigError("arch.image_side does not match data.image_side");
  if (schedule.train_steps < 2) throw ConfigError("schedule.train_steps must be >= 2");
  if (schedule.inference_steps < 1 || schedule.inference_steps > schedule.train_steps)
    throw ConfigError("schedule.inference_steps must lie in [1, train_steps]");
  if (pretrain.algorithm != Algorithm::pretrain) throw ConfigError("pretrain.algorithm must be 'pretrain'");
  if (finetune.algorithm == Algorithm::pretrain) throw ConfigError("finetune.algorithm must be refl or imagerefl");
  pretrain.validate(schedule.inference_steps);
  finetune.validate(schedule.inference_steps);
  if (sampling.switch_point < 0 || sampling.switch_point > schedule.inference_steps)
    throw ConfigError("sampling.switch_point must lie in [0, inference_steps]");
  if (!(sampling.guidance_scale_base >= 0.0 && sampling.guidance_scale_ft >= 0.0))
    throw ConfigError("guidance scales must be >= 0");
  if (!(sampling.interp_lambda >= 0.0 && sampling.interp_lambda <= 1.0))
    throw ConfigError("sampling.interp_lambda must lie in [0, 1]");
  if (evaluation.samples_per_class < 2) throw ConfigError("evaluation.samples_per_class must be >= 2");
  if (evaluation.probe_samples < 2 * data.classes) throw ConfigError("evaluation.probe_samples too small");
  for (const auto* e : {&evaluation.distribution_extractor, &evaluation.diversity_extractor}) {
    e->validate();
    if (e->input_dim != data.dim()) throw ConfigError("extractor input_dim does not match the task dimension");
  }
  for (int g : sweep_grid)
    if (g < 0 || g > schedule.inference_steps) throw ConfigError("sweep grid entry outside [0, inference_steps]");
  if (reward.calibrate && reward.calibration_samples < 100) throw ConfigError("reward.calibration_samples must be >= 100");
  if (!reward.calibrate && !(reward.norm_lo < reward.norm_hi)) throw ConfigError("reward needs norm_lo < norm_hi");
  if (!(reward.scale > 0.0)) throw ConfigError("reward.scale must be positive");
  if (reward.anchors.is_string()) {
    const auto a = reward.anchors.get<std::string>();
    if (a != "class_centers" && a != "class_means") throw ConfigError("unknown anchor generator '" + a + "'");
    if (a == "class_centers" && data.task != Task::points2d) throw ConfigError("class_centers anchors need points2d");
  } else if (!reward.anchors.is_array()) {
    throw ConfigError("reward.anchors must be a generator name or a list of points");
  }
  if (reward.kind == RewardKind::prototype_similarity) {
    reward.extractor.validate();
    if (reward.extractor.input_dim != data.dim()) throw ConfigError("reward extractor input_dim mismatch");
  }
}

// --- Templates -------------------------------------------------------------------

[[nodiscard]] inline ExtractorSpec rff_extractor(int input_dim, int out_dim, double bandwidth, std::uint64_t seed) {
  ExtractorSpec e;
  e.kind = "random_features";
  e.input_dim = input_dim;
  e.out_dim = out_dim;
  e.bandwidth = bandwidth;
  e.seed = seed;
  return e;
}

/// Desk-scale 2-D task: class-centred region reward, base sampled without
/// guidance amplification (guidance > 1 distorts this toy base model).
[[nodiscard]] inline ExperimentConfig points2d_template(Algorithm algorithm) {
  ExperimentConfig c;
  c.name = "points2d-" + to_string(algorithm);
  c.seed = 1;
  c.data = DataParams{};
  c.arch = Arch{};
  c.pretrain.algorithm = Algorithm::pretrain;
  c.pretrain.optimizer.lr = 1e-3;
  c.pretrain.optimizer.weight_decay = 0.0;
  c.pretrain.batch_size = 256;
  c.pretrain.max_steps = 10000;
  c.pretrain.eval_every = 0;
  c.finetune.algorithm = algorithm;
  c.finetune.batch_size = 64;
  c.finetune.max_steps = 500;
  c.reward.kind = RewardKind::region_target;
  c.reward.anchors = "class_centers";
  c.sampling.guidance_scale_base = 1.0;
  c.sampling.guidance_scale_ft = 1.0;
  c.sampling.switch_point = algorithm == Algorithm::imagerefl ? 10 : 30;
  c.evaluation.distribution_extractor = ExtractorSpec{};
  c.evaluation.diversity_extractor = rff_extractor(2, 256, 0.5, 7);
  c.output_dir = "runs/" + c.name;
  return c;
}

/// 8x8 procedural images with a small convolutional denoiser.
[[nodiscard]] inline ExperimentConfig tinyimages_template(Algorithm algorithm) {
  ExperimentConfig c;
  c.name = "tinyimages-" + to_string(algorithm);
  c.seed = 1;
  c.data.task = Task::tinyimages;
  c.data.image_side = 8;
  c.data.train_count = 4096;
  c.data.heldout_count = 1024;
  c.arch.kind = ArchKind::conv;
  c.arch.input_dim = 64;
  c.arch.image_side = 8;
  c.arch.hidden = {16, 16};
  c.pretrain.algorithm = Algorithm::pretrain;
  c.pretrain.optimizer.lr = 1e-3;
  c.pretrain.optimizer.weight_decay = 0.0;
  c.pretrain.batch_size = 32;
  c.pretrain.max_steps = 3000;
  c.pretrain.eval_every = 0;
  c.finetune.algorithm = algorithm;
  c.finetune.batch_size = 32;
  c.finetune.max_steps = 300;
  c.reward.kind = RewardKind::brightness;
  c.reward.anchors = "class_means";
  c.sampling.guidance_scale_base = 1.0;
  c.sampling.switch_point = algorithm == Algorithm::imagerefl ? 10 : 30;
  c.evaluation.samples_per_class = 64;
  c.evaluation.probe_samples = 128;
  ExtractorSpec conv;
  conv.kind = "random_conv";
  conv.input_dim = 64;
  conv.image_side = 8;
  conv.out_dim = 4;
  conv.seed = 11;
  c.evaluation.distribution_extractor = conv;
  c.evaluation.diversity_extractor = conv;
  c.output_dir = "runs/" + c.name;
  return c;
}

/// Reference-model analogues: guidance of the base model and the step split
/// (fine-tuned steps T') used at inference. ReFL runs 10 base then 30
/// fine-tuned steps; ImageReFL runs 30 base then 10 fine-tuned steps.
[[nodiscard]] inline ExperimentConfig reference_template(const std::string& model, Algorithm algorithm) {
  ExperimentConfig c = points2d_template(algorithm);
  if (model == "sd15") {
    c.sampling.guidance_scale_base = kSd15GuidanceScale;
  } else if (model == "sdxl") {
    c.sampling.guidance_scale_base = kSdxlGuidanceScale;
  } else {
    throw ConfigError("unknown reference model '" + model + "'");
  }
  c.sampling.guidance_scale_ft = 1.0;
  c.sampling.switch_point = algorithm == Algorithm::imagerefl ? 10 : 30;
  c.name = model + "-analog-" + to_string(algorithm);
  c.output_dir = "runs/" + c.name;
  return c;
}

[[nodiscard]] inline std::vector<std::string> template_names() {
  return {"points2d-refl",        "points2d-imagerefl",        "tinyimages-refl",        "tinyimages-imagerefl",
          "sd15-analog-refl",     "sd15-analog-imagerefl",     "sdxl-analog-refl",       "sdxl-analog-imagerefl"};
}

[[nodiscard]] inline ExperimentConfig template_config(const std::string& name) {
  const auto dash = name.rfind('-');
  if (dash == std::string::npos) throw ConfigError("unknown template '" + name + "'");
  const Algorithm alg = algorithm_from(name.substr(dash + 1));
  const std::string stem = name.substr(0, dash);
  if (stem == "points2d") return points2d_template(alg);
  if (stem == "tinyimages") return tinyimages_template(alg);
  if (stem == "sd15-analog") return reference_template("sd15", alg);
  if (stem == "sdxl-analog") return reference_template("sdxl", alg);
  throw ConfigError("unknown template '" + name + "'");
}

}  // namespace rlab
