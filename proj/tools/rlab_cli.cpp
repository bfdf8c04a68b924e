// Command-line front end for the reward fine-tuning laboratory.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O failure.

#include "rlab/rlab.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace rlab;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string device = "cpu";

  std::string algorithm;
  std::string base;
  std::string ft;
  std::string checkpoint;
  std::string input;
  std::string template_name;
  int switch_point = -1;
  int per_class = 0;
};

ExperimentConfig resolve_config(const Options& o) {
  if (o.device != "cpu") throw ConfigError("unsupported device '" + o.device + "' (only cpu)");
  if (o.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.algorithm.empty()) {
    cfg.finetune.algorithm = algorithm_from(o.algorithm);
    if (cfg.finetune.algorithm == Algorithm::pretrain) throw ConfigError("--algorithm must be refl or imagerefl");
  }
  cfg.validate();
  return cfg;
}

template <typename Scalar>
DenoiserParams<Scalar> load_params(const std::string& path, const ExperimentConfig& cfg) {
  if (path.empty() || !fs::exists(path)) throw IoError("missing checkpoint '" + path + "'");
  return load_checkpoint<Scalar>(path, cfg.arch);
}

std::string default_path(const ExperimentConfig& cfg, const std::string& given, const std::string& name) {
  return given.empty() ? (fs::path(cfg.output_dir) / name).string() : given;
}

template <typename Scalar>
int cmd_pretrain(const ExperimentConfig& cfg) {
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  Manifest m(out);
  auto ctx = staged(m, cfg, "pretrain", "config", [&] { return make_context<Scalar>(cfg); });
  write_text(out / "config.resolved.json", canonical_text(cfg));
  m.add("config.resolved.json");
  auto result = staged(m, cfg, "pretrain", "pretrain", [&] { return pretrain_stage(ctx); });
  staged(m, cfg, "pretrain", "output", [&] {
    save_checkpoint((out / "base.ckpt").string(), freeze(result.params), checkpoint_extra(cfg, cfg.pretrain));
    m.add("base.ckpt");
    for (const auto& f : emit_training(result.log, {}, "pretrain", out)) m.add(f);
  });
  m.write_ok(cfg, "pretrain");
  std::printf("pretrained %zu steps -> %s\n", result.log.size(), (out / "base.ckpt").c_str());
  return 0;
}

template <typename Scalar>
int cmd_finetune(const ExperimentConfig& cfg, const Options& o) {
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  Manifest m(out);
  const std::string cmd = "finetune";
  auto ctx = staged(m, cfg, cmd, "config", [&] { return make_context<Scalar>(cfg); });
  write_text(out / "config.resolved.json", canonical_text(cfg));
  m.add("config.resolved.json");
  const auto base = staged(m, cfg, cmd, "load", [&] {
    return freeze(load_params<Scalar>(default_path(cfg, o.base, "base.ckpt"), cfg));
  });
  const auto reward = staged(m, cfg, cmd, "reward", [&] { return build_reward(ctx, base); });
  write_text(out / "reward.json", nlohmann::json(reward.spec()).dump(2) + "\n");
  m.add("reward.json");
  auto result = staged(m, cfg, cmd, "finetune", [&] { return finetune_stage(ctx, base, reward); });
  const std::string name = "ft-" + to_string(cfg.finetune.algorithm);
  staged(m, cfg, cmd, "output", [&] {
    save_checkpoint((out / (name + ".ckpt")).string(), result.train.params, checkpoint_extra(cfg, cfg.finetune));
    m.add(name + ".ckpt");
    for (const auto& f : emit_training(result.train.log, result.probe, name, out)) m.add(f);
  });
  m.write_ok(cfg, cmd);
  std::printf("fine-tuned %zu steps -> %s\n", result.train.log.size(), (out / (name + ".ckpt")).c_str());
  return 0;
}

template <typename Scalar>
int cmd_sample(const ExperimentConfig& cfg, const Options& o) {
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  auto ctx = make_context<Scalar>(cfg);
  const auto base = load_params<Scalar>(o.checkpoint.empty() ? default_path(cfg, o.base, "base.ckpt") : o.checkpoint, cfg);
  std::optional<DenoiserParams<Scalar>> ft;
  if (!o.ft.empty()) ft = load_params<Scalar>(o.ft, cfg);
  const int per_class = o.per_class > 0 ? o.per_class : cfg.evaluation.samples_per_class;
  const auto cls = class_major_conditions(ctx.classes(), per_class);
  const int tp = o.switch_point >= 0 ? o.switch_point : cfg.sampling.switch_point;
  const Matrix<Scalar> x = ft ? generate(ctx, base, &*ft, GenMode::combined, tp, cls, stage_seed(cfg, "sample"))
                              : generate(ctx, base, nullptr, GenMode::base_only, 0, cls, stage_seed(cfg, "sample"));
  std::string csv;
  for (Index i = 0; i < x.rows(); ++i) csv += "x" + std::to_string(i) + ",";
  csv += "class\n";
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) csv += format_double(static_cast<double>(x(i, j))) + ",";
    csv += std::to_string(cls[static_cast<std::size_t>(j)]) + "\n";
  }
  write_text(out / "samples.csv", csv);
  std::printf("wrote %td samples -> %s\n", x.cols(), (out / "samples.csv").c_str());
  return 0;
}

template <typename Scalar>
int cmd_sweep(const ExperimentConfig& cfg, const Options& o) {
  const fs::path out = cfg.output_dir;
  if (o.base.empty() != o.ft.empty()) throw ConfigError("--base and --ft must be given together");
  if (o.base.empty()) {
    auto run = run_experiment<Scalar>(cfg, out, true, "sweep");
    std::printf("sweep: %zu grid rows + 2 endpoints -> %s\n", run.curve->rows.size(), (out / "sweep.csv").c_str());
    return 0;
  }
  ensure_dir(out);
  Manifest m(out);
  auto ctx = staged(m, cfg, "sweep", "config", [&] { return make_context<Scalar>(cfg); });
  write_text(out / "config.resolved.json", canonical_text(cfg));
  m.add("config.resolved.json");
  const auto base = staged(m, cfg, "sweep", "load", [&] { return freeze(load_params<Scalar>(o.base, cfg)); });
  const auto ft = staged(m, cfg, "sweep", "load", [&] { return load_params<Scalar>(o.ft, cfg); });
  const auto reward = staged(m, cfg, "sweep", "reward", [&] { return build_reward(ctx, base); });
  const auto curve = staged(m, cfg, "sweep", "sweep", [&] {
    return sweep_switch_point(ctx, base, ft, reward, resolved_grid(cfg), to_string(cfg.finetune.algorithm) + "_combined");
  });
  staged(m, cfg, "sweep", "output", [&] {
    for (const auto& f : emit_curve(curve, out)) m.add(f);
  });
  m.write_ok(cfg, "sweep");
  std::printf("sweep: %zu grid rows + 2 endpoints -> %s\n", curve.rows.size(), (out / "sweep.csv").c_str());
  return 0;
}

template <typename Scalar>
int cmd_evaluate(const ExperimentConfig& cfg, const Options& o) {
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  auto ctx = make_context<Scalar>(cfg);
  const auto base = freeze(load_params<Scalar>(default_path(cfg, o.base, "base.ckpt"), cfg));
  const auto ft = load_params<Scalar>(default_path(cfg, o.ft, "ft-" + to_string(cfg.finetune.algorithm) + ".ckpt"), cfg);
  const auto reward = build_reward(ctx, base);
  const int per_class = cfg.evaluation.samples_per_class;
  const std::uint64_t seed = stage_seed(cfg, "sweep");
  const int tp = o.switch_point >= 0 ? o.switch_point : cfg.sampling.switch_point;
  const nlohmann::json doc = {
      {"base_only", evaluate_mode(ctx, reward, base, &ft, GenMode::base_only, 0, "base_only", per_class, seed)},
      {"ft_only", evaluate_mode(ctx, reward, base, &ft, GenMode::ft_only, ctx.steps(), "ft_only", per_class, seed)},
      {"combined", evaluate_mode(ctx, reward, base, &ft, GenMode::combined, tp,
                                 to_string(cfg.finetune.algorithm) + "_combined", per_class, seed)},
      {"interp_guidance",
       evaluate_mode(ctx, reward, base, &ft, GenMode::interp_guidance, ctx.steps(), "interp_guidance", per_class, seed)}};
  write_text(out / "evaluation.json", doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_plot(const Options& o) {
  if (o.input.empty()) throw ConfigError("--input is required");
  TradeoffCurve curve;
  try {
    curve = nlohmann::json::parse(read_text(o.input)).get<TradeoffCurve>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("plot input: ") + e.what());
  }
  const fs::path out = o.out.empty() ? fs::path(o.input).parent_path() : fs::path(o.out);
  for (const auto& f : emit_curve(curve, out)) std::printf("%s\n", (out / f).c_str());
  return 0;
}

template <typename F>
int with_precision(const ExperimentConfig& cfg, F&& f) {
  return cfg.precision == "float64" ? f(double{}) : f(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward fine-tuning laboratory for toy diffusion models"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "experiment config (JSON)");
  app.add_option("--seed", o.seed, "override the master seed");
  app.add_option("--out", o.out, "override the output directory");
  app.add_option("--device", o.device, "compute device (cpu)");

  auto* pretrain = app.add_subcommand("pretrain", "train the base denoiser");
  auto* finetune = app.add_subcommand("finetune", "reward fine-tune a copy of the base denoiser");
  finetune->add_option("--algorithm", o.algorithm, "refl | imagerefl")->check(CLI::IsMember({"refl", "imagerefl"}));
  finetune->add_option("--base", o.base, "base checkpoint (default <out>/base.ckpt)");
  auto* sample = app.add_subcommand("sample", "draw samples (base-only, or combined with --ft)");
  sample->add_option("--checkpoint", o.checkpoint, "base checkpoint");
  sample->add_option("--ft", o.ft, "fine-tuned checkpoint");
  sample->add_option("--switch-point", o.switch_point, "fine-tuned steps T'");
  sample->add_option("--per-class", o.per_class, "samples per class");
  auto* sweep = app.add_subcommand("sweep", "T' sweep; runs the full pipeline unless --base/--ft are given");
  sweep->add_option("--base", o.base, "base checkpoint");
  sweep->add_option("--ft", o.ft, "fine-tuned checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "metric reports for base, ft, combined and interpolated guidance");
  evaluate->add_option("--base", o.base, "base checkpoint (default <out>/base.ckpt)");
  evaluate->add_option("--ft", o.ft, "fine-tuned checkpoint (default <out>/ft-<algorithm>.ckpt)");
  evaluate->add_option("--switch-point", o.switch_point, "fine-tuned steps T'");
  auto* plot = app.add_subcommand("plot", "re-render trade-off panels from sweep.json");
  plot->add_option("--input", o.input, "sweep.json")->required();
  auto* tmpl = app.add_subcommand("template", "print a built-in experiment config");
  tmpl->add_option("name", o.template_name, "template name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (tmpl->parsed()) {
      std::cout << canonical_text(template_config(o.template_name));
      return 0;
    }
    if (plot->parsed()) return cmd_plot(o);
    const ExperimentConfig cfg = resolve_config(o);
    return with_precision(cfg, [&](auto tag) -> int {
      using Scalar = decltype(tag);
      if (pretrain->parsed()) return cmd_pretrain<Scalar>(cfg);
      if (finetune->parsed()) return cmd_finetune<Scalar>(cfg, o);
      if (sample->parsed()) return cmd_sample<Scalar>(cfg, o);
      if (sweep->parsed()) return cmd_sweep<Scalar>(cfg, o);
      if (evaluate->parsed()) return cmd_evaluate<Scalar>(cfg, o);
      throw ConfigError("no subcommand");
    });
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "state error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
