#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace rlab;
namespace fs = std::filesystem;

namespace {

/// points2d pipeline shrunk to run in about a second.
ExperimentConfig tiny_config(Algorithm alg) {
  auto c = points2d_template(alg);
  c.precision = "float64";
  c.data.train_count = 512;
  c.data.heldout_count = 256;
  c.schedule.train_steps = 20;
  c.schedule.inference_steps = 10;
  c.arch.hidden = {16, 16};
  c.arch.time_embed = 8;
  c.arch.cond_embed = 4;
  c.pretrain.max_steps = 30;
  c.pretrain.batch_size = 64;
  c.finetune.max_steps = 8;
  c.finetune.batch_size = 16;
  c.finetune.eval_every = 4;
  c.finetune.tf_min = 1;
  c.finetune.tf_max = 3;
  c.finetune.tp_min = 4;
  c.finetune.tp_max = 5;
  c.sampling.switch_point = 5;
  c.reward.calibration_samples = 128;
  c.evaluation.samples_per_class = 16;
  c.evaluation.probe_samples = 32;
  c.evaluation.diversity_extractor.out_dim = 32;
  return c;
}

bool same_metrics(const MetricReport& a, const MetricReport& b) {
  return a.reward_mean == b.reward_mean && a.frechet == b.frechet && a.cov_distance == b.cov_distance &&
         a.log_cov_distance == b.log_cov_distance && a.embedding_diversity == b.embedding_diversity &&
         a.alignment == b.alignment;
}

}  // namespace

TEST(Config, CanonicalTextRoundTripIsIdempotent) {
  for (const auto& name : template_names()) {
    const auto cfg = template_config(name);
    const std::string text = canonical_text(cfg);
    const auto again = parse_config(nlohmann::json::parse(text));
    EXPECT_EQ(canonical_text(again), text) << name;
    EXPECT_NO_THROW(again.validate()) << name;
  }
}

TEST(Config, ShippedConfigsMatchBuiltInTemplates) {
  for (const auto& name : template_names()) {
    const fs::path path = fs::path(RLAB_SOURCE_DIR) / "configs" / (name + ".json");
    ASSERT_TRUE(fs::exists(path)) << path;
    EXPECT_EQ(read_text(path), canonical_text(template_config(name))) << name;
  }
}

TEST(Config, ReferenceGuidanceAndSwitchPoints) {
  EXPECT_EQ(kSd15GuidanceScale, 7.5);
  EXPECT_EQ(kSdxlGuidanceScale, 5.0);
  EXPECT_EQ(template_config("sd15-analog-refl").sampling.guidance_scale_base, 7.5);
  EXPECT_EQ(template_config("sdxl-analog-imagerefl").sampling.guidance_scale_base, 5.0);
  for (const auto& name : template_names()) {
    const auto c = template_config(name);
    EXPECT_EQ(c.sampling.switch_point, c.finetune.algorithm == Algorithm::imagerefl ? 10 : 30) << name;
    EXPECT_EQ(c.schedule.inference_steps, 40) << name;
    EXPECT_EQ(c.sampling.guidance_scale_ft, 1.0) << name;
  }
  EXPECT_THROW((void)template_config("sd3-analog-refl"), ConfigError);
  EXPECT_THROW((void)template_config("points2d-dpo"), ConfigError);
}

TEST(Config, ReferenceGridScaling) {
  EXPECT_EQ(scaled_reference_grid(40), (std::vector<int>{37, 35, 33, 30, 25, 20, 15, 8, 5}));
  EXPECT_EQ(scaled_reference_grid(10), (std::vector<int>{9, 8, 6, 5, 4, 2, 1}));
  auto c = tiny_config(Algorithm::refl);
  EXPECT_EQ(resolved_grid(c), scaled_reference_grid(10));
  c.sweep_grid = {3, 1};
  EXPECT_EQ(resolved_grid(c), (std::vector<int>{3, 1}));
}

TEST(Config, InvalidConfigsAreRejected) {
  auto j = nlohmann::json(tiny_config(Algorithm::refl));
  auto bad = j;
  bad["version"] = 2;
  EXPECT_THROW((void)parse_config(bad), ConfigError);
  bad = j;
  bad.erase("arch");
  EXPECT_THROW((void)parse_config(bad), ConfigError);
  bad = j;
  bad["arch"]["input_dim"] = 3;
  EXPECT_THROW((void)parse_config(bad), ConfigError);
  bad = j;
  bad["sampling"]["switch_point"] = 11;
  EXPECT_THROW((void)parse_config(bad), ConfigError);
  bad = j;
  bad["precision"] = "bfloat16";
  EXPECT_THROW((void)parse_config(bad), ConfigError);
  bad = j;
  bad["reward"]["anchors"] = "nearest";
  EXPECT_THROW((void)parse_config(bad), ConfigError);
  EXPECT_THROW((void)load_config("/nonexistent/config.json"), IoError);
}

TEST(Config, StageSeedsAreDistinct) {
  const auto c = tiny_config(Algorithm::refl);
  std::set<std::uint64_t> seeds;
  for (const char* s : {"data", "init", "pretrain", "finetune", "calibration", "probe", "sweep"}) seeds.insert(stage_seed(c, s));
  EXPECT_EQ(seeds.size(), 7u);
}

TEST(Harness, PipelineEmitsCompleteReproducibleArtifacts) {
  const auto cfg = tiny_config(Algorithm::imagerefl);
  const auto dir_a = rlab::testing::scratch_dir("pipeline-a"), dir_b = rlab::testing::scratch_dir("pipeline-b");
  const auto a = run_experiment<double>(cfg, dir_a, true);
  const auto b = run_experiment<double>(cfg, dir_b, true);
  ASSERT_TRUE(a.curve);
  const auto grid = resolved_grid(cfg);

  const std::string csv = read_text(dir_a / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(grid.size()) + 3);
  for (const char* f : {"sweep.csv", "sweep.json", "metrics.json", "base.ckpt", "ft-imagerefl.ckpt", "reward.json",
                        "config.resolved.json", "finetune_log.jsonl", "finetune_probe.csv", "pretrain_log.jsonl",
                        "tradeoff_diversity.svg", "tradeoff_frechet.svg", "tradeoff_cov.svg", "tradeoff_logcov.svg",
                        "finetune_reward_vs_step.svg", "finetune_diversity_vs_step.svg"}) {
    ASSERT_TRUE(fs::exists(dir_a / f)) << f;
    EXPECT_GT(fs::file_size(dir_a / f), 0u) << f;
    EXPECT_EQ(read_text(dir_a / f), read_text(dir_b / f)) << f;
  }
  const auto svg = read_text(dir_a / "tradeoff_diversity.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);

  const auto manifest = nlohmann::json::parse(read_text(dir_a / "manifest.json"));
  EXPECT_EQ(manifest.at("status"), "ok");
  for (const auto& f : manifest.at("files")) EXPECT_EQ(f.at("fnv1a64"), file_hash(dir_a / f.at("path").get<std::string>()));

  // Re-emitting the parsed curve reproduces every file byte for byte.
  const auto dir_c = rlab::testing::scratch_dir("pipeline-c");
  const auto curve = nlohmann::json::parse(read_text(dir_a / "sweep.json")).get<TradeoffCurve>();
  (void)emit_curve(curve, dir_c);
  for (const char* f : {"sweep.csv", "sweep.json", "tradeoff_diversity.svg", "tradeoff_logcov.svg"})
    EXPECT_EQ(read_text(dir_c / f), read_text(dir_a / f)) << f;

  EXPECT_EQ(a.finetune_log.size(), 8u);
  EXPECT_EQ(a.probe.size(), 3u);
  EXPECT_EQ(a.probe.front().step, 0);
  EXPECT_LT(a.reward.norm_lo, a.reward.norm_hi);
  EXPECT_TRUE(a.base.frozen);
}

TEST(Harness, SweepEndpointsMatchSingleModelRuns) {
  const auto cfg = tiny_config(Algorithm::refl);
  const auto ctx = make_context<double>(cfg);
  const auto base = freeze(pretrain_stage(ctx).params);
  const auto reward = build_reward(ctx, base);
  auto ft = clone_params(base, "ft");
  ft.weights += 0.05 * normal_matrix<double>(ft.size(), 1, 3, "perturb").col(0);
  const auto curve = sweep_switch_point(ctx, base, ft, reward, {0, ctx.steps(), 4, 4}, "refl_combined");
  ASSERT_EQ(curve.rows.size(), 3u);
  EXPECT_EQ(curve.rows.front().switch_point, 0);
  EXPECT_EQ(curve.rows.back().switch_point, ctx.steps());
  EXPECT_TRUE(same_metrics(curve.rows.front(), curve.base_only));
  EXPECT_TRUE(same_metrics(curve.rows.back(), curve.ft_only));
  EXPECT_FALSE(same_metrics(curve.base_only, curve.ft_only));
  EXPECT_THROW((void)sweep_switch_point(ctx, base, ft, reward, {11}, "x"), ConfigError);
}

TEST(Harness, CalibratedRewardUsesBasePercentiles) {
  const auto cfg = tiny_config(Algorithm::refl);
  const auto ctx = make_context<double>(cfg);
  const auto base = freeze(pretrain_stage(ctx).params);
  const auto reward = build_reward(ctx, base);
  const int per_class = cfg.reward.calibration_samples / ctx.classes();
  const auto cls = class_major_conditions(ctx.classes(), per_class);
  const Matrix<double> x = generate(ctx, base, nullptr, GenMode::base_only, 0, cls, stage_seed(cfg, "calibration"));
  const Vector<double> raw = reward.raw(x, cls);
  const std::vector<double> v(raw.data(), raw.data() + raw.size());
  EXPECT_EQ(reward.spec().norm_lo, percentile(v, 1.0));
  EXPECT_EQ(reward.spec().norm_hi, percentile(v, 99.0));
  EXPECT_EQ(ctx.anchors.size(), 4u);
  EXPECT_NEAR(ctx.anchors[1][1], cfg.data.center_radius, 1e-12);
}

TEST(Harness, FailureWritesManifestNamingStage) {
  auto cfg = tiny_config(Algorithm::refl);
  cfg.arch.input_dim = 3;
  const auto dir = rlab::testing::scratch_dir("failure");
  EXPECT_THROW((void)run_experiment<double>(cfg, dir), ConfigError);
  const auto m = nlohmann::json::parse(read_text(dir / "manifest.json"));
  EXPECT_EQ(m.at("status"), "failed");
  EXPECT_EQ(m.at("failure").at("stage"), "config");
  EXPECT_NE(m.at("failure").at("error").get<std::string>().find("input_dim"), std::string::npos);
}

TEST(Plot, RenderingIsDeterministicAndEscaped) {
  plot::Chart c{"a < b & c", "x", "y", {{"s", {0, 1, 2}, {1, 0, std::nan("")}, {"p", "q", "r"}, true}}};
  const auto svg = plot::render_svg(c);
  EXPECT_EQ(svg, plot::render_svg(c));
  EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.substr(svg.size() - 7), "</svg>\n");
}
