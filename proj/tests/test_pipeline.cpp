#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "feta/errors.hpp"
#include "feta/eval.hpp"
#include "feta/pipeline.hpp"
#include "support/toy.hpp"

using namespace feta;

namespace {

// shrunken schedule so pipeline tests stay fast
CurriculumConfig fast_config(std::uint64_t seed) {
  CurriculumConfig cfg = testing::toy_config(seed);
  cfg.n_t = 4;
  cfg.k = 32;
  cfg.spatial_epochs = 4;
  cfg.gen_epochs = 1;
  cfg.gen_steps_per_epoch = 5;
  cfg.gen_batch = 64;
  cfg.n_f = 64;
  cfg.freq_epochs = 2;
  cfg.finetune_epochs = 1;
  cfg.q_d = 0.2;  // t_d = 5
  cfg.denoiser_hidden = {32};
  cfg.gen_hidden = {16};
  return cfg;
}

}  // namespace

TEST_CASE("config json round trip and unknown-key rejection") {
  const CurriculumConfig cfg = fast_config(3);
  const CurriculumConfig back = parse_curriculum_config(curriculum_config_json(cfg));
  CHECK(curriculum_config_json(back) == curriculum_config_json(cfg));

  CHECK_THROWS_AS(parse_curriculum_config("{\"sigma_q\": 1}"), ConfigError);
  CHECK_THROWS_AS(parse_curriculum_config("{\"target_delta\": 2.0}"), ConfigError);
  CHECK_THROWS_AS(parse_curriculum_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{\"curriculum\": {}}"), ConfigError);  // no schema_version
  CHECK_THROWS_AS(parse_run_config("{\"schema_version\": 9}"), ConfigError);

  const RunConfig rc = parse_run_config(
      "{\"schema_version\": 1, \"curriculum\": {\"seed\": 5}, "
      "\"paths\": {\"data_dir\": \"/tmp/x\"}}");
  CHECK(rc.curriculum.seed == 5);
  CHECK(rc.data_dir == "/tmp/x");

  for (const auto* name : {"spatial_then_frequency", "frequency_then_spatial", "mixed",
                           "spatial_only", "frequency_only", "none"})
    CHECK(order_name(order_from_name(name)) == name);
  CHECK_THROWS_AS(order_from_name("sideways"), ConfigError);
}

TEST_CASE("order none composes only dpsgd mechanisms") {
  const LabeledDataset ds = testing::toy8x8(40, 81);
  CurriculumConfig cfg = fast_config(81);
  cfg.order = CurriculumOrder::kNone;
  cfg.target_epsilon = 2.0;
  const CurriculumResult r = run_curriculum(cfg, ds);
  REQUIRE(r.report.mechanisms.size() == 1);
  CHECK(r.report.mechanisms[0].label == "dpsgd");
  CHECK(r.report.realized_epsilon <= 2.0);
  CHECK(r.report.realized_epsilon >= 0.99 * 2.0);  // calibration targets the budget
}

TEST_CASE("spatial_only composes spatial + dpsgd") {
  const LabeledDataset ds = testing::toy8x8(40, 82);
  CurriculumConfig cfg = fast_config(82);
  cfg.order = CurriculumOrder::kSpatialOnly;
  cfg.target_epsilon = 2.0;
  const CurriculumResult r = run_curriculum(cfg, ds);
  REQUIRE(r.report.mechanisms.size() == 2);
  CHECK(r.report.mechanisms[0].label == "spatial");
  CHECK(r.report.mechanisms[1].label == "dpsgd");
}

TEST_CASE("privacy conservation: recomposition reproduces the reported epsilon") {
  const LabeledDataset ds = testing::toy8x8(40, 83);
  CurriculumConfig cfg = fast_config(83);
  cfg.target_epsilon = 1.5;
  const CurriculumResult r = run_curriculum(cfg, ds);

  RdpLedger hand = RdpLedger::zero();
  for (const auto& s : r.report.mechanisms) hand = compose(hand, s);
  const DpPoint pt = to_dp(hand, r.report.delta);
  CHECK(pt.epsilon == r.report.realized_epsilon);
  CHECK(pt.alpha == r.report.realized_alpha);
  CHECK(r.report.realized_epsilon <= 1.5);

  double share_sum = 0.0;
  for (const auto& s : r.report.budget.shares) share_sum += s.share;
  CHECK(share_sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identical config and seed give identical reports") {
  const LabeledDataset ds = testing::toy8x8(40, 84);
  CurriculumConfig cfg = fast_config(84);
  cfg.target_epsilon = 1.5;
  const CurriculumResult a = run_curriculum(cfg, ds);
  const CurriculumResult b = run_curriculum(cfg, ds);
  CHECK(run_report_json(a.report) == run_report_json(b.report));
  CHECK(model_params(a.model) == model_params(b.model));
  CHECK(finetune_trace_json_lines(a.report) == finetune_trace_json_lines(b.report));
}

TEST_CASE("non-private run reports infinite epsilon") {
  const LabeledDataset ds = testing::toy8x8(40, 85);
  CurriculumConfig cfg = fast_config(85);
  cfg.sigma_t = 0.0;
  cfg.sigma_f = 0.0;
  cfg.sigma_d = 0.0;
  const CurriculumResult r = run_curriculum(cfg, ds);
  CHECK(std::isinf(r.report.realized_epsilon));
  CHECK(r.report.budget.shares.empty());
  const std::string json = run_report_json(r.report);
  CHECK(json.find("\"realized_epsilon\": null") != std::string::npos);
}

TEST_CASE("private run with a zero noise scale on a used stage is rejected") {
  const LabeledDataset ds = testing::toy8x8(40, 86);
  CurriculumConfig cfg = fast_config(86);
  cfg.target_epsilon = 1.0;
  cfg.sigma_t = 0.0;
  CHECK_THROWS_AS(run_curriculum(cfg, ds), ConfigError);
}

TEST_CASE("feature queries above 95% of the budget abort with guidance") {
  const LabeledDataset ds = testing::toy8x8(40, 87);
  CurriculumConfig cfg = fast_config(87);
  cfg.target_epsilon = 0.05;  // tiny budget, toy noise scales cannot fit
  CHECK_THROWS_AS(run_curriculum(cfg, ds), CalibrationError);
}

TEST_CASE("mixed order runs and interleaves both pools") {
  const LabeledDataset ds = testing::toy8x8(40, 88);
  CurriculumConfig cfg = fast_config(88);
  cfg.order = CurriculumOrder::kMixed;
  const CurriculumResult r = run_curriculum(cfg, ds);
  bool found = false;
  for (const auto& s : r.report.stages)
    if (s.stage == "warmup_mixed") {
      found = true;
      // total steps = spatial steps + frequency steps
      CHECK(s.losses.size() == 4 * 1 + 2 * 1);
    }
  CHECK(found);
}

TEST_CASE("pre-extracted features must agree with the config") {
  const LabeledDataset ds = testing::toy8x8(40, 89);
  CurriculumConfig cfg = fast_config(89);
  cfg.target_epsilon = 2.0;
  const FeatureConfig fc{cfg.seed, cfg.k, cfg.n_t, cfg.sigma_t, cfg.sigma_f,
                         cfg.c_t, cfg.q_t};
  const ExtractResult ex = extract_features(ds, fc);
  LoadedFeatures lf{ex.central, ex.freq};

  const CurriculumResult a = run_curriculum_with_features(cfg, ds, lf);
  CHECK(std::isinf(a.report.realized_epsilon) == false);
  CHECK(a.report.realized_epsilon <= 2.0);

  CurriculumConfig bad = cfg;
  bad.sigma_f = cfg.sigma_f + 1.0;
  CHECK_THROWS_AS(run_curriculum_with_features(bad, ds, lf), ConfigError);
}

TEST_CASE("allocation sweep covers the grid at the target budget") {
  const LabeledDataset ds = testing::toy8x8(40, 90);
  CurriculumConfig cfg = fast_config(90);
  cfg.target_epsilon = 2.0;
  const std::vector<double> st{2.0, 4.0};
  const std::vector<double> sf{4.0, 8.0};
  const SweepResult sweep = allocation_sweep(cfg, st, sf, ds, nullptr);
  REQUIRE(sweep.cells.size() == 4);
  for (const auto& cell : sweep.cells) {
    REQUIRE(cell.feasible);
    CHECK(cell.report.realized_epsilon <= 2.0);
    CHECK(cell.report.realized_epsilon >= 0.99 * 2.0);
    double sum = 0.0;
    for (const auto& s : cell.report.budget.shares) sum += s.share;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  // sigma_d falls as the feature queries get noisier (cheaper)
  const auto sd = [&](std::size_t i, std::size_t j) {
    return sweep.cells[i * sf.size() + j].report.sigma_d;
  };
  CHECK(sd(0, 0) >= sd(1, 0));
  CHECK(sd(0, 0) >= sd(0, 1));
  CHECK(sd(1, 0) >= sd(1, 1));
  CHECK(sd(0, 1) >= sd(1, 1));

  const std::string summary = sweep_summary_text(sweep);
  CHECK(summary.find("infeasible") == std::string::npos);
  CHECK(!sweep_budget_table_text(sweep).empty());
  CHECK(!sweep_json(sweep).empty());
}

TEST_CASE("infeasible sweep cells are recorded, not fatal") {
  const LabeledDataset ds = testing::toy8x8(40, 91);
  CurriculumConfig cfg = fast_config(91);
  cfg.target_epsilon = 2.0;
  // sigma_t = 0.3 alone blows the budget; 6.0 is comfortable
  const SweepResult sweep = allocation_sweep(cfg, {0.3, 6.0}, {8.0}, ds, nullptr);
  REQUIRE(sweep.cells.size() == 2);
  CHECK_FALSE(sweep.cells[0].feasible);
  CHECK(!sweep.cells[0].error.empty());
  CHECK(sweep.cells[1].feasible);
  CHECK(sweep_summary_text(sweep).find("infeasible") != std::string::npos);
}

TEST_CASE("report json excludes wall clock but timing json carries it") {
  const LabeledDataset ds = testing::toy8x8(40, 92);
  CurriculumConfig cfg = fast_config(92);
  const CurriculumResult r = run_curriculum(cfg, ds);
  CHECK(run_report_json(r.report).find("wall") == std::string::npos);
  CHECK(timing_json(r.report).find("wall_seconds") != std::string::npos);
  CHECK(r.report.finetune_trace.size() == cfg.finetune_steps());
}
