#include "tailo/harness.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace tailo;
using namespace tailo::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "tailo_harness_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig tiny_config() {
  RunConfig c;
  c.hidden = 8;
  c.steps_pretrain = 20;
  c.steps_formal = 20;
  c.steps_bc = 40;
  c.steps_value = 20;
  c.monitor_interval = 10;
  c.batch_disc = 16;
  c.batch_bc = 16;
  c.batch_value = 16;
  c.eval_interval = 20;
  c.eval_episodes = 5;
  c.gamma = 0.98;
  return c;
}

struct Files {
  fs::path ta, ts;
};

Files write_data(const fs::path& dir) {
  const Dataset ta = envs::gen_pointmaze(4, 0.2, 3);
  const Files f{dir / "ta.jsonl", dir / "ts.jsonl"};
  save_dataset(ta, f.ta);
  save_dataset(envs::make_task_specific_examples(ta, "scripted-direction-L", envs::ExampleMode::final_state), f.ts);
  return f;
}

ExperimentSpec tiny_spec(const Files& f) {
  ExperimentSpec s;
  s.ta_path = f.ta;
  s.ts_path = f.ts;
  s.config = tiny_config();
  s.seeds = {0, 1, 2};
  s.methods = {Method::tailo, Method::bc};
  return s;
}

}  // namespace

TEST(Toml, ParsesSectionsAndValues) {
  const auto m = parse_toml(R"(
# comment
scenario = "incomplete_ta"   # trailing
seeds = [0, 1, 2]
[config]
alpha = 2.5
normalize_weights = false
[grid]
gamma = [0.0, 0.98]
)");
  EXPECT_EQ(m.at("scenario"), "\"incomplete_ta\"");
  EXPECT_EQ(m.at("config.alpha"), "2.5");
  EXPECT_EQ(m.at("grid.gamma"), "[0.0, 0.98]");
  EXPECT_THROW(parse_toml("a = 1\na = 2\n"), ParseError);
  EXPECT_THROW(parse_toml("novalue\n"), ParseError);
}

TEST(Spec, FromTomlAndValidation) {
  const auto spec = spec_from_toml(R"(
scenario = "incomplete_ta"
task_agnostic = "a.jsonl"
task_specific = "b.jsonl"
seeds = [4, 5]
methods = ["bc", "ours_v2"]
remove_x = 2
[config]
alpha = 2.0
loss_variant = "paper-literal"
normalize_weights = false
)",
                                   "/data");
  EXPECT_EQ(spec.scenario, Scenario::incomplete_ta);
  EXPECT_EQ(spec.ta_path, fs::path("/data/a.jsonl"));
  EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(spec.methods, (std::vector<Method>{Method::bc, Method::ours_v2}));
  EXPECT_DOUBLE_EQ(spec.config.alpha, 2.0);
  EXPECT_EQ(spec.config.loss_variant, LossVariant::paper_literal);
  EXPECT_FALSE(spec.config.normalize_weights);
  EXPECT_NO_THROW(spec.validate());

  ExperimentSpec bad = spec;
  bad.seeds.clear();
  EXPECT_THROW(bad.validate(), Error);
  bad = spec;
  bad.remove_x = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = spec;
  bad.scenario = Scenario::ablation;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(spec_from_toml("[config]\nnot_a_field = 1\n", "."), Error);
  EXPECT_THROW(spec_from_toml("methods = [\"gail\"]\n", "."), Error);
}

TEST(Report, MeanStdMatchesSpreadsheet) {
  // Three seeds, two steps; expected values from the textbook formulas.
  std::vector<CurveRow> rows{{"m", 0, 10, 0.2, 0}, {"m", 1, 10, 0.5, 0}, {"m", 2, 10, 0.8, 0},
                             {"m", 0, 20, 0.1, 0}, {"m", 1, 20, 0.4, 0}, {"m", 2, 20, 0.4, 0}};
  const auto series = aggregate_curves(rows);
  ASSERT_EQ(series.size(), 1u);
  ASSERT_EQ(series[0].points.size(), 2u);
  EXPECT_NEAR(series[0].points[0].mean, 0.5, 1e-12);
  EXPECT_NEAR(series[0].points[0].std, 0.3, 1e-12);
  EXPECT_NEAR(series[0].points[1].mean, 0.3, 1e-12);
  EXPECT_NEAR(series[0].points[1].std, std::sqrt(0.03), 1e-12);
  const auto summary = summarize(rows);
  EXPECT_EQ(summary[0].n_seeds, 3);
  EXPECT_EQ(summary[0].final_step, 20);
  EXPECT_NEAR(summary[0].final_success_mean, 0.3, 1e-12);
  EXPECT_NEAR(summary[0].final_success_std, std::sqrt(0.03), 1e-12);
}

TEST(Report, SingleSeedAndConstantSeries) {
  std::vector<CurveRow> rows{{"m", 0, 1, 0.7, 0}, {"m", 0, 2, 0.7, 0}, {"m", 0, 3, 0.7, 0}};
  const auto s = aggregate_curves(rows);
  for (const auto& p : s[0].points) {
    EXPECT_EQ(p.std, 0.0);
    EXPECT_DOUBLE_EQ(p.mean, 0.7);
  }
}

TEST(Report, MismatchedGridsResampleToCoarsest) {
  std::vector<CurveRow> rows{{"m", 0, 10, 0.1, 0}, {"m", 0, 20, 0.2, 0}, {"m", 0, 30, 0.3, 0},
                             {"m", 0, 40, 0.4, 0}, {"m", 1, 20, 0.6, 0}, {"m", 1, 40, 0.8, 0}};
  std::string note;
  const auto s = aggregate_curves(rows, &note);
  EXPECT_FALSE(note.empty());
  ASSERT_EQ(s[0].points.size(), 2u);
  EXPECT_EQ(s[0].points[0].step, 20);
  EXPECT_NEAR(s[0].points[0].mean, 0.4, 1e-12);
  EXPECT_NEAR(s[0].points[1].mean, 0.6, 1e-12);
}

TEST(Report, SvgHasLabeledSeriesAndBands) {
  std::vector<Series> series{{"tailo", {{0, 0.5, 0.1, 3}, {10, 0.9, 0.05, 3}}},
                             {"bc", {{0, 0.2, 0.0, 3}, {10, 0.3, 0.1, 3}}}};
  const std::string svg = render_svg(series, "t", "x", "y");
  EXPECT_NE(svg.find(">tailo<"), std::string::npos);
  EXPECT_NE(svg.find(">bc<"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), 'p') > 0, true);
  std::size_t polys = 0, pos = 0;
  while ((pos = svg.find("<polygon", pos)) != std::string::npos) ++polys, ++pos;
  EXPECT_EQ(polys, 2u);
}

TEST(Report, CsvRoundTrip) {
  const auto dir = scratch("csv");
  std::vector<CurveRow> rows{{"tailo", 0, 1000, 0.25, 1.5}, {"bc", 3, 2000, 1.0 / 3.0, -0.1}};
  write_curves_csv(rows, dir / "c.csv");
  const auto back = read_curves_csv(dir / "c.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].method, "bc");
  EXPECT_EQ(back[1].seed, 3u);
  EXPECT_EQ(back[1].success_rate, 1.0 / 3.0);
}

TEST(Run, BcOnlySkipsDiscriminatorAndSeedsAreDistinct) {
  const auto dir = scratch("bc_only");
  auto spec = tiny_spec(write_data(dir));
  spec.methods = {Method::bc};
  run_experiment(spec, dir / "out", false);
  EXPECT_FALSE(fs::exists(dir / "out/bc/seed_0/rewards.csv"));
  EXPECT_FALSE(fs::exists(dir / "out/bc/seed_0/weights.csv"));
  std::set<std::uint64_t> seeds;
  for (const auto& r : read_curves_csv(dir / "out/curves.csv")) seeds.insert(r.seed);
  EXPECT_EQ(seeds.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "out/manifest.json"));
  EXPECT_THROW(run_experiment(spec, dir / "out", false), Error);
  EXPECT_NO_THROW(run_experiment(spec, dir / "out", true));
}

TEST(Run, AllMethodsWriteArtifactsAndReport) {
  const auto dir = scratch("all");
  auto spec = tiny_spec(write_data(dir));
  spec.seeds = {0};
  spec.methods = {Method::tailo, Method::bc, Method::smodice_kl, Method::ours_v1, Method::ours_v2, Method::ours_v3};
  run_experiment(spec, dir / "out", false);
  EXPECT_TRUE(fs::exists(dir / "out/tailo/seed_0/weights.csv"));
  EXPECT_TRUE(fs::exists(dir / "out/tailo/seed_0/rewards.csv"));
  EXPECT_TRUE(fs::exists(dir / "out/tailo/seed_0/weight_profile.csv"));
  EXPECT_TRUE(fs::exists(dir / "out/smodice_kl/seed_0/vmonitor.csv"));
  EXPECT_TRUE(fs::exists(dir / "out/bc/seed_0/policy_step_40.json"));
  write_report({dir / "out"}, dir / "report");
  EXPECT_TRUE(fs::exists(dir / "report/report.svg"));
  EXPECT_TRUE(fs::exists(dir / "report/weights.svg"));
  EXPECT_TRUE(fs::exists(dir / "report/vmonitor.svg"));
  EXPECT_EQ(summarize(read_curves_csv(dir / "out/curves.csv")).size(), 6u);
}

TEST(Run, DeterministicSummary) {
  const auto dir = scratch("determinism");
  auto spec = tiny_spec(write_data(dir));
  run_experiment(spec, dir / "a", false);
  run_experiment(spec, dir / "b", false);
  EXPECT_EQ(read(dir / "a/summary.csv"), read(dir / "b/summary.csv"));
  EXPECT_EQ(read(dir / "a/curves.csv"), read(dir / "b/curves.csv"));
}

TEST(Run, SourceTagsDoNotAffectTraining) {
  const auto dir = scratch("scramble");
  const Files f = write_data(dir);
  Dataset ta = load_dataset(f.ta);
  Dataset ts = load_dataset(f.ts);
  const char* tags[] = {"expert", "random", "other", "scripted-direction-Q"};
  for (std::size_t i = 0; i < ta.trajectories.size(); ++i) ta.trajectories[i].source = SourceTag::parse(tags[i % 4]);
  for (std::size_t i = 0; i < ts.trajectories.size(); ++i) ts.trajectories[i].source = SourceTag::parse(tags[(i + 1) % 4]);
  const Files g{dir / "ta2.jsonl", dir / "ts2.jsonl"};
  save_dataset(ta, g.ta);
  save_dataset(ts, g.ts);
  auto a = tiny_spec(f), b = tiny_spec(g);
  a.seeds = b.seeds = {1};
  a.methods = b.methods = {Method::tailo, Method::smodice_kl};
  run_experiment(a, dir / "a", false);
  run_experiment(b, dir / "b", false);
  for (const char* m : {"tailo", "smodice_kl"}) {
    const fs::path p = fs::path(m) / "seed_1";
    EXPECT_EQ(read(dir / "a" / p / "policy_step_40.json"), read(dir / "b" / p / "policy_step_40.json")) << m;
    EXPECT_EQ(read(dir / "a" / p / "weights.csv"), read(dir / "b" / p / "weights.csv")) << m;
  }
}

TEST(Run, AbortedRunReportsZero) {
  const auto dir = scratch("abort");
  const Files f = write_data(dir);
  RunConfig c = tiny_config();
  c.lr_policy = 1e200;
  const Dataset ta = load_dataset(f.ta), ts = load_dataset(f.ts);
  const MethodRun run = run_method(Method::bc, ta, ts, c, 0);
  EXPECT_TRUE(run.aborted);
  ASSERT_EQ(run.curve.size(), 2u);
  for (const auto& p : run.curve) EXPECT_EQ(p.success_rate, 0.0);
}

TEST(Ablate, GridProducesOneCellPerCombination) {
  const auto dir = scratch("ablate");
  auto spec = tiny_spec(write_data(dir));
  spec.seeds = {0};
  spec.methods = {Method::tailo};
  spec.grid = {{"alpha", {0.75, 1.25, 2.0}}};
  run_ablation(spec, dir / "out", false);
  const std::string table = read(dir / "out/ablation_summary.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
  EXPECT_NE(table.find("0.75,tailo"), std::string::npos);
  spec.grid.clear();
  EXPECT_THROW(run_ablation(spec, dir / "out2", false), Error);
}

TEST(Checksum, StableAndSensitive) {
  const auto dir = scratch("checksum");
  std::ofstream(dir / "a") << "hello";
  std::ofstream(dir / "b") << "hellp";
  EXPECT_EQ(file_checksum(dir / "a"), file_checksum(dir / "a"));
  EXPECT_NE(file_checksum(dir / "a"), file_checksum(dir / "b"));
  EXPECT_EQ(file_checksum(dir / "a").size(), 16u);
}
