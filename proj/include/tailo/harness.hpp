#pragma once

#include "tailo/core_types.hpp"
#include "tailo/dice_baseline.hpp"
#include "tailo/pu_discriminator.hpp"
#include "tailo/synth_envs.hpp"
#include "tailo/trajectory_weights.hpp"
#include "tailo/wbc_trainer.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tailo::harness {

enum class Method { tailo, bc, smodice_kl, ours_v1, ours_v2, ours_v3 };

std::string to_string(Method m);
Method parse_method(const std::string& text);
std::vector<Method> parse_method_list(const std::string& text);

enum class Scenario { standard, incomplete_ta, incomplete_ts, example_based, ablation };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& text);

struct EvalPoint {
  int step = 0;
  double success_rate = 0.0;
  double loss = 0.0;
};

struct MethodRun {
  Method method = Method::bc;
  std::uint64_t seed = 0;
  std::vector<EvalPoint> curve;
  bool aborted = false;
  std::string abort_reason;
  std::optional<pu::RewardField> rewards;
  std::optional<weights::WeightTable> weights;
  std::optional<dice::ValueNet> value;
  std::optional<wbc::Policy> policy;

  double final_success() const { return curve.empty() ? 0.0 : curve.back().success_rate; }
};

/// Success rate of the policy over config.eval_episodes rollouts; the rollout
/// seed depends only on (seed, step).
double evaluate(const wbc::Policy& policy, const RunConfig& config, std::uint64_t seed, int step);

/// One method on one seed: reward/weights (if the method needs them), then
/// weighted BC with periodic evaluation. Files go under `out` when non-empty:
/// rewards.csv, weights.csv, vmonitor.csv, policy checkpoints.
/// A training failure marks the run aborted; remaining evaluation points
/// are reported as 0.
MethodRun run_method(Method method, const Dataset& ta, const Dataset& ts, const RunConfig& config, std::uint64_t seed,
                     const std::filesystem::path& out = {});

// Experiment specification ---------------------------------------------------------

struct ExperimentSpec {
  Scenario scenario = Scenario::standard;
  std::filesystem::path ta_path;
  std::filesystem::path ts_path;
  RunConfig config;
  std::vector<std::uint64_t> seeds{0};
  std::vector<Method> methods{Method::tailo, Method::bc};
  int remove_x = 0;  // incomplete_ta
  int head = 0;      // incomplete_ts
  int tail = 0;
  std::map<std::string, std::vector<double>> grid;  // ablation
  std::string expert_tag = "scripted-direction-L";  // reporting only

  /// Throws Error naming the violated invariant.
  void validate() const;
};

/// Flat TOML subset: `key = value` lines, [section] headers (keys become
/// "section.key"), strings, numbers, booleans and flat arrays.
std::map<std::string, std::string> parse_toml(const std::string& text);

/// Applies one RunConfig field by name; returns false for unknown names.
bool set_config_field(RunConfig& config, const std::string& key, const std::string& value);

ExperimentSpec spec_from_toml(const std::string& text, const std::filesystem::path& base_dir);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Resolved config and spec as JSON (manifest content).
std::string spec_json(const ExperimentSpec& spec);

// Running ---------------------------------------------------------------------------

struct PreparedData {
  Dataset ta;
  Dataset ts;
  int dropped_trajectories = 0;
};

/// Loads both datasets and applies the scenario's corruption.
PreparedData prepare_data(const ExperimentSpec& spec);

struct ExperimentResult {
  std::vector<MethodRun> runs;
};

/// Every method x seed. Writes manifest.json, curves.csv, summary.csv and one
/// directory per method and seed. Refuses a non-empty `out` unless `force`.
ExperimentResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out, bool force);

/// Cartesian product over spec.grid; one run_experiment per cell under
/// out/cell_<k>, plus ablation_summary.csv keyed by the parameter values.
void run_ablation(const ExperimentSpec& spec, const std::filesystem::path& out, bool force);

// CSV and reporting -------------------------------------------------------------------

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

struct CurveRow {
  std::string method;
  std::uint64_t seed = 0;
  int step = 0;
  double success_rate = 0.0;
  double loss = 0.0;
};

std::vector<CurveRow> read_curves_csv(const std::filesystem::path& path);
void write_curves_csv(const std::vector<CurveRow>& rows, const std::filesystem::path& path);

struct SeriesPoint {
  int step = 0;
  double mean = 0.0;
  double std = 0.0;  // sample std over seeds, 0 for one seed
  int n = 0;
};

struct Series {
  std::string label;
  std::vector<SeriesPoint> points;
};

/// Sample mean and std (n - 1 denominator; 0 when n == 1).
std::pair<double, double> mean_std(const std::vector<double>& xs);

/// Per-method mean/std of success_rate at each eval step. Seeds whose eval
/// grids differ are resampled onto the coarsest grid (last value at or before
/// each step); `note` receives a message when that happens.
std::vector<Series> aggregate_curves(const std::vector<CurveRow>& rows, std::string* note = nullptr);

struct SummaryRow {
  std::string method;
  int n_seeds = 0;
  double final_success_mean = 0.0;
  double final_success_std = 0.0;
  int final_step = 0;
};

std::vector<SummaryRow> summarize(const std::vector<CurveRow>& rows);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);

/// Line plot with shaded +-std bands, one labeled series each.
std::string render_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label, bool log_y = false);

/// Reads result directories and writes report_curves.csv, summary.csv,
/// report.svg, weights.svg (if weight profiles exist) and vmonitor.svg (if
/// V monitors exist) into `out`.
void write_report(const std::vector<std::filesystem::path>& result_dirs, const std::filesystem::path& out);

}  // namespace tailo::harness
