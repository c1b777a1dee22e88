#include "tailo/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace tailo;

namespace {

void refuse_existing(const std::vector<fs::path>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths)
    if (fs::exists(p)) throw Error(p.string() + " exists (use --force to overwrite)");
}

void write_manifest(const fs::path& path, const nlohmann::json& params, const std::vector<fs::path>& files) {
  nlohmann::json j;
  j["parameters"] = params;
  for (const auto& f : files) j["checksums"][f.filename().string()] = harness::file_checksum(f);
  std::ofstream(path) << j.dump(2) << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoull(item));
  if (out.empty()) throw Error("--seed needs at least one value");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-aware weighted imitation learning: data generation, training and reporting"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic datasets");
  std::string gen_kind;
  int per_direction = 50, chain_n = 20, chain_trajs = 50;
  double noise = 0.2;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "data", expert_dir = "L";
  bool gen_force = false;
  gen->add_option("kind", gen_kind, "pointmaze or chain")->required()->check(CLI::IsMember({"pointmaze", "chain"}));
  gen->add_option("--per-direction", per_direction, "Pointmaze trajectories per direction");
  gen->add_option("--noise", noise, "Pointmaze action noise std");
  gen->add_option("--expert-direction", expert_dir, "Direction used for the task-specific files");
  gen->add_option("--n", chain_n, "Chain length");
  gen->add_option("--trajectories", chain_trajs, "Chain trajectories");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_flag("--force", gen_force, "Overwrite existing files");

  // corrupt / truncate
  auto* corrupt = app.add_subcommand("corrupt", "Remove every x-th state-action pair");
  std::string c_in, c_out;
  int c_x = 2;
  bool c_force = false;
  corrupt->add_option("--in", c_in, "Input dataset")->required();
  corrupt->add_option("--out", c_out, "Output dataset")->required();
  corrupt->add_option("--x", c_x, "Removal period")->required();
  corrupt->add_flag("--force", c_force, "Overwrite existing output");

  auto* trunc = app.add_subcommand("truncate", "Keep the first head and last tail states of each trajectory");
  std::string t_in, t_out;
  int t_head = 0, t_tail = 0;
  bool t_force = false;
  trunc->add_option("--in", t_in, "Input dataset")->required();
  trunc->add_option("--out", t_out, "Output dataset")->required();
  trunc->add_option("--head", t_head, "States kept from the start");
  trunc->add_option("--tail", t_tail, "States kept from the end");
  trunc->add_flag("--force", t_force, "Overwrite existing output");

  // run / ablate share options
  struct RunArgs {
    std::string config, seeds, out = "results", methods, loss_variant;
    int x = 0, head = -1, tail = -1;
    bool no_normalize = false, force = false;
    std::vector<std::string> grid;
  };
  RunArgs run_args, abl_args;
  auto add_run_options = [](CLI::App* cmd, RunArgs& a) {
    cmd->add_option("--config", a.config, "Experiment spec (TOML)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", a.seeds, "Comma-separated seeds");
    cmd->add_option("--out", a.out, "Result directory");
    cmd->add_option("--method", a.methods, "Comma-separated methods: tailo,bc,smodice_kl,ours_v1,ours_v2,ours_v3");
    cmd->add_option("--x", a.x, "Remove every x-th task-agnostic pair");
    cmd->add_option("--head", a.head, "Task-specific states kept from the start");
    cmd->add_option("--tail", a.tail, "Task-specific states kept from the end");
    cmd->add_option("--loss-variant", a.loss_variant, "nnpu or paper-literal")
        ->check(CLI::IsMember({"nnpu", "paper-literal"}));
    cmd->add_flag("--no-normalize-weights", a.no_normalize, "Use raw weights in behavior cloning");
    cmd->add_flag("--force", a.force, "Overwrite an existing result directory");
  };
  auto* run = app.add_subcommand("run", "Train and evaluate methods over seeds");
  add_run_options(run, run_args);
  auto* ablate = app.add_subcommand("ablate", "Run a parameter grid");
  add_run_options(ablate, abl_args);
  ablate->add_option("--grid", abl_args.grid, "name=v1,v2,... (repeatable); adds to the spec's [grid]");

  auto* report = app.add_subcommand("report", "Aggregate result directories into CSV and SVG");
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  report->add_option("dirs", report_dirs, "Result directories")->required();
  report->add_option("--out", report_out, "Report directory");

  CLI11_PARSE(app, argc, argv);

  auto build_spec = [](const RunArgs& a) {
    harness::ExperimentSpec spec = harness::load_spec(a.config);
    if (!a.seeds.empty()) spec.seeds = parse_seeds(a.seeds);
    if (!a.methods.empty()) spec.methods = harness::parse_method_list(a.methods);
    if (a.x > 0) {
      spec.scenario = harness::Scenario::incomplete_ta;
      spec.remove_x = a.x;
    }
    if (a.head >= 0 || a.tail >= 0) {
      spec.scenario = harness::Scenario::incomplete_ts;
      spec.head = std::max(a.head, 0);
      spec.tail = std::max(a.tail, 0);
    }
    if (!a.loss_variant.empty()) spec.config.loss_variant = parse_loss_variant(a.loss_variant);
    if (a.no_normalize) spec.config.normalize_weights = false;
    for (const auto& g : a.grid) {
      const auto eq = g.find('=');
      if (eq == std::string::npos) throw Error("--grid expects name=v1,v2,...");
      std::vector<double> vals;
      std::stringstream ss(g.substr(eq + 1));
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) vals.push_back(std::stod(item));
      spec.grid[g.substr(0, eq)] = vals;
    }
    return spec;
  };

  try {
    if (*gen) {
      const fs::path out = gen_out;
      fs::create_directories(out);
      nlohmann::json params{{"kind", gen_kind}, {"seed", gen_seed}};
      std::vector<fs::path> files;
      if (gen_kind == "pointmaze") {
        files = {out / "task_agnostic.jsonl", out / "task_specific_full.jsonl", out / "task_specific_final.jsonl"};
        refuse_existing(files, gen_force);
        const Dataset ta = envs::gen_pointmaze(per_direction, noise, gen_seed);
        const std::string tag = "scripted-direction-" + expert_dir;
        save_dataset(ta, files[0]);
        save_dataset(envs::make_task_specific_examples(ta, tag, envs::ExampleMode::full), files[1]);
        save_dataset(envs::make_task_specific_examples(ta, tag, envs::ExampleMode::final_state), files[2]);
        params["per_direction"] = per_direction;
        params["noise"] = noise;
        params["expert_direction"] = expert_dir;
      } else {
        files = {out / "chain.jsonl"};
        refuse_existing(files, gen_force);
        save_dataset(envs::gen_chain(chain_n, chain_trajs, gen_seed), files[0]);
        params["n"] = chain_n;
        params["trajectories"] = chain_trajs;
      }
      write_manifest(out / "manifest.json", params, files);
      for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
    } else if (*corrupt) {
      refuse_existing({c_out}, c_force);
      auto res = envs::corrupt_remove_every_x(load_dataset(c_in), c_x);
      save_dataset(res.dataset, c_out);
      std::cout << "removed " << res.removed_pairs << " pairs, dropped " << res.dropped_trajectories
                << " trajectories\n";
    } else if (*trunc) {
      refuse_existing({t_out}, t_force);
      save_dataset(envs::truncate_head_tail(load_dataset(t_in), t_head, t_tail), t_out);
    } else if (*run) {
      const auto spec = build_spec(run_args);
      const auto result = harness::run_experiment(spec, run_args.out, run_args.force);
      for (const auto& row : harness::summarize(harness::read_curves_csv(fs::path(run_args.out) / "curves.csv")))
        std::cout << row.method << ": final success " << row.final_success_mean << " +- " << row.final_success_std
                  << " over " << row.n_seeds << " seeds\n";
      (void)result;
    } else if (*ablate) {
      auto spec = build_spec(abl_args);
      harness::run_ablation(spec, abl_args.out, abl_args.force);
      std::cout << "wrote " << (fs::path(abl_args.out) / "ablation_summary.csv").string() << "\n";
    } else if (*report) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      harness::write_report(dirs, report_out);
      std::cout << "wrote report to " << report_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
