#include "tailo/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace tailo::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

std::vector<std::string> split_array(const std::string& v) {
  const std::string t = trim(v);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']') throw Error("expected an array, got '" + v + "'");
  std::vector<std::string> out;
  std::stringstream ss(t.substr(1, t.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(unquote(item));
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("'" + key + "': expected a number, got '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 2e9) throw Error("'" + key + "': expected an integer, got '" + v + "'");
  return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error("'" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

json config_json(const RunConfig& c) {
  return json{{"alpha", c.alpha},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eta_p", c.eta_p},
              {"gamma", c.gamma},
              {"lr_disc", c.lr_disc},
              {"lr_policy", c.lr_policy},
              {"weight_decay_policy", c.weight_decay_policy},
              {"steps_pretrain", c.steps_pretrain},
              {"steps_formal", c.steps_formal},
              {"steps_bc", c.steps_bc},
              {"batch_disc", c.batch_disc},
              {"batch_bc", c.batch_bc},
              {"grad_penalty_coef", c.grad_penalty_coef},
              {"logit_clamp", c.logit_clamp},
              {"loss_variant", to_string(c.loss_variant)},
              {"normalize_weights", c.normalize_weights},
              {"hidden", c.hidden},
              {"gamma_value", c.gamma_value},
              {"lr_value", c.lr_value},
              {"steps_value", c.steps_value},
              {"batch_value", c.batch_value},
              {"monitor_interval", c.monitor_interval},
              {"eval_interval", c.eval_interval},
              {"eval_episodes", c.eval_episodes},
              {"eval_start_jitter", c.eval_start_jitter},
              {"checkpoint_interval", c.checkpoint_interval},
              {"seed", c.seed}};
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw Error("output directory " + out.string() + " is not empty (use --force to overwrite)");
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

/// Per-step mean R and W over trajectories with / without the expert tag.
void write_weight_profile(const MethodRun& run, const Dataset& ta, const std::string& expert_tag, const fs::path& path) {
  if (!run.weights || !run.rewards) return;
  const SourceTag expert = SourceTag::parse(expert_tag);
  Eigen::Index horizon = 0;
  for (const auto& t : ta.trajectories) horizon = std::max(horizon, t.size());
  std::ostringstream os;
  os << "step,expert_mean_R,expert_mean_W,other_mean_R,other_mean_W\n";
  for (Eigen::Index step = 0; step < horizon; ++step) {
    double sum[2][2] = {{0, 0}, {0, 0}};
    int count[2] = {0, 0};
    for (std::size_t i = 0; i < ta.trajectories.size(); ++i) {
      const auto& t = ta.trajectories[i];
      if (step >= t.size()) continue;
      const int g = t.source == expert ? 0 : 1;
      sum[g][0] += run.rewards->values[i][step];
      sum[g][1] += run.weights->weights(i)[step];
      ++count[g];
    }
    auto cell = [&](int g, int k) { return count[g] ? fmt(sum[g][k] / count[g]) : std::string("nan"); };
    os << step << "," << cell(0, 0) << "," << cell(0, 1) << "," << cell(1, 0) << "," << cell(1, 1) << "\n";
  }
  write_text(path, os.str());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

/// Header -> column index map; throws when a required column is missing.
std::map<std::string, std::size_t> csv_columns(const std::string& header, const std::vector<std::string>& required,
                                               const fs::path& path) {
  std::map<std::string, std::size_t> cols;
  const auto names = split_csv_line(header);
  for (std::size_t i = 0; i < names.size(); ++i) cols[names[i]] = i;
  for (const auto& r : required)
    if (!cols.count(r)) throw ParseError(1, path.string() + ": missing column '" + r + "'");
  return cols;
}

}  // namespace

// --- config -----------------------------------------------------------------------------

std::map<std::string, std::string> parse_toml(const std::string& text) {
  std::map<std::string, std::string> out;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(lineno, "expected key = value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) throw ParseError(lineno, "duplicate key '" + full + "'");
    out[full] = value;
  }
  return out;
}

bool set_config_field(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = unquote(raw);
  auto d = [&](double& field) { field = to_double(key, v); };
  auto i = [&](int& field) { field = to_int(key, v); };
  if (key == "alpha") d(c.alpha);
  else if (key == "beta1") d(c.beta1);
  else if (key == "beta2") d(c.beta2);
  else if (key == "eta_p") d(c.eta_p);
  else if (key == "gamma") d(c.gamma);
  else if (key == "lr_disc") d(c.lr_disc);
  else if (key == "lr_policy") d(c.lr_policy);
  else if (key == "weight_decay_policy") d(c.weight_decay_policy);
  else if (key == "steps_pretrain") i(c.steps_pretrain);
  else if (key == "steps_formal") i(c.steps_formal);
  else if (key == "steps_bc") i(c.steps_bc);
  else if (key == "batch_disc") i(c.batch_disc);
  else if (key == "batch_bc") i(c.batch_bc);
  else if (key == "grad_penalty_coef") d(c.grad_penalty_coef);
  else if (key == "logit_clamp") d(c.logit_clamp);
  else if (key == "loss_variant") c.loss_variant = parse_loss_variant(v);
  else if (key == "normalize_weights") c.normalize_weights = to_bool(key, v);
  else if (key == "hidden") i(c.hidden);
  else if (key == "gamma_value") d(c.gamma_value);
  else if (key == "lr_value") d(c.lr_value);
  else if (key == "steps_value") i(c.steps_value);
  else if (key == "batch_value") i(c.batch_value);
  else if (key == "monitor_interval") i(c.monitor_interval);
  else if (key == "eval_interval") i(c.eval_interval);
  else if (key == "eval_episodes") i(c.eval_episodes);
  else if (key == "eval_start_jitter") d(c.eval_start_jitter);
  else if (key == "checkpoint_interval") i(c.checkpoint_interval);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, v));
  else return false;
  return true;
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw Error("spec: seeds must be nonempty");
  if (methods.empty()) throw Error("spec: methods must be nonempty");
  if (ta_path.empty()) throw Error("spec: task_agnostic dataset path missing");
  const bool needs_ts = std::any_of(methods.begin(), methods.end(), [](Method m) { return m != Method::bc; });
  if (needs_ts && ts_path.empty()) throw Error("spec: task_specific dataset path missing");
  if (scenario == Scenario::incomplete_ta && remove_x < 2) throw Error("spec: incomplete_ta needs remove_x >= 2");
  if (scenario == Scenario::incomplete_ts && (head < 0 || tail < 0 || head + tail < 1))
    throw Error("spec: incomplete_ts needs head, tail >= 0 with head + tail >= 1");
  if (scenario == Scenario::ablation && grid.empty()) throw Error("spec: ablation needs a nonempty grid");
  for (const auto& [key, values] : grid) {
    RunConfig probe;
    if (!set_config_field(probe, key, "0")) throw Error("spec: unknown grid parameter '" + key + "'");
    if (values.empty()) throw Error("spec: grid parameter '" + key + "' has no values");
  }
  SourceTag::parse(expert_tag);
  config.validate();
}

ExperimentSpec spec_from_toml(const std::string& text, const fs::path& base_dir) {
  ExperimentSpec spec;
  auto path_of = [&](const std::string& v) {
    fs::path p = unquote(v);
    return p.is_absolute() || p.empty() ? p : base_dir / p;
  };
  for (const auto& [key, value] : parse_toml(text)) {
    if (key == "scenario") spec.scenario = parse_scenario(unquote(value));
    else if (key == "task_agnostic") spec.ta_path = path_of(value);
    else if (key == "task_specific") spec.ts_path = path_of(value);
    else if (key == "expert_tag") spec.expert_tag = unquote(value);
    else if (key == "remove_x") spec.remove_x = to_int(key, value);
    else if (key == "head") spec.head = to_int(key, value);
    else if (key == "tail") spec.tail = to_int(key, value);
    else if (key == "seeds") {
      spec.seeds.clear();
      for (const auto& s : split_array(value)) spec.seeds.push_back(static_cast<std::uint64_t>(to_int(key, s)));
    } else if (key == "methods") {
      spec.methods.clear();
      for (const auto& m : split_array(value)) spec.methods.push_back(parse_method(m));
    } else if (key.rfind("config.", 0) == 0) {
      if (!set_config_field(spec.config, key.substr(7), value)) throw Error("unknown config field '" + key + "'");
    } else if (key.rfind("grid.", 0) == 0) {
      std::vector<double> vals;
      for (const auto& s : split_array(value)) vals.push_back(to_double(key, s));
      spec.grid[key.substr(5)] = vals;
    } else {
      throw Error("unknown spec key '" + key + "'");
    }
  }
  return spec;
}

ExperimentSpec load_spec(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return spec_from_toml(ss.str(), path.parent_path());
}

std::string spec_json(const ExperimentSpec& spec) {
  json j;
  j["scenario"] = to_string(spec.scenario);
  j["task_agnostic"] = spec.ta_path.string();
  j["task_specific"] = spec.ts_path.string();
  j["seeds"] = spec.seeds;
  std::vector<std::string> methods;
  for (auto m : spec.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["remove_x"] = spec.remove_x;
  j["head"] = spec.head;
  j["tail"] = spec.tail;
  j["expert_tag"] = spec.expert_tag;
  j["grid"] = spec.grid;
  j["config"] = config_json(spec.config);
  return j.dump(2);
}

// --- running ------------------------------------------------------------------------------

PreparedData prepare_data(const ExperimentSpec& spec) {
  PreparedData data;
  data.ta = load_dataset(spec.ta_path);
  if (data.ta.kind != DatasetKind::task_agnostic) throw Error(spec.ta_path.string() + " is not task-agnostic");
  if (!spec.ts_path.empty()) {
    data.ts = load_dataset(spec.ts_path);
    if (data.ts.kind != DatasetKind::task_specific) throw Error(spec.ts_path.string() + " is not task-specific");
    if (data.ts.state_dim != data.ta.state_dim) throw DimensionError("task-specific and task-agnostic state dims differ");
  }
  switch (spec.scenario) {
    case Scenario::incomplete_ta: {
      auto res = envs::corrupt_remove_every_x(data.ta, spec.remove_x);
      data.ta = std::move(res.dataset);
      data.dropped_trajectories = res.dropped_trajectories;
      break;
    }
    case Scenario::incomplete_ts:
      data.ts = envs::truncate_head_tail(data.ts, spec.head, spec.tail);
      break;
    case Scenario::example_based:
      data.ts = envs::truncate_head_tail(data.ts, 0, 1);
      break;
    case Scenario::standard:
    case Scenario::ablation:
      break;
  }
  return data;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const fs::path& out, bool force) {
  spec.validate();
  const PreparedData data = prepare_data(spec);
  prepare_out_dir(out, force);

  json manifest = json::parse(spec_json(spec));
  manifest["checksums"] = {{"task_agnostic", file_checksum(spec.ta_path)}};
  if (!spec.ts_path.empty()) manifest["checksums"]["task_specific"] = file_checksum(spec.ts_path);
  manifest["dropped_trajectories"] = data.dropped_trajectories;
  manifest["task_agnostic_steps"] = data.ta.total_steps();
  manifest["task_specific_steps"] = data.ts.total_steps();
  write_text(out / "manifest.json", manifest.dump(2) + "\n");

  ExperimentResult result;
  std::vector<CurveRow> rows;
  for (Method m : spec.methods) {
    for (auto seed : spec.seeds) {
      const fs::path dir = out / to_string(m) / ("seed_" + std::to_string(seed));
      MethodRun run = run_method(m, data.ta, data.ts, spec.config, seed, dir);
      write_weight_profile(run, data.ta, spec.expert_tag, dir / "weight_profile.csv");
      if (run.aborted) write_text(dir / "ABORTED", run.abort_reason + "\n");
      for (const auto& p : run.curve) rows.push_back({to_string(m), seed, p.step, p.success_rate, p.loss});
      result.runs.push_back(std::move(run));
    }
  }
  write_curves_csv(rows, out / "curves.csv");
  write_summary_csv(summarize(rows), out / "summary.csv");
  return result;
}

void run_ablation(const ExperimentSpec& spec, const fs::path& out, bool force) {
  if (spec.grid.empty()) throw Error("ablation grid is empty");
  spec.validate();
  prepare_out_dir(out, force);

  std::vector<std::string> keys;
  std::vector<std::vector<double>> values;
  for (const auto& [k, v] : spec.grid) {
    keys.push_back(k);
    values.push_back(v);
  }
  std::vector<std::size_t> idx(keys.size(), 0);
  std::ostringstream table;
  for (const auto& k : keys) table << k << ",";
  table << "method,n_seeds,final_success_mean,final_success_std,cell\n";

  for (int cell = 0;; ++cell) {
    ExperimentSpec cell_spec = spec;
    cell_spec.grid.clear();
    if (cell_spec.scenario == Scenario::ablation) cell_spec.scenario = Scenario::standard;
    std::vector<std::string> cell_values;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const std::string v = fmt(values[k][idx[k]]);
      set_config_field(cell_spec.config, keys[k], v);
      cell_values.push_back(v);
    }
    const std::string name = "cell_" + std::to_string(cell);
    run_experiment(cell_spec, out / name, true);
    for (const auto& row : summarize(read_curves_csv(out / name / "curves.csv"))) {
      for (const auto& v : cell_values) table << v << ",";
      table << row.method << "," << row.n_seeds << "," << fmt(row.final_success_mean) << ","
            << fmt(row.final_success_std) << "," << name << "\n";
    }
    std::size_t k = 0;
    while (k < keys.size() && ++idx[k] == values[k].size()) idx[k++] = 0;
    if (k == keys.size()) break;
  }
  write_text(out / "ablation_summary.csv", table.str());
  write_text(out / "manifest.json", spec_json(spec) + "\n");
}

// --- CSV ------------------------------------------------------------------------------------

std::string file_checksum(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<CurveRow> read_curves_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw ParseError(1, path.string() + ": empty file");
  const auto cols = csv_columns(line, {"method", "seed", "step", "success_rate"}, path);
  std::vector<CurveRow> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    auto at = [&](const std::string& name) -> const std::string& {
      const auto i = cols.at(name);
      if (i >= cells.size()) throw ParseError(lineno, path.string() + ": short row");
      return cells[i];
    };
    try {
      CurveRow r;
      r.method = at("method");
      r.seed = static_cast<std::uint64_t>(std::stoull(at("seed")));
      r.step = std::stoi(at("step"));
      r.success_rate = std::stod(at("success_rate"));
      if (cols.count("loss")) r.loss = std::stod(at("loss"));
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError(lineno, path.string() + ": malformed number");
    }
  }
  return rows;
}

void write_curves_csv(const std::vector<CurveRow>& rows, const fs::path& path) {
  std::ostringstream os;
  os << "method,seed,step,success_rate,loss\n";
  for (const auto& r : rows)
    os << r.method << "," << r.seed << "," << r.step << "," << fmt(r.success_rate) << "," << fmt(r.loss) << "\n";
  write_text(path, os.str());
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw Error("mean_std of an empty list");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<Series> aggregate_curves(const std::vector<CurveRow>& rows, std::string* note) {
  std::vector<std::string> methods;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);

  std::vector<Series> out;
  for (const auto& m : methods) {
    std::map<std::uint64_t, std::vector<std::pair<int, double>>> by_seed;
    for (const auto& r : rows)
      if (r.method == m) by_seed[r.seed].push_back({r.step, r.success_rate});
    const std::vector<std::pair<int, double>>* coarsest = nullptr;
    bool mismatch = false;
    for (auto& [seed, pts] : by_seed) {
      std::sort(pts.begin(), pts.end());
      if (coarsest && *coarsest != pts) {
        std::vector<int> a, b;
        for (auto& p : *coarsest) a.push_back(p.first);
        for (auto& p : pts) b.push_back(p.first);
        if (a != b) mismatch = true;
      }
      if (!coarsest || pts.size() < coarsest->size()) coarsest = &pts;
    }
    if (mismatch && note) *note += "method " + m + ": eval grids differ across seeds, resampled to the coarsest grid\n";

    Series s;
    s.label = m;
    for (const auto& [step, unused] : *coarsest) {
      std::vector<double> vals;
      for (const auto& [seed, pts] : by_seed) {
        // last value at or before `step`
        const std::pair<int, double>* hit = nullptr;
        for (const auto& p : pts)
          if (p.first <= step) hit = &p;
        if (hit) vals.push_back(hit->second);
      }
      if (vals.empty()) continue;
      const auto [mean, sd] = mean_std(vals);
      s.points.push_back({step, mean, sd, static_cast<int>(vals.size())});
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<CurveRow>& rows) {
  std::vector<SummaryRow> out;
  for (const auto& series : aggregate_curves(rows)) {
    SummaryRow r;
    r.method = series.label;
    std::map<std::uint64_t, std::pair<int, double>> last;
    for (const auto& row : rows) {
      if (row.method != series.label) continue;
      auto it = last.find(row.seed);
      if (it == last.end() || row.step >= it->second.first) last[row.seed] = {row.step, row.success_rate};
    }
    std::vector<double> finals;
    int final_step = 0;
    for (const auto& [seed, p] : last) {
      finals.push_back(p.second);
      final_step = std::max(final_step, p.first);
    }
    const auto [mean, sd] = mean_std(finals);
    r.n_seeds = static_cast<int>(finals.size());
    r.final_success_mean = mean;
    r.final_success_std = sd;
    r.final_step = final_step;
    out.push_back(r);
  }
  return out;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const fs::path& path) {
  std::ostringstream os;
  os << "method,n_seeds,final_step,final_success_mean,final_success_std\n";
  for (const auto& r : rows)
    os << r.method << "," << r.n_seeds << "," << r.final_step << "," << fmt(r.final_success_mean) << ","
       << fmt(r.final_success_std) << "\n";
  write_text(path, os.str());
}

// --- SVG ------------------------------------------------------------------------------------

std::string render_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label, bool log_y) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const double W = 640, H = 400, L = 70, R = 160, T = 40, B = 50;
  auto ty = [&](double y) { return log_y ? std::log10(std::max(y, 1e-12)) : y; };

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      xmin = std::min(xmin, static_cast<double>(p.step));
      xmax = std::max(xmax, static_cast<double>(p.step));
      ymin = std::min(ymin, ty(p.mean - p.std));
      ymax = std::max(ymax, ty(p.mean + p.std));
      ymin = std::min(ymin, ty(p.mean));
      ymax = std::max(ymax, ty(p.mean));
    }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax - ymin < 1e-9) ymin -= 0.5, ymax += 0.5;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - ymin) / (ymax - ymin) * (H - T - B); };
  auto pyt = [&](double t) { return H - B - (t - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yt = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(0) << xv
       << std::setprecision(2) << "</text>\n";
    const double label = log_y ? std::pow(10.0, yt) : yt;
    os << "<text x=\"" << L - 6 << "\" y=\"" << pyt(yt) + 4 << "\" text-anchor=\"end\">" << std::setprecision(log_y ? 1 : 2)
       << (log_y ? std::scientific : std::fixed) << label << std::fixed << std::setprecision(2) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2
     << ")\">" << y_label << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 8];
    if (s.points.empty()) continue;
    os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& p : s.points) os << px(p.step) << "," << py(p.mean + p.std) << " ";
    for (auto it = s.points.rbegin(); it != s.points.rend(); ++it) os << px(it->step) << "," << py(it->mean - it->std) << " ";
    os << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : s.points) os << px(p.step) << "," << py(p.mean) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (k + 1) << "\" fill=\"" << color << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_report(const std::vector<fs::path>& result_dirs, const fs::path& out) {
  if (result_dirs.empty()) throw Error("report: no result directories given");
  fs::create_directories(out);
  const bool prefix = result_dirs.size() > 1;

  std::vector<CurveRow> all;
  std::vector<Series> weight_series, monitor_series;
  std::string note;
  for (const auto& dir : result_dirs) {
    auto rows = read_curves_csv(dir / "curves.csv");
    const std::string tag = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    if (prefix)
      for (auto& r : rows) r.method = tag + ":" + r.method;
    all.insert(all.end(), rows.begin(), rows.end());

    for (const auto& method_dir : fs::directory_iterator(dir)) {
      if (!method_dir.is_directory()) continue;
      const std::string method = (prefix ? tag + ":" : std::string()) + method_dir.path().filename().string();
      std::map<int, std::vector<double>> expert_w, other_w;
      std::map<int, std::vector<double>> vmon;
      std::vector<fs::path> seeds;
      for (const auto& seed_dir : fs::directory_iterator(method_dir.path()))
        if (seed_dir.is_directory()) seeds.push_back(seed_dir.path());
      std::sort(seeds.begin(), seeds.end());
      for (const auto& sd : seeds) {
        if (fs::exists(sd / "weight_profile.csv")) {
          std::ifstream f(sd / "weight_profile.csv");
          std::string line;
          std::getline(f, line);
          const auto cols = csv_columns(line, {"step", "expert_mean_W", "other_mean_W"}, sd / "weight_profile.csv");
          while (std::getline(f, line)) {
            const auto c = split_csv_line(line);
            const int step = std::stoi(c[cols.at("step")]);
            const double e = std::stod(c[cols.at("expert_mean_W")]), o = std::stod(c[cols.at("other_mean_W")]);
            if (std::isfinite(e)) expert_w[step].push_back(e);
            if (std::isfinite(o)) other_w[step].push_back(o);
          }
        }
        if (fs::exists(sd / "vmonitor.csv")) {
          std::ifstream f(sd / "vmonitor.csv");
          std::string line;
          std::getline(f, line);
          const auto cols = csv_columns(line, {"step", "max_abs_V"}, sd / "vmonitor.csv");
          while (std::getline(f, line)) {
            const auto c = split_csv_line(line);
            const double v = std::stod(c[cols.at("max_abs_V")]);
            if (std::isfinite(v)) vmon[std::stoi(c[cols.at("step")])].push_back(v);
          }
        }
      }
      auto to_series = [](const std::string& label, const std::map<int, std::vector<double>>& m) {
        Series s;
        s.label = label;
        for (const auto& [step, vals] : m) {
          const auto [mean, sd] = mean_std(vals);
          s.points.push_back({step, mean, sd, static_cast<int>(vals.size())});
        }
        return s;
      };
      if (!expert_w.empty()) {
        weight_series.push_back(to_series(method + " expert", expert_w));
        weight_series.push_back(to_series(method + " other", other_w));
      }
      if (!vmon.empty()) monitor_series.push_back(to_series(method, vmon));
    }
  }

  const auto series = aggregate_curves(all, &note);
  if (!note.empty()) std::clog << note;
  std::ostringstream os;
  os << "method,step,n_seeds,success_mean,success_std\n";
  for (const auto& s : series)
    for (const auto& p : s.points)
      os << s.label << "," << p.step << "," << p.n << "," << fmt(p.mean) << "," << fmt(p.std) << "\n";
  write_text(out / "report_curves.csv", os.str());
  write_summary_csv(summarize(all), out / "summary.csv");
  write_text(out / "report.svg", render_svg(series, "Success rate (mean +- std over seeds)", "policy step", "success rate"));
  if (!weight_series.empty())
    write_text(out / "weights.svg", render_svg(weight_series, "Mean normalized weight by trajectory step", "trajectory step",
                                               "mean W"));
  if (!monitor_series.empty())
    write_text(out / "vmonitor.svg",
               render_svg(monitor_series, "Value monitor max|V|", "value step", "max |V|", /*log_y=*/true));
}

}  // namespace tailo::harness
