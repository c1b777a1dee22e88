#include "tailo/core_types.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tailo {

using json = nlohmann::json;

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

SourceTag SourceTag::parse(const std::string& text) {
  if (text == "expert") return {SourceKind::expert, {}};
  if (text == "random") return {SourceKind::random, {}};
  if (text == "other") return {SourceKind::other, {}};
  const std::string prefix = "scripted-direction-";
  if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size()) {
    return scripted(text.substr(prefix.size()));
  }
  throw Error("unknown source_tag '" + text + "'");
}

std::string SourceTag::str() const {
  switch (kind) {
    case SourceKind::expert: return "expert";
    case SourceKind::random: return "random";
    case SourceKind::scripted_direction: return "scripted-direction-" + direction;
    case SourceKind::other: return "other";
  }
  return "other";
}

std::string to_string(DatasetKind kind) {
  return kind == DatasetKind::task_specific ? "task_specific" : "task_agnostic";
}

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "task_specific") return DatasetKind::task_specific;
  if (text == "task_agnostic") return DatasetKind::task_agnostic;
  throw Error("unknown dataset kind '" + text + "'");
}

Vector NormStats::normalize(const Vector& s) const {
  if (s.size() != mean.size()) throw DimensionError("normalize: state dimension mismatch");
  return (s - mean).cwiseQuotient(std);
}

Matrix NormStats::normalize_rows(const Matrix& states) const {
  if (states.cols() != mean.size()) throw DimensionError("normalize: state dimension mismatch");
  Matrix out = states.rowwise() - mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

Vector normalize_state(const Vector& s, const NormStats& stats) { return stats.normalize(s); }

std::size_t Dataset::total_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += static_cast<std::size_t>(t.size());
  return n;
}

const Trajectory& Dataset::by_id(std::int64_t id) const {
  for (const auto& t : trajectories)
    if (t.id == id) return t;
  throw Error("no trajectory with id " + std::to_string(id));
}

NormStats compute_norm_stats(const Dataset& dataset) {
  const int d = dataset.state_dim;
  NormStats stats{Vector::Zero(d), Vector::Ones(d)};
  const auto n = dataset.total_steps();
  if (n == 0) return stats;
  for (const auto& t : dataset.trajectories) stats.mean += t.states.colwise().sum().transpose();
  stats.mean /= static_cast<double>(n);
  Vector var = Vector::Zero(d);
  for (const auto& t : dataset.trajectories) {
    var += (t.states.rowwise() - stats.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  var /= static_cast<double>(n);
  for (int i = 0; i < d; ++i) {
    const double sd = std::sqrt(var[i]);
    stats.std[i] = (sd > 1e-12 && std::isfinite(sd)) ? sd : 1.0;
  }
  return stats;
}

Dataset make_dataset(DatasetKind kind, int state_dim, int action_dim, std::vector<Trajectory> trajectories) {
  if (state_dim < 1) throw DimensionError("state_dim must be >= 1");
  if (kind == DatasetKind::task_specific && action_dim != 0)
    throw DimensionError("task-specific datasets carry no actions (action_dim must be 0)");
  if (kind == DatasetKind::task_agnostic && action_dim < 1)
    throw DimensionError("task-agnostic datasets need action_dim >= 1");
  for (const auto& t : trajectories) {
    const auto id = std::to_string(t.id);
    if (t.states.rows() < 1) throw DimensionError("trajectory " + id + " has no states");
    if (t.states.cols() != state_dim) throw DimensionError("trajectory " + id + ": state dimension mismatch");
    if (!t.states.allFinite()) throw DimensionError("trajectory " + id + ": non-finite state");
    if (kind == DatasetKind::task_specific && t.actions)
      throw DimensionError("trajectory " + id + ": task-specific trajectory carries actions");
    if (kind == DatasetKind::task_agnostic) {
      if (!t.actions) throw DimensionError("trajectory " + id + ": missing actions");
      if (t.actions->rows() != t.states.rows() || t.actions->cols() != action_dim)
        throw DimensionError("trajectory " + id + ": action shape mismatch");
      if (!t.actions->allFinite()) throw DimensionError("trajectory " + id + ": non-finite action");
    }
    if (t.successors) {
      if (t.successors->states.rows() != t.states.rows() || t.successors->states.cols() != state_dim ||
          static_cast<Eigen::Index>(t.successors->known.size()) != t.states.rows())
        throw DimensionError("trajectory " + id + ": next_states shape mismatch");
    }
  }
  Dataset ds;
  ds.kind = kind;
  ds.state_dim = state_dim;
  ds.action_dim = action_dim;
  ds.trajectories = std::move(trajectories);
  ds.norm = compute_norm_stats(ds);
  return ds;
}

// --- serialization ----------------------------------------------------------

namespace {

void append_real(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_row(std::string& out, const Matrix& m, Eigen::Index r) {
  out += '[';
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    if (c) out += ',';
    append_real(out, m(r, c));
  }
  out += ']';
}

void append_rows(std::string& out, const Matrix& m) {
  out += '[';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) out += ',';
    append_row(out, m, r);
  }
  out += ']';
}

Matrix rows_from_json(const json& arr, std::size_t line, std::int64_t traj, const std::string& field) {
  if (!arr.is_array()) throw ParseError(line, "'" + field + "' must be an array");
  const auto n = arr.size();
  if (n == 0) return Matrix(0, 0);
  if (!arr[0].is_array()) throw ParseError(line, "'" + field + "' must be an array of arrays");
  const auto d = arr[0].size();
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = arr[r];
    if (!row.is_array()) throw ParseError(line, "'" + field + "' must be an array of arrays");
    if (row.size() != d) throw DimensionError("trajectory " + std::to_string(traj) + " (line " + std::to_string(line) +
                           "): ragged '" + field + "' rows");
    for (std::size_t c = 0; c < d; ++c) {
      if (!row[c].is_number()) throw ParseError(line, "'" + field + "' entries must be numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  return m;
}

}  // namespace

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  out += "{\"kind\":\"" + to_string(dataset.kind) + "\",\"state_dim\":" + std::to_string(dataset.state_dim) +
         ",\"action_dim\":" + std::to_string(dataset.action_dim) +
         ",\"count\":" + std::to_string(dataset.trajectories.size()) + "}\n";
  for (const auto& t : dataset.trajectories) {
    out += "{\"id\":" + std::to_string(t.id) + ",\"source_tag\":\"" + t.source.str() + "\",\"states\":";
    append_rows(out, t.states);
    if (t.actions) {
      out += ",\"actions\":";
      append_rows(out, *t.actions);
    }
    if (t.successors) {
      out += ",\"next_states\":[";
      for (Eigen::Index r = 0; r < t.states.rows(); ++r) {
        if (r) out += ',';
        if (t.successors->known[static_cast<std::size_t>(r)])
          append_row(out, t.successors->states, r);
        else
          out += "null";
      }
      out += ']';
    }
    out += "}\n";
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  json header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      header = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed header: ") + e.what());
    }
    break;
  }
  if (!header.is_object()) throw ParseError(lineno == 0 ? 1 : lineno, "missing header object");
  DatasetKind kind;
  int state_dim = 0, action_dim = 0;
  std::size_t count = 0;
  try {
    kind = parse_dataset_kind(header.at("kind").get<std::string>());
    state_dim = header.at("state_dim").get<int>();
    action_dim = header.at("action_dim").get<int>();
    count = header.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(lineno, std::string("bad header: ") + e.what());
  }

  std::vector<Trajectory> trajs;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed trajectory: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("states")) throw ParseError(lineno, "trajectory object needs 'states'");
    Trajectory t;
    // ids are assigned by file order; a stored id is informational
    t.id = static_cast<std::int64_t>(trajs.size());
    try {
      t.source = SourceTag::parse(obj.value("source_tag", std::string("other")));
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
    t.states = rows_from_json(obj.at("states"), lineno, t.id, "states");
    if (t.states.rows() > 0 && t.states.cols() != state_dim)
      throw DimensionError("trajectory " + std::to_string(t.id) + " (line " + std::to_string(lineno) +
                           "): state has " + std::to_string(t.states.cols()) + " dims, header says " +
                           std::to_string(state_dim));
    if (obj.contains("actions")) t.actions = rows_from_json(obj.at("actions"), lineno, t.id, "actions");
    if (obj.contains("next_states")) {
      const auto& arr = obj.at("next_states");
      if (!arr.is_array()) throw ParseError(lineno, "'next_states' must be an array");
      Successors succ;
      succ.states = Matrix::Zero(static_cast<Eigen::Index>(arr.size()), state_dim);
      succ.known.assign(arr.size(), 0);
      for (std::size_t r = 0; r < arr.size(); ++r) {
        if (arr[r].is_null()) continue;
        if (!arr[r].is_array() || arr[r].size() != static_cast<std::size_t>(state_dim))
          throw DimensionError("trajectory " + std::to_string(t.id) + ": next_states row has wrong dimension");
        for (int c = 0; c < state_dim; ++c) succ.states(static_cast<Eigen::Index>(r), c) = arr[r][c].get<double>();
        succ.known[r] = 1;
      }
      t.successors = std::move(succ);
    }
    trajs.push_back(std::move(t));
  }
  if (trajs.size() != count)
    throw ParseError(lineno, "header count " + std::to_string(count) + " but " + std::to_string(trajs.size()) +
                                 " trajectories");
  return make_dataset(kind, state_dim, action_dim, std::move(trajs));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset " + path.string());
  out << serialize_dataset(dataset);
  if (!out) throw Error("write failed for " + path.string());
}

// --- flattened pairs ---------------------------------------------------------------

FlatPairs flatten(const Dataset& dataset) {
  FlatPairs flat;
  const auto n = static_cast<Eigen::Index>(dataset.total_steps());
  flat.states.resize(n, dataset.state_dim);
  flat.actions.resize(n, dataset.action_dim);
  flat.refs.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (std::size_t ti = 0; ti < dataset.trajectories.size(); ++ti) {
    const auto& t = dataset.trajectories[ti];
    flat.states.middleRows(row, t.size()) = t.states;
    if (dataset.action_dim > 0) flat.actions.middleRows(row, t.size()) = *t.actions;
    for (Eigen::Index s = 0; s < t.size(); ++s) flat.refs.push_back({ti, s});
    row += t.size();
  }
  return flat;
}

MinibatchSampler::MinibatchSampler(const FlatPairs& pairs, std::uint64_t seed) : pairs_(&pairs), rng_(seed) {
  if (pairs.size() == 0) throw Error("cannot sample minibatches from an empty dataset");
}

std::vector<std::size_t> MinibatchSampler::next_indices(int batch) {
  if (batch < 1) throw Error("batch size must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, pairs_->size() - 1);
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = pick(rng_);
  return idx;
}

Minibatch MinibatchSampler::next(int batch) {
  Minibatch mb;
  mb.index = next_indices(batch);
  mb.states.resize(batch, pairs_->states.cols());
  mb.actions.resize(batch, pairs_->actions.cols());
  for (int r = 0; r < batch; ++r) {
    const auto i = static_cast<Eigen::Index>(mb.index[static_cast<std::size_t>(r)]);
    mb.states.row(r) = pairs_->states.row(i);
    if (pairs_->actions.cols() > 0) mb.actions.row(r) = pairs_->actions.row(i);
  }
  return mb;
}

// --- config ------------------------------------------------------------------------

std::string to_string(LossVariant v) { return v == LossVariant::nnpu ? "nnpu" : "paper-literal"; }

LossVariant parse_loss_variant(const std::string& text) {
  if (text == "nnpu") return LossVariant::nnpu;
  if (text == "paper-literal" || text == "paper_literal") return LossVariant::paper_literal;
  throw Error("unknown loss variant '" + text + "' (expected nnpu or paper-literal)");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error("config: " + m); };
  if (!(beta1 > 0.0 && beta1 < 1.0)) fail("beta1 must lie in (0,1)");
  if (beta2 != 0.0 && beta2 != 1.0) fail("beta2 must be 0 or 1");
  if (!(eta_p >= 0.0 && eta_p <= 1.0)) fail("eta_p must lie in [0,1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0,1)");
  if (!(gamma_value >= 0.0 && gamma_value < 1.0)) fail("gamma_value must lie in [0,1)");
  if (!std::isfinite(alpha)) fail("alpha must be finite");
  if (lr_disc <= 0 || lr_policy <= 0 || lr_value <= 0) fail("learning rates must be positive");
  if (weight_decay_policy < 0) fail("weight_decay_policy must be >= 0");
  if (steps_pretrain < 0 || steps_formal < 0 || steps_bc < 0 || steps_value < 0) fail("step counts must be >= 0");
  if (batch_disc < 1 || batch_bc < 1 || batch_value < 1) fail("batch sizes must be >= 1");
  if (grad_penalty_coef < 0) fail("grad_penalty_coef must be >= 0");
  if (!(logit_clamp > 0)) fail("logit_clamp must be positive");
  if (hidden < 1) fail("hidden must be >= 1");
  if (monitor_interval < 1 || eval_interval < 1) fail("intervals must be >= 1");
  if (eval_episodes < 1) fail("eval_episodes must be >= 1");
  if (!(eval_start_jitter >= 0.0)) fail("eval_start_jitter must be >= 0");
  if (checkpoint_interval < 0) fail("checkpoint_interval must be >= 0");
}

}  // namespace tailo
