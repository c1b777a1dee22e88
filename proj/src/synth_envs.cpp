#include "tailo/synth_envs.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

namespace tailo::envs {

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

Matrix clip_actions(Matrix a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

}  // namespace

Vector PointmazeEnv::initial_state() { return Vector::Zero(kStateDim); }

Vector PointmazeEnv::step(const Vector& state, const Vector& action) {
  Vector next(kStateDim);
  for (int i = 0; i < 2; ++i) {
    const double a = std::clamp(action[i], -1.0, 1.0);
    const double v = std::clamp(state[2 + i] + kGain * a, -1.0, 1.0);
    next[2 + i] = v;
    next[i] = state[i] + kDt * v;
  }
  return next;
}

Vector direction_vector(const std::string& dir) {
  Vector d = Vector::Zero(2);
  if (dir == "L") d << -1.0, 0.0;
  else if (dir == "R") d << 1.0, 0.0;
  else if (dir == "U") d << 0.0, 1.0;
  else if (dir == "D") d << 0.0, -1.0;
  else throw Error("unknown direction '" + dir + "'");
  return d;
}

Dataset gen_pointmaze(int n_per_direction, double noise_std, std::uint64_t seed) {
  if (n_per_direction < 1) throw Error("gen_pointmaze: n_per_direction must be >= 1");
  if (noise_std < 0) throw Error("gen_pointmaze: noise_std must be >= 0");
  std::vector<Trajectory> trajs;
  std::int64_t id = 0;
  for (const auto& dir : pointmaze_directions()) {
    const Vector d = direction_vector(dir);
    for (int k = 0; k < n_per_direction; ++k, ++id) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
      std::normal_distribution<double> noise(0.0, 1.0);
      Trajectory t;
      t.id = id;
      t.source = SourceTag::scripted(dir);
      t.states.resize(PointmazeEnv::kHorizon, PointmazeEnv::kStateDim);
      t.actions = Matrix(PointmazeEnv::kHorizon, PointmazeEnv::kActionDim);
      Vector s = PointmazeEnv::initial_state();
      for (int step = 0; step < PointmazeEnv::kHorizon; ++step) {
        Vector a = d;
        if (noise_std > 0) {
          a[0] += noise_std * noise(rng);
          a[1] += noise_std * noise(rng);
        }
        a = a.cwiseMax(-1.0).cwiseMin(1.0);
        t.states.row(step) = s.transpose();
        t.actions->row(step) = a.transpose();
        s = PointmazeEnv::step(s, a);
      }
      trajs.push_back(std::move(t));
    }
  }
  return make_dataset(DatasetKind::task_agnostic, PointmazeEnv::kStateDim, PointmazeEnv::kActionDim, std::move(trajs));
}

Dataset gen_chain(int n_states, int n_trajectories, std::uint64_t /*seed*/) {
  if (n_states < 3) throw Error("gen_chain: need at least 3 states");
  if (n_trajectories < 1) throw Error("gen_chain: need at least one trajectory");
  // The walk is deterministic; the seed is accepted for interface symmetry.
  std::vector<Trajectory> trajs;
  const double span = static_cast<double>(n_states - 1);
  for (int k = 0; k < n_trajectories; ++k) {
    Trajectory t;
    t.id = k;
    t.source = SourceTag::scripted("R");
    t.states.resize(n_states, 1);
    t.actions = Matrix::Ones(n_states, 1);
    Successors succ;
    succ.states.resize(n_states, 1);
    succ.known.assign(static_cast<std::size_t>(n_states), 1);
    for (int i = 0; i < n_states; ++i) {
      t.states(i, 0) = i / span;
      succ.states(i, 0) = ((i + 1) % n_states) / span;
    }
    t.successors = std::move(succ);
    trajs.push_back(std::move(t));
  }
  return make_dataset(DatasetKind::task_agnostic, 1, 1, std::move(trajs));
}

Dataset make_task_specific_examples(const Dataset& dataset, const std::string& tag, ExampleMode mode) {
  const SourceTag want = SourceTag::parse(tag);
  std::vector<Trajectory> out;
  for (const auto& t : dataset.trajectories) {
    if (!(t.source == want)) continue;
    Trajectory c;
    c.id = static_cast<std::int64_t>(out.size());
    c.source = t.source;
    c.states = mode == ExampleMode::full ? t.states : Matrix(t.states.bottomRows(1));
    out.push_back(std::move(c));
  }
  if (out.empty()) throw Error("no trajectory tagged '" + tag + "'");
  return make_dataset(DatasetKind::task_specific, dataset.state_dim, 0, std::move(out));
}

CorruptionResult corrupt_remove_every_x(const Dataset& dataset, int x) {
  if (x < 2) throw Error("corrupt_remove_every_x: x must be >= 2");
  CorruptionResult res;
  std::vector<Trajectory> out;
  const bool keep_successors = dataset.kind == DatasetKind::task_agnostic;
  for (const auto& t : dataset.trajectories) {
    const auto n = t.size();
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < n; ++i)
      if ((i + 1) % x != 0) kept.push_back(i);
    res.removed_pairs += static_cast<std::size_t>(n) - kept.size();
    if (kept.empty()) {
      ++res.dropped_trajectories;
      continue;
    }
    Trajectory c;
    c.id = static_cast<std::int64_t>(out.size());
    c.source = t.source;
    const auto m = static_cast<Eigen::Index>(kept.size());
    c.states.resize(m, t.states.cols());
    if (t.actions) c.actions = Matrix(m, t.actions->cols());
    Successors succ;
    succ.states = Matrix::Zero(m, t.states.cols());
    succ.known.assign(static_cast<std::size_t>(m), 0);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto i = kept[static_cast<std::size_t>(r)];
      c.states.row(r) = t.states.row(i);
      if (t.actions) c.actions->row(r) = t.actions->row(i);
      if (t.successors) {
        succ.known[static_cast<std::size_t>(r)] = t.successors->known[static_cast<std::size_t>(i)];
        succ.states.row(r) = t.successors->states.row(i);
      } else if (i + 1 < n) {
        succ.known[static_cast<std::size_t>(r)] = 1;
        succ.states.row(r) = t.states.row(i + 1);
      }
    }
    if (keep_successors) c.successors = std::move(succ);
    out.push_back(std::move(c));
  }
  res.dataset = make_dataset(dataset.kind, dataset.state_dim, dataset.action_dim, std::move(out));
  return res;
}

Dataset truncate_head_tail(const Dataset& dataset, int head, int tail) {
  if (head < 0 || tail < 0 || head + tail < 1) throw Error("truncate_head_tail: need head, tail >= 0 and head + tail >= 1");
  std::vector<Trajectory> out;
  auto push = [&](const Trajectory& src, Eigen::Index start, Eigen::Index len) {
    Trajectory c;
    c.id = static_cast<std::int64_t>(out.size());
    c.source = src.source;
    c.states = src.states.middleRows(start, len);
    if (src.actions) c.actions = Matrix(src.actions->middleRows(start, len));
    out.push_back(std::move(c));
  };
  for (const auto& t : dataset.trajectories) {
    const auto n = t.size();
    if (head + tail >= n) {
      push(t, 0, n);
      continue;
    }
    if (head > 0) push(t, 0, head);
    if (tail > 0) push(t, n - tail, tail);
  }
  return make_dataset(dataset.kind, dataset.state_dim, dataset.action_dim, std::move(out));
}

RolloutResult rollout(const Controller& policy, const PointmazeEnv& env, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw Error("rollout: n_episodes must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(-env.start_jitter, env.start_jitter);
  Matrix states = Matrix::Zero(n_episodes, PointmazeEnv::kStateDim);
  std::uniform_real_distribution<double> vjitter(-env.velocity_jitter, env.velocity_jitter);
  for (int e = 0; e < n_episodes; ++e) {
    if (env.start_jitter > 0) {
      states(e, 0) = jitter(rng);
      states(e, 1) = jitter(rng);
    }
    if (env.velocity_jitter > 0) {
      states(e, 2) = vjitter(rng);
      states(e, 3) = vjitter(rng);
    }
  }
  RolloutResult res;
  res.returns.assign(static_cast<std::size_t>(n_episodes), 0.0);
  res.successes.assign(static_cast<std::size_t>(n_episodes), 0);
  std::vector<char> alive(static_cast<std::size_t>(n_episodes), 1);
  for (int step = 0; step < PointmazeEnv::kHorizon; ++step) {
    Matrix actions;
    try {
      actions = policy(states);
    } catch (const NumericError&) {
      actions = Matrix::Constant(n_episodes, PointmazeEnv::kActionDim, std::numeric_limits<double>::quiet_NaN());
    }
    for (int e = 0; e < n_episodes; ++e) {
      auto ei = static_cast<std::size_t>(e);
      if (!alive[ei]) continue;
      const Vector a = actions.row(e).transpose();
      if (!a.allFinite()) {
        alive[ei] = 0;
        res.successes[ei] = 0;
        res.returns[ei] = 0.0;
        continue;
      }
      const Vector next = PointmazeEnv::step(states.row(e).transpose(), a);
      if (!next.allFinite()) {
        alive[ei] = 0;
        res.successes[ei] = 0;
        res.returns[ei] = 0.0;
        continue;
      }
      states.row(e) = next.transpose();
      if (PointmazeEnv::success(next)) {
        res.successes[ei] = 1;
        res.returns[ei] += 1.0;
      }
    }
  }
  int ok = 0;
  for (char s : res.successes) ok += s ? 1 : 0;
  res.success_rate = static_cast<double>(ok) / n_episodes;
  return res;
}

Controller scripted_controller(const std::string& dir, double noise_std, std::uint64_t seed) {
  const Vector d = direction_vector(dir);
  auto rng = std::make_shared<Rng>(seed);
  return [d, noise_std, rng](const Matrix& states) {
    Matrix a(states.rows(), 2);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index r = 0; r < states.rows(); ++r) {
      a(r, 0) = d[0] + (noise_std > 0 ? noise_std * noise(*rng) : 0.0);
      a(r, 1) = d[1] + (noise_std > 0 ? noise_std * noise(*rng) : 0.0);
    }
    return clip_actions(a);
  };
}

Controller random_controller(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const Matrix& states) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix a(states.rows(), 2);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      a(r, 0) = u(*rng);
      a(r, 1) = u(*rng);
    }
    return a;
  };
}

}  // namespace tailo::envs
