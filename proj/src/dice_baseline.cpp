#include "tailo/dice_baseline.hpp"

#include "tailo/nn/adam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace tailo::dice {

namespace {

constexpr double kExponentCap = 50.0;

Matrix all_value_states(const Dataset& ta) {
  std::vector<const Matrix*> blocks;
  Eigen::Index rows = 0;
  for (const auto& t : ta.trajectories) rows += t.size();
  for (const auto& t : ta.trajectories)
    if (t.successors)
      for (char k : t.successors->known) rows += k ? 1 : 0;
  Matrix out(rows, ta.state_dim);
  Eigen::Index r = 0;
  for (const auto& t : ta.trajectories) {
    out.middleRows(r, t.size()) = t.states;
    r += t.size();
    if (t.successors)
      for (Eigen::Index s = 0; s < t.size(); ++s)
        if (t.successors->known[static_cast<std::size_t>(s)]) out.row(r++) = t.successors->states.row(s);
  }
  return out;
}

Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace

TransitionSet build_transitions(const Dataset& ta, const pu::RewardField& field) {
  const auto n = static_cast<Eigen::Index>(ta.total_steps());
  TransitionSet ts;
  ts.states.resize(n, ta.state_dim);
  ts.next_states.resize(n, ta.state_dim);
  ts.rewards.resize(n);
  ts.initial_states.resize(static_cast<Eigen::Index>(ta.trajectories.size()), ta.state_dim);
  Eigen::Index row = 0;
  for (std::size_t ti = 0; ti < ta.trajectories.size(); ++ti) {
    const auto& t = ta.trajectories[ti];
    if (ti >= field.ids.size() || field.ids[ti] != t.id || field.values[ti].size() < t.size())
      throw Error("reward field does not cover trajectory " + std::to_string(t.id));
    ts.initial_states.row(static_cast<Eigen::Index>(ti)) = t.states.row(0);
    for (Eigen::Index s = 0; s < t.size(); ++s, ++row) {
      ts.states.row(row) = t.states.row(s);
      ts.rewards[row] = field.values[ti][s];
      if (t.successors) {
        ts.next_states.row(row) = t.successors->known[static_cast<std::size_t>(s)] ? t.successors->states.row(s)
                                                                                     : t.states.row(s);
      } else {
        ts.next_states.row(row) = s + 1 < t.size() ? t.states.row(s + 1) : t.states.row(s);
      }
      ts.refs.push_back({ti, s});
    }
  }
  return ts;
}

Vector ValueNet::values(const Matrix& raw_states) const {
  return net.forward(input_norm.normalize_rows(raw_states)).col(0);
}

KlLoss smodice_kl_loss(const Vector& v_initial, const Vector& v_states, const Vector& v_next, const Vector& rewards,
                       double gamma) {
  if (v_initial.size() == 0 || v_states.size() == 0) throw Error("smodice_kl_loss: empty batch");
  if (v_next.size() != v_states.size() || rewards.size() != v_states.size())
    throw DimensionError("smodice_kl_loss: transition batch size mismatch");
  const Vector e = rewards + gamma * v_next - v_states;
  const double m = e.maxCoeff();
  const Vector shifted = (e.array() - m).exp().matrix();
  const double mean_exp = shifted.mean();
  KlLoss out;
  out.value = (1.0 - gamma) * v_initial.mean() + m + std::log(mean_exp);
  if (!std::isfinite(out.value) || !std::isfinite(m)) throw NumericError("smodice_kl_loss: overflow");
  const Vector soft = shifted / shifted.sum();
  out.grad_initial = Vector::Constant(v_initial.size(), (1.0 - gamma) / static_cast<double>(v_initial.size()));
  out.grad_states = -soft;
  out.grad_next = gamma * soft;
  return out;
}

ValueNet train_value(const Dataset& ta, const pu::RewardField& field, const RunConfig& config, Rng& rng) {
  if (ta.trajectories.empty()) throw Error("train_value: empty dataset");
  const TransitionSet data = build_transitions(ta, field);
  const Matrix s_norm = ta.norm.normalize_rows(data.states);
  const Matrix sn_norm = ta.norm.normalize_rows(data.next_states);
  const Matrix s0_norm = ta.norm.normalize_rows(data.initial_states);
  const Matrix monitor_states = all_value_states(ta);

  ValueNet v;
  v.gamma = config.gamma_value;
  v.input_norm = ta.norm;
  v.net = nn::Mlp::init(nn::mlp_shape(ta.state_dim, config.hidden, 1), nn::Activation::relu, nn::Head::scalar_logit,
                        rng);
  auto record = [&](int step) {
    const Vector vals = v.values(monitor_states);
    v.monitor.push_back({step, vals.cwiseAbs().maxCoeff(), vals.minCoeff(), vals.maxCoeff()});
  };
  record(0);

  nn::AdamState adam;
  std::uniform_int_distribution<Eigen::Index> pick(0, data.states.rows() - 1);
  std::uniform_int_distribution<Eigen::Index> pick0(0, data.initial_states.rows() - 1);
  const int B = config.batch_value;
  for (int step = 0; step < config.steps_value; ++step) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(B)), idx0(static_cast<std::size_t>(B));
    for (auto& i : idx) i = pick(rng);
    for (auto& i : idx0) i = pick0(rng);
    const Matrix xs = gather(s_norm, idx);
    const Matrix xn = gather(sn_norm, idx);
    const Matrix x0 = gather(s0_norm, idx0);
    Vector r(B);
    for (int b = 0; b < B; ++b) r[b] = data.rewards[idx[static_cast<std::size_t>(b)]];

    try {
      if (!v.net.all_finite()) throw NumericError("non-finite value parameters");
      nn::ForwardCache cs, cn, c0;
      const Vector vs = v.net.forward(xs, &cs).col(0);
      const Vector vn = v.net.forward(xn, &cn).col(0);
      const Vector v0 = v.net.forward(x0, &c0).col(0);
      const auto loss = smodice_kl_loss(v0, vs, vn, r, v.gamma);
      auto grads = v.net.backward(cs, Matrix(loss.grad_states));
      grads.add(v.net.backward(cn, Matrix(loss.grad_next)));
      grads.add(v.net.backward(c0, Matrix(loss.grad_initial)));
      const auto refs = grads.refs();
      nn::adam_step(v.net.parameters(), refs, adam, config.lr_value, 0.0);
    } catch (const NumericError&) {
      v.divergence_steps.push_back(step);
      v.monitor.push_back({step, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity()});
      return v;
    }
    const int done = step + 1;
    if (done % config.monitor_interval == 0 || done == config.steps_value) {
      if (v.net.all_finite()) {
        record(done);
      } else {
        v.divergence_steps.push_back(done);
        v.monitor.push_back({done, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity()});
        return v;
      }
    }
  }
  return v;
}

DiceWeights extract_dice_weights(const ValueNet& v, const Dataset& ta, const pu::RewardField& field) {
  DiceWeights out;
  std::vector<std::int64_t> ids;
  std::vector<Vector> raw;
  for (std::size_t ti = 0; ti < ta.trajectories.size(); ++ti) {
    const auto& t = ta.trajectories[ti];
    if (ti >= field.ids.size() || field.ids[ti] != t.id || field.values[ti].size() < t.size())
      throw Error("reward field does not cover trajectory " + std::to_string(t.id));
    const Vector vs = v.values(t.states);
    Vector w(t.size());
    std::vector<char> computable(static_cast<std::size_t>(t.size()), 0);
    Vector vn = Vector::Zero(t.size());
    if (t.successors) {
      for (Eigen::Index s = 0; s < t.size(); ++s)
        if (t.successors->known[static_cast<std::size_t>(s)]) {
          vn[s] = v.values(t.successors->states.row(s)).value();
          computable[static_cast<std::size_t>(s)] = 1;
        }
    } else {
      for (Eigen::Index s = 0; s + 1 < t.size(); ++s) {
        vn[s] = vs[s + 1];
        computable[static_cast<std::size_t>(s)] = 1;
      }
    }
    double last = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index s = 0; s < t.size(); ++s) {
      double exponent;
      if (computable[static_cast<std::size_t>(s)]) {
        exponent = field.values[ti][s] + v.gamma * vn[s] - vs[s];
      } else if (std::isfinite(last)) {
        w[s] = last;
        continue;
      } else {
        exponent = field.values[ti][s] + (v.gamma - 1.0) * vs[s];  // absorbing
      }
      if (!(exponent <= kExponentCap)) {
        exponent = kExponentCap;
        ++out.overflow_count;
      }
      w[s] = std::exp(exponent);
      last = w[s];
    }
    ids.push_back(t.id);
    raw.push_back(std::move(w));
  }
  out.table = weights::table_from_raw(std::move(ids), std::move(raw), true);
  return out;
}

void write_monitor_csv(const ValueNet& v, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,max_abs_V,min_V,max_V\n";
  char buf[128];
  for (const auto& m : v.monitor) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g", m.step, m.max_abs_v, m.min_v, m.max_v);
    out << buf << '\n';
  }
}

}  // namespace tailo::dice
