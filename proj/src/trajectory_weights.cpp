#include "tailo/trajectory_weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace tailo::weights {

Vector discounted_tail_sum(std::span<const double> terms, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("gamma must lie in [0, 1)");
  const auto n = static_cast<Eigen::Index>(terms.size());
  if (n == 0) throw Error("cannot weight an empty trajectory");
  Vector w(n);
  w[n - 1] = terms[static_cast<std::size_t>(n - 1)] / (1.0 - gamma);
  for (Eigen::Index i = n - 1; i-- > 0;) w[i] = terms[static_cast<std::size_t>(i)] + gamma * w[i + 1];
  return w;
}

Vector compute_weights(std::span<const double> rewards, double alpha, double gamma) {
  std::vector<double> e(rewards.size());
  std::transform(rewards.begin(), rewards.end(), e.begin(), [alpha](double r) { return std::exp(alpha * r); });
  return discounted_tail_sum(e, gamma);
}

Vector brute_force_weights(std::span<const double> rewards, double alpha, double gamma, long horizon) {
  const auto n = static_cast<long>(rewards.size());
  Vector w = Vector::Zero(n);
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    double g = 1.0;
    for (long j = 0; j <= horizon; ++j) {
      const long k = std::min(i + j, n - 1);
      acc += g * std::exp(alpha * rewards[static_cast<std::size_t>(k)]);
      g *= gamma;
    }
    w[i] = acc;
  }
  return w;
}

std::size_t WeightTable::total_steps() const {
  std::size_t n = 0;
  for (const auto& r : raw) n += static_cast<std::size_t>(r.size());
  return n;
}

WeightTable table_from_raw(std::vector<std::int64_t> ids, std::vector<Vector> raw, bool normalize) {
  WeightTable t;
  t.ids = std::move(ids);
  t.raw = std::move(raw);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : t.raw) {
    sum += r.sum();
    count += static_cast<std::size_t>(r.size());
  }
  t.z = count > 0 ? sum / static_cast<double>(count) : 1.0;
  t.is_normalized = normalize;
  t.normalized.reserve(t.raw.size());
  for (const auto& r : t.raw) t.normalized.push_back(normalize ? Vector(r / t.z) : r);
  return t;
}

WeightTable build_weight_table(const pu::RewardField& field, const Dataset& ta, double alpha, double gamma,
                               bool normalize, Transform transform) {
  std::vector<std::int64_t> ids;
  std::vector<Vector> raw;
  for (std::size_t ti = 0; ti < ta.trajectories.size(); ++ti) {
    const auto& traj = ta.trajectories[ti];
    if (ti >= field.ids.size() || field.ids[ti] != traj.id)
      throw Error("reward field is missing trajectory " + std::to_string(traj.id) + " (step 0)");
    const Vector& r = field.values[ti];
    if (r.size() < traj.size())
      throw Error("reward field is missing (trajectory " + std::to_string(traj.id) + ", step " +
                  std::to_string(r.size()) + ")");
    std::vector<double> terms(static_cast<std::size_t>(traj.size()));
    for (Eigen::Index s = 0; s < traj.size(); ++s) {
      terms[static_cast<std::size_t>(s)] = transform == Transform::exp_alpha_r
                                               ? std::exp(alpha * r[s])
                                               : 10.0 / (1.0 + std::exp(-r[s]));
    }
    ids.push_back(traj.id);
    raw.push_back(discounted_tail_sum(terms, gamma));
  }
  return table_from_raw(std::move(ids), std::move(raw), normalize);
}

WeightTable uniform_table(const Dataset& ta) {
  std::vector<std::int64_t> ids;
  std::vector<Vector> raw;
  for (const auto& t : ta.trajectories) {
    ids.push_back(t.id);
    raw.push_back(Vector::Ones(t.size()));
  }
  return table_from_raw(std::move(ids), std::move(raw), false);
}

void write_weight_csv(const WeightTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "trajectory_id,step,raw_W,normalized_W\n";
  char buf[96];
  for (std::size_t i = 0; i < table.ids.size(); ++i)
    for (Eigen::Index s = 0; s < table.raw[i].size(); ++s) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", table.raw[i][s], table.normalized[i][s]);
      out << table.ids[i] << ',' << s << ',' << buf << '\n';
    }
}

}  // namespace tailo::weights
