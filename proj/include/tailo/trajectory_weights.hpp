#pragma once

#include "tailo/core_types.hpp"
#include "tailo/pu_discriminator.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace tailo::weights {

/// Reverse scan of W_i = sum_j gamma^j exp(alpha R_{min(i+j, n)}):
///   W_n = e_n / (1 - gamma),  W_i = e_i + gamma W_{i+1},  e_i = exp(alpha R_i).
/// Throws Error when gamma is outside [0, 1) or R is empty.
Vector compute_weights(std::span<const double> rewards, double alpha, double gamma);

/// Same recursion with caller-supplied per-step terms e_i (must be > 0).
Vector discounted_tail_sum(std::span<const double> terms, double gamma);

/// Direct truncated evaluation of the sum, j = 0..horizon, with last-state
/// padding. Test oracle.
Vector brute_force_weights(std::span<const double> rewards, double alpha, double gamma, long horizon);

/// Per-step term fed to the recursion.
enum class Transform {
  exp_alpha_r,      // exp(alpha * R)
  ten_times_prob,   // 10 * sigmoid(R), the probability-scaled ablation
};

struct WeightTable {
  std::vector<std::int64_t> ids;  // aligned with Dataset::trajectories
  std::vector<Vector> raw;
  std::vector<Vector> normalized;  // raw / z when normalize, else raw
  double z = 1.0;                  // mean raw weight over the dataset
  bool is_normalized = false;

  const Vector& weights(std::size_t traj) const { return is_normalized ? normalized[traj] : raw[traj]; }
  std::size_t total_steps() const;
};

WeightTable build_weight_table(const pu::RewardField& field, const Dataset& ta, double alpha, double gamma,
                               bool normalize, Transform transform = Transform::exp_alpha_r);

/// Wraps precomputed per-step raw weights (e.g. from the DICE baseline).
WeightTable table_from_raw(std::vector<std::int64_t> ids, std::vector<Vector> raw, bool normalize);

/// Uniform weights (plain behavior cloning).
WeightTable uniform_table(const Dataset& ta);

/// trajectory_id, step, raw_W, normalized_W
void write_weight_csv(const WeightTable& table, const std::filesystem::path& path);

}  // namespace tailo::weights
