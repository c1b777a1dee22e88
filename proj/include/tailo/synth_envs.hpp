#pragma once

#include "tailo/core_types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace tailo::envs {

/// Point mass on a plane. State (x, y, vx, vy), action in [-1,1]^2:
///   v' = clip(v + 0.1 a, -1, 1),  p' = p + 0.1 v'.
/// Episodes last 100 steps from the origin at rest; success means x <= -2 at
/// any step (the target direction is "left").
class PointmazeEnv {
 public:
  static constexpr int kStateDim = 4;
  static constexpr int kActionDim = 2;
  static constexpr int kHorizon = 100;
  static constexpr double kGain = 0.1;
  static constexpr double kDt = 0.1;
  static constexpr double kSuccessX = -2.0;

  /// Optional uniform jitter half-width on the rollout start position; the
  /// default is the exact origin.
  double start_jitter = 0.0;
  /// Same for the start velocity.
  double velocity_jitter = 0.0;

  static Vector initial_state();
  static Vector step(const Vector& state, const Vector& action);
  static bool success(const Vector& state) { return state[0] <= kSuccessX; }
};

/// Unit direction for a tag suffix: L, R, U, D.
Vector direction_vector(const std::string& dir);

inline const std::vector<std::string>& pointmaze_directions() {
  static const std::vector<std::string> dirs{"L", "R", "U", "D"};
  return dirs;
}

/// 4 * n_per_direction scripted trajectories (L, R, U, D blocks in that
/// order), action = direction + N(0, noise_std^2) clipped to [-1,1]^2.
/// Each trajectory draws from its own generator derived from `seed`.
Dataset gen_pointmaze(int n_per_direction, double noise_std, std::uint64_t seed);

/// Ring of N positions i/(N-1); every trajectory walks right from 0 to N-1
/// and records the wrap-around successor of its last state.
Dataset gen_chain(int n_states, int n_trajectories, std::uint64_t seed);

enum class ExampleMode { full, final_state };

/// State-only copies (full) or last states (final_state) of every trajectory
/// carrying `tag`.
Dataset make_task_specific_examples(const Dataset& dataset, const std::string& tag, ExampleMode mode);

struct CorruptionResult {
  Dataset dataset;
  int dropped_trajectories = 0;
  std::size_t removed_pairs = 0;
};

/// Removes the pairs at indices x-1, 2x-1, ... of each trajectory. Kept
/// pairs of task-agnostic data record their true successor state.
CorruptionResult corrupt_remove_every_x(const Dataset& dataset, int x);

/// Keeps the first `head` and last `tail` states of each trajectory, as two
/// trajectories when a gap separates them. Ids are reassigned by order.
Dataset truncate_head_tail(const Dataset& dataset, int head, int tail);

/// Batched deterministic controller: raw states (rows) -> actions (rows).
using Controller = std::function<Matrix(const Matrix&)>;

struct RolloutResult {
  double success_rate = 0.0;
  std::vector<double> returns;  // steps spent with x <= -2
  std::vector<char> successes;
};

RolloutResult rollout(const Controller& policy, const PointmazeEnv& env, int n_episodes, std::uint64_t seed);

/// a = direction + N(0, noise^2), clipped; noise 0 is the scripted expert.
Controller scripted_controller(const std::string& dir, double noise_std, std::uint64_t seed);
Controller random_controller(std::uint64_t seed);

}  // namespace tailo::envs
