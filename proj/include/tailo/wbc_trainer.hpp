#pragma once

#include "tailo/core_types.hpp"
#include "tailo/nn/mlp.hpp"
#include "tailo/trajectory_weights.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace tailo::wbc {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kActionEps = 1e-6;

/// Tanh-squashed diagonal Gaussian with a state-independent log std.
struct Policy {
  nn::Mlp mean_net;  // relu hidden, gaussian_mean head, standardized input
  Vector log_std;
  NormStats input_norm;

  int action_dim() const { return static_cast<int>(log_std.size()); }

  /// Squashed mean actions for raw (unstandardized) states, one row each.
  Matrix act(const Matrix& states) const;

  bool operator==(const Policy& o) const {
    return mean_net == o.mean_net && log_std == o.log_std && input_norm.mean == o.input_norm.mean &&
           input_norm.std == o.input_norm.std;
  }
};

Policy make_policy(int state_dim, int action_dim, int hidden, const NormStats& norm, Rng& rng);

/// log pi(a|s) for raw state s and action a in (-1,1)^k (clamped by 1e-6):
/// Gaussian log-density of atanh(a) minus sum log(1 - a_i^2).
double log_prob(const Policy& policy, const Vector& state, const Vector& action);

struct LossResult {
  double value = 0.0;
  nn::MlpGrads mean_grads;
  Vector log_std_grad;
  bool all_zero_weights = false;
};

/// -mean_b(W_b log pi(a_b|s_b)) over a batch of raw states and actions.
LossResult wbc_loss(const Policy& policy, const Matrix& states, const Matrix& actions, const Vector& weights);

struct CurvePoint {
  int step = 0;
  double loss = 0.0;
};

struct TrainOptions {
  /// Called after `step` optimizer steps (every eval_interval, and at the end).
  std::function<void(int step, const Policy&)> on_eval;
  /// Called every checkpoint_interval steps (if > 0) and at the end.
  std::function<void(int step, const Policy&)> on_checkpoint;
  std::vector<CurvePoint>* curve = nullptr;  // one entry per step
};

/// steps_bc Adam steps on lr_policy / weight_decay_policy, batch_bc pairs
/// sampled uniformly from D_TA, weighted by `weights` (uniform when null).
Policy train_policy(const Dataset& ta, const weights::WeightTable* weights, const RunConfig& config, Rng& rng,
                    const TrainOptions& options = {});

void save_policy(const Policy& policy, const std::filesystem::path& path);
Policy load_policy(const std::filesystem::path& path);

}  // namespace tailo::wbc
