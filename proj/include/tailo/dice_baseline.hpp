#pragma once

#include "tailo/core_types.hpp"
#include "tailo/nn/mlp.hpp"
#include "tailo/pu_discriminator.hpp"
#include "tailo/trajectory_weights.hpp"

#include <filesystem>
#include <vector>

namespace tailo::dice {

/// (s, s') pairs built from a dataset, plus the reward of s and the initial
/// states. A step with a recorded successor uses it; otherwise the next stored
/// state is the successor; the end of an episode is an absorbing self-loop.
struct TransitionSet {
  Matrix states;
  Matrix next_states;
  Vector rewards;
  Matrix initial_states;
  std::vector<StepRef> refs;
};

TransitionSet build_transitions(const Dataset& ta, const pu::RewardField& field);

struct MonitorEntry {
  int step = 0;
  double max_abs_v = 0.0;
  double min_v = 0.0;
  double max_v = 0.0;
};

struct ValueNet {
  nn::Mlp net;  // relu hidden, scalar output, standardized input
  NormStats input_norm;
  double gamma = 0.99;
  std::vector<MonitorEntry> monitor;
  std::vector<int> divergence_steps;

  bool diverged() const { return !divergence_steps.empty(); }
  Vector values(const Matrix& raw_states) const;
};

struct KlLoss {
  double value = 0.0;
  Vector grad_initial;  // dL / dV(s0)
  Vector grad_states;   // dL / dV(s)
  Vector grad_next;     // dL / dV(s')
};

/// (1 - gamma) mean V(s0) + log mean exp(R(s) + gamma V(s') - V(s)), with
/// max-subtraction inside the log-sum-exp. Inputs are V values, not states.
KlLoss smodice_kl_loss(const Vector& v_initial, const Vector& v_states, const Vector& v_next, const Vector& rewards,
                       double gamma);

/// Trains V on D_TA transitions. max|V| over dataset states (and recorded
/// successors) is recorded at step 0 and every monitor_interval steps. A
/// non-finite loss is recorded as a divergence event and stops training.
ValueNet train_value(const Dataset& ta, const pu::RewardField& field, const RunConfig& config, Rng& rng);

struct DiceWeights {
  weights::WeightTable table;
  std::size_t overflow_count = 0;
};

/// exp(R(s) + gamma V(s') - V(s)) per step, exponent capped at 50 (flagged),
/// mean-normalized. Episode ends take the trajectory's last computable weight.
DiceWeights extract_dice_weights(const ValueNet& v, const Dataset& ta, const pu::RewardField& field);

/// step, max_abs_V, min_V, max_V
void write_monitor_csv(const ValueNet& v, const std::filesystem::path& path);

}  // namespace tailo::dice
