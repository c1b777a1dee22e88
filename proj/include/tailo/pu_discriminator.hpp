#pragma once

#include "tailo/core_types.hpp"
#include "tailo/nn/mlp.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace tailo::pu {

// Loss values on probabilities --------------------------------------------------
//
// These take discriminator outputs c in (0,1). Training works on logits
// through the *_logits variants below, which are the same formulas written
// with softplus for stability.

/// eta_p * mean_P[-log c] + max(0, mean_U[-log(1-c)] - eta_p * mean_P[-log(1-c)])
double debiased_loss(const Vector& c_pos, const Vector& c_unl, double eta_p,
                     LossVariant variant = LossVariant::nnpu);

/// -mean_P[log c] - mean_N[log(1-c)]
double cross_entropy_loss(const Vector& c_pos, const Vector& c_neg);

// Loss values and logit gradients -------------------------------------------------

struct LogitLoss {
  double value = 0.0;
  Vector grad_pos;  // dL / dz on the positive batch
  Vector grad_other;
  bool clamp_active = false;  // nnpu: the max(0, .) chose 0
};

/// How the unlabeled/negative term is combined.
enum class Objective {
  debiased,          // max(0, .) risk correction
  debiased_unclamped,  // same correction without the max (single-step ORIL form)
  cross_entropy,
  mixture,  // beta2 * debiased + (1 - beta2) * cross_entropy
};

LogitLoss debiased_loss_logits(const Vector& z_pos, const Vector& z_unl, double eta_p, LossVariant variant);
LogitLoss unclamped_debiased_loss_logits(const Vector& z_pos, const Vector& z_unl, double eta_p);
LogitLoss cross_entropy_loss_logits(const Vector& z_pos, const Vector& z_neg);

/// Clamps a logit matrix in place to [-bound, bound]; returns the mask of
/// entries that were inside (gradient passes only there).
Matrix clamp_logits(Matrix& z, double bound);

// Gradient penalty ------------------------------------------------------------------

struct PenaltyResult {
  double value = 0.0;
  nn::MlpGrads grads;
};

/// mean((||d logit / d s~|| - 1)^2) over s~ = u*s_P + (1-u)*s_U, u ~ U(0,1) per row.
PenaltyResult gradient_penalty(const nn::Mlp& net, const Matrix& batch_pos, const Matrix& batch_unl, Rng& rng);

// Training ------------------------------------------------------------------------------

struct StepLog {
  int step = 0;
  double loss = 0.0;       // total, including the penalty
  double objective = 0.0;  // without the penalty
  double penalty = 0.0;
};

struct TrainingLog {
  std::vector<StepLog> steps;
};

/// Generic discriminator training loop: positives vs. "other" states (both
/// already standardized), Adam, gradient penalty on interpolates.
struct DiscriminatorSpec {
  Objective objective = Objective::cross_entropy;
  double eta_p = 0.2;
  double beta2 = 0.0;  // mixture only
  LossVariant variant = LossVariant::nnpu;
  int steps = 0;
  int batch = 512;
  double lr = 3e-4;
  double grad_penalty_coef = 10.0;
  double logit_clamp = 10.0;
  int hidden = 256;
};

nn::Mlp make_discriminator(int state_dim, int hidden, Rng& rng);

nn::Mlp train_discriminator(const Matrix& positives, const Matrix& others, const DiscriminatorSpec& spec, Rng& rng,
                            TrainingLog* log = nullptr);

/// Step 1: c' on D_TS (positive) vs. D_TA (unlabeled) with the debiased loss.
/// States are standardized with D_TA's norm stats.
nn::Mlp pretrain_cprime(const Dataset& ts, const Dataset& ta, const RunConfig& config, Rng& rng,
                        TrainingLog* log = nullptr);

/// Indices of the floor(beta1 * m) lowest means, ties broken by ascending id.
std::vector<std::int64_t> select_lowest_fraction(const std::vector<std::int64_t>& ids, const std::vector<double>& means,
                                                 double beta1);

/// Per-trajectory mean of the clamped logit of c' over D_TA.
std::vector<double> trajectory_mean_scores(const nn::Mlp& c_prime, const Dataset& ta, double logit_clamp);

std::vector<std::int64_t> select_safe_negatives(const nn::Mlp& c_prime, const Dataset& ta, double beta1,
                                                double logit_clamp);

/// Step 3: c on D_TS vs. the safe negatives; beta2 mixes the debiased (1) and
/// cross-entropy (0) objectives.
nn::Mlp train_formal(const Dataset& ts, const Dataset& ta, const std::vector<std::int64_t>& safe_negative_ids,
                     const RunConfig& config, Rng& rng, TrainingLog* log = nullptr);

struct DiscriminatorPair {
  nn::Mlp c_prime;
  nn::Mlp c;
  std::vector<std::int64_t> safe_negative_ids;
  double eta_p = 0.2;
  double beta1 = 0.8;
  double beta2 = 0.0;
};

/// The full two-step procedure: pretrain, select, formal training.
DiscriminatorPair train_pu_discriminator(const Dataset& ts, const Dataset& ta, const RunConfig& config, Rng& rng);

// Reward field ----------------------------------------------------------------------

/// R(s) per (trajectory, step) of a dataset, clamped to +-clamp.
struct RewardField {
  std::vector<std::int64_t> ids;
  std::vector<Vector> values;  // aligned with Dataset::trajectories
  double clamp = 10.0;

  const Vector& of(std::int64_t id) const;
};

double reward_from_probability(double c, double clamp);

RewardField reward_field(const nn::Mlp& c, const Dataset& ta, double logit_clamp);

/// Uniform R over every step (for the DICE demos on hand-built data).
RewardField constant_reward_field(const Dataset& ta, double value, double clamp = 10.0);

void write_reward_csv(const RewardField& field, const std::filesystem::path& path);

}  // namespace tailo::pu
