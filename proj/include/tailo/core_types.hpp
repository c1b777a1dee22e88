#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Errors -------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Trajectories ---------------------------------------------------------------

enum class SourceKind { expert, random, scripted_direction, other };

/// Provenance label of a trajectory. Reporting reads it; training never does.
struct SourceTag {
  SourceKind kind = SourceKind::other;
  std::string direction;  // only for scripted_direction

  static SourceTag parse(const std::string& text);
  static SourceTag scripted(std::string dir) { return {SourceKind::scripted_direction, std::move(dir)}; }
  std::string str() const;
  bool operator==(const SourceTag&) const = default;
};

/// True successor states for each stored step. Present when steps have been
/// removed from a trajectory, so consecutive stored states are no longer
/// consecutive in time. A missing entry (known[i] == 0) marks a step whose
/// successor is the end of the episode.
struct Successors {
  Matrix states;           // n x d, rows valid where known[i] != 0
  std::vector<char> known;

  bool operator==(const Successors& o) const { return states == o.states && known == o.known; }
};

struct Trajectory {
  std::int64_t id = 0;
  SourceTag source;
  Matrix states;                    // n x d
  std::optional<Matrix> actions;    // n x k
  std::optional<Successors> successors;

  Eigen::Index size() const { return states.rows(); }
};

enum class DatasetKind { task_specific, task_agnostic };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& text);

/// Per-dimension standardization statistics. Zero-variance dimensions get
/// std = 1.
struct NormStats {
  Vector mean;
  Vector std;

  Vector normalize(const Vector& s) const;
  Matrix normalize_rows(const Matrix& states) const;
};

struct Dataset {
  DatasetKind kind = DatasetKind::task_agnostic;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<Trajectory> trajectories;
  NormStats norm;

  std::size_t total_steps() const;
  const Trajectory& by_id(std::int64_t id) const;
};

/// Validates trajectories against the kind and dimensions, then computes
/// norm stats. Throws DimensionError naming the offending trajectory id.
Dataset make_dataset(DatasetKind kind, int state_dim, int action_dim, std::vector<Trajectory> trajectories);

NormStats compute_norm_stats(const Dataset& dataset);

Vector normalize_state(const Vector& s, const NormStats& stats);

// Dataset files ----------------------------------------------------------------

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text);

// Flattened (state, action) pairs ------------------------------------------------

struct StepRef {
  std::size_t traj = 0;  // index into Dataset::trajectories
  Eigen::Index step = 0;
};

struct FlatPairs {
  Matrix states;
  Matrix actions;  // 0 columns for task-specific data
  std::vector<StepRef> refs;

  std::size_t size() const { return refs.size(); }
};

FlatPairs flatten(const Dataset& dataset);

struct Minibatch {
  Matrix states;
  Matrix actions;
  std::vector<std::size_t> index;  // rows of the FlatPairs the batch was drawn from
};

/// Uniform sampling with replacement over the flattened pairs of a dataset.
class MinibatchSampler {
 public:
  MinibatchSampler(const FlatPairs& pairs, std::uint64_t seed);

  Minibatch next(int batch);
  std::vector<std::size_t> next_indices(int batch);

 private:
  const FlatPairs* pairs_;
  Rng rng_;
};

// Run configuration ------------------------------------------------------------

enum class LossVariant { nnpu, paper_literal };

std::string to_string(LossVariant v);
LossVariant parse_loss_variant(const std::string& text);

struct RunConfig {
  double alpha = 1.25;
  double beta1 = 0.8;
  double beta2 = 0.0;
  double eta_p = 0.2;
  double gamma = 0.998;

  double lr_disc = 3e-4;
  double lr_policy = 1e-4;
  double weight_decay_policy = 1e-5;

  int steps_pretrain = 2000;
  int steps_formal = 5000;
  int steps_bc = 20000;
  int batch_disc = 512;
  int batch_bc = 1024;

  double grad_penalty_coef = 10.0;
  double logit_clamp = 10.0;
  LossVariant loss_variant = LossVariant::nnpu;
  bool normalize_weights = true;
  int hidden = 256;

  double gamma_value = 0.99;
  double lr_value = 3e-4;
  int steps_value = 20000;
  int batch_value = 512;
  int monitor_interval = 1000;

  int eval_interval = 1000;
  int eval_episodes = 100;
  double eval_start_jitter = 0.0;  // uniform +- on start position and velocity in evaluation
  int checkpoint_interval = 0;  // 0 = final checkpoint only

  std::uint64_t seed = 0;

  /// Throws Error on out-of-range values.
  void validate() const;
};

}  // namespace tailo
