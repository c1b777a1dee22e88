#pragma once

#include "tailo/core_types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tailo::nn {

enum class Activation { tanh, relu };
enum class Head { scalar_logit, gaussian_mean };

std::string to_string(Activation a);
std::string to_string(Head h);

/// A mutable view of one parameter tensor, flattened column-major.
struct ParamRef {
  std::string name;
  std::span<double> values;
};

struct ConstParamRef {
  std::string name;
  std::span<const double> values;
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Activations of one forward pass, kept for backward.
struct ForwardCache {
  Matrix input;                  // B x in
  std::vector<Matrix> pre;       // z_l, B x out_l
  std::vector<Matrix> post;      // h_l = act(z_l) for hidden layers
};

struct MlpGrads {
  std::vector<Layer> layers;
  Matrix input;  // dL/dx, B x in

  std::vector<ConstParamRef> refs() const;
  void add(const MlpGrads& other, double scale = 1.0);
};

/// Feedforward network: in -> hidden... -> out, activation on hidden layers
/// only, linear output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation act, Head head);

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
  static Mlp init(std::vector<int> sizes, Activation act, Head head, Rng& rng);

  Matrix forward(const Matrix& x, ForwardCache* cache = nullptr) const;

  /// Backpropagates dL/doutput (B x out) through a cached forward pass.
  MlpGrads backward(const ForwardCache& cache, const Matrix& upstream) const;

  /// Gradient-norm penalty of a scalar-output net:
  ///   P = mean_b (||d out_b / d x_b|| - 1)^2
  /// with its parameter gradient (second-order through the input gradient).
  struct PenaltyResult {
    double value = 0.0;
    MlpGrads grads;
    Vector grad_norms;
  };
  PenaltyResult input_gradient_penalty(const Matrix& x) const;

  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  std::size_t parameter_count() const;
  MlpGrads zero_grads() const;

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  Head head() const { return head_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  bool all_finite() const;
  bool operator==(const Mlp& o) const;

 private:
  std::vector<int> sizes_;
  Activation act_ = Activation::relu;
  Head head_ = Head::scalar_logit;
  std::vector<Layer> layers_;
};

std::vector<int> mlp_shape(int input, int hidden, int output, int depth = 2);

Vector flatten(std::span<const ConstParamRef> params);
void assign(std::span<const ParamRef> params, const Vector& flat);

// Checkpoints: JSON with a versioned shape header and row-major arrays.
void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_json(const Mlp& net);
Mlp checkpoint_from_json(const std::string& text);

}  // namespace tailo::nn
