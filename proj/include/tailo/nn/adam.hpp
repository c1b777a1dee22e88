#pragma once

#include "tailo/nn/mlp.hpp"

#include <span>
#include <vector>

namespace tailo::nn {

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  std::vector<Vector> m;
  std::vector<Vector> v;
  long step = 0;
};

/// Adam with decoupled weight decay: p <- p * (1 - lr * wd), then the Adam
/// delta. Moments are created on first use and must keep their shapes.
/// Throws NumericError naming the tensor if a gradient is non-finite.
void adam_step(std::span<const ParamRef> params, std::span<const ConstParamRef> grads, AdamState& state, double lr,
               double weight_decay);

}  // namespace tailo::nn
