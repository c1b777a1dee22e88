#include "tailo/nn/adam.hpp"

#include <cmath>

namespace tailo::nn {

void adam_step(std::span<const ParamRef> params, std::span<const ConstParamRef> grads, AdamState& state, double lr,
               double weight_decay) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].values.size() != grads[i].values.size())
      throw DimensionError("adam_step: shape mismatch for tensor " + params[i].name);
    for (double g : grads[i].values)
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in tensor " + grads[i].name);
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Vector::Zero(static_cast<Eigen::Index>(p.values.size())));
      state.v.push_back(Vector::Zero(static_cast<Eigen::Index>(p.values.size())));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not match parameters");

  ++state.step;
  const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (static_cast<std::size_t>(m.size()) != params[i].values.size())
      throw DimensionError("adam_step: moment shape mismatch for tensor " + params[i].name);
    auto p = params[i].values;
    auto g = grads[i].values;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      m[kk] = AdamState::beta1 * m[kk] + (1.0 - AdamState::beta1) * g[k];
      v[kk] = AdamState::beta2 * v[kk] + (1.0 - AdamState::beta2) * g[k] * g[k];
      const double mhat = m[kk] / bc1;
      const double vhat = v[kk] / bc2;
      if (weight_decay != 0.0) p[k] *= decay;
      p[k] -= lr * mhat / (std::sqrt(vhat) + AdamState::eps);
    }
  }
}

}  // namespace tailo::nn
