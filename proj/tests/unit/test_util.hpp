#pragma once

#include "tailo/nn/grad_check.hpp"
#include "tailo/nn/mlp.hpp"

#include <functional>

namespace tailo::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Finite-difference check of a loss over all parameters of `net`.
/// `loss` evaluates a candidate net; `analytic` is the gradient at `net`.
inline nn::GradCheckResult check_net_gradient(const nn::Mlp& net, const std::function<double(const nn::Mlp&)>& loss,
                                              const nn::MlpGrads& analytic, Rng& rng, int coords = 96) {
  const Vector p0 = nn::flatten(net.parameters());
  const auto grefs = analytic.refs();
  const Vector g = nn::flatten(grefs);
  auto f = [&](const Vector& p) {
    nn::Mlp probe = net;
    nn::assign(probe.parameters(), p);
    return loss(probe);
  };
  return nn::finite_diff_check(f, p0, g, rng, coords);
}

}  // namespace tailo::testing
