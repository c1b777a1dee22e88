#pragma once

#include "tailo/core_types.hpp"

#include <functional>

namespace tailo::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_coordinate = -1;
  int coordinates_checked = 0;

  bool passes(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares an analytic gradient with central differences on a random subset
/// of coordinates (all of them when there are fewer than `coords`).
/// Error per coordinate is |analytic - numeric| / max(1e-8, |numeric|).
GradCheckResult finite_diff_check(const std::function<double(const Vector&)>& loss, const Vector& params,
                                  const Vector& analytic, Rng& rng, int coords = 64, double step = 1e-5);

}  // namespace tailo::nn
