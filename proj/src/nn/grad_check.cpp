#include "tailo/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tailo::nn {

GradCheckResult finite_diff_check(const std::function<double(const Vector&)>& loss, const Vector& params,
                                  const Vector& analytic, Rng& rng, int coords, double step) {
  if (analytic.size() != params.size()) throw DimensionError("finite_diff_check: gradient size mismatch");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(params.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (static_cast<Eigen::Index>(coords) < params.size()) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(coords));
  }
  GradCheckResult res;
  Vector p = params;
  for (auto i : idx) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = loss(p);
    p[i] = orig - step;
    const double down = loss(p);
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
    if (err > res.max_rel_error || res.worst_coordinate < 0) {
      res.max_rel_error = std::max(res.max_rel_error, err);
      res.worst_coordinate = i;
    }
    ++res.coordinates_checked;
  }
  return res;
}

}  // namespace tailo::nn
