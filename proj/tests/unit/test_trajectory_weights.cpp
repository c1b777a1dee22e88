#include "tailo/trajectory_weights.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tailo;
using namespace tailo::weights;

namespace {

std::vector<double> random_rewards(Rng& rng, int max_len = 50) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_real_distribution<double> r(-10.0, 10.0);
  std::vector<double> out(static_cast<std::size_t>(len(rng)));
  for (auto& x : out) x = r(rng);
  return out;
}

Dataset dataset_of_lengths(const std::vector<int>& lengths) {
  std::vector<Trajectory> ts;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Trajectory t;
    t.id = static_cast<std::int64_t>(i);
    t.states = Matrix::Zero(lengths[i], 1);
    t.actions = Matrix::Zero(lengths[i], 1);
    ts.push_back(std::move(t));
  }
  return make_dataset(DatasetKind::task_agnostic, 1, 1, ts);
}

pu::RewardField field_from(const Dataset& ta, const std::vector<std::vector<double>>& r) {
  pu::RewardField f;
  for (std::size_t i = 0; i < ta.trajectories.size(); ++i) {
    f.ids.push_back(ta.trajectories[i].id);
    f.values.push_back(Eigen::Map<const Vector>(r[i].data(), static_cast<Eigen::Index>(r[i].size())));
  }
  return f;
}

}  // namespace

TEST(Weights, ConstantReward) {
  const std::vector<double> r(6, 0.4);
  const Vector w = compute_weights(r, 1.25, 0.9);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(w[i], std::exp(1.25 * 0.4) / 0.1, 1e-12);
}

TEST(Weights, GammaZero) {
  const std::vector<double> r{0.1, -2.0, 3.0};
  const Vector w = compute_weights(r, 2.0, 0.0);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w[i], std::exp(2.0 * r[static_cast<std::size_t>(i)]));
}

TEST(Weights, HandExample) {
  const std::vector<double> r{0.0, std::log(2.0)};
  const Vector w = compute_weights(r, 1.0, 0.5);
  EXPECT_NEAR(w[0], 3.0, 1e-12);
  EXPECT_NEAR(w[1], 4.0, 1e-12);
}

TEST(Weights, Errors) {
  EXPECT_THROW(compute_weights(std::vector<double>{1.0}, 1.0, 1.0), Error);
  EXPECT_THROW(compute_weights(std::vector<double>{}, 1.0, 0.5), Error);
}

TEST(Weights, MatchesBruteForceOracle) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto r = random_rewards(rng);
    const Vector a = compute_weights(r, 1.25, 0.998);
    const Vector b = brute_force_weights(r, 1.25, 0.998, 20000);
    for (Eigen::Index i = 0; i < a.size(); ++i) ASSERT_LT(std::abs(a[i] - b[i]) / b[i], 1e-9);
  }
}

TEST(Weights, BruteForceEdgeCases) {
  const std::vector<double> one{0.7};
  EXPECT_NEAR(brute_force_weights(one, 1.0, 0.9, 2000)[0], std::exp(0.7) / 0.1, 1e-9);
  const std::vector<double> r{0.3, -1.0};
  const Vector w = brute_force_weights(r, 1.5, 0.9, 0);
  EXPECT_DOUBLE_EQ(w[0], std::exp(1.5 * 0.3));
  EXPECT_DOUBLE_EQ(w[1], std::exp(1.5 * -1.0));
}

TEST(Weights, Monotonicity) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    auto r = random_rewards(rng, 20);
    const Vector base = compute_weights(r, 1.0, 0.9);
    std::uniform_int_distribution<std::size_t> pick(0, r.size() - 1);
    const std::size_t j = pick(rng);
    r[j] += 0.5;
    const Vector up = compute_weights(r, 1.0, 0.9);
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      if (static_cast<std::size_t>(i) <= j) EXPECT_GT(up[i], base[i]);
      else EXPECT_EQ(up[i], base[i]);
    }
  }
}

TEST(Weights, PositiveAndBounded) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto r = random_rewards(rng);
    const double rmax = *std::max_element(r.begin(), r.end());
    const Vector w = compute_weights(r, 1.25, 0.98);
    EXPECT_GT(w.minCoeff(), 0.0);
    EXPECT_LE(w.maxCoeff(), std::exp(1.25 * rmax) / 0.02 * (1 + 1e-12));
  }
}

TEST(Weights, SpikePropagatesToStart) {
  std::vector<double> r(30, 0.0);
  r.back() = 8.0;
  const double gamma = 0.98, alpha = 1.25;
  const Vector w = compute_weights(r, alpha, gamma);
  const double spike = std::exp(alpha * 8.0) / (1 - gamma);
  EXPECT_GE(w[0] - 1.0, std::pow(gamma, 29) * spike * (1 - 1e-12));
}

TEST(WeightTable, SingleStepUnnormalized) {
  const Dataset ta = dataset_of_lengths({1});
  const auto table = build_weight_table(field_from(ta, {{0.0}}), ta, 1.25, 0.998, false);
  EXPECT_NEAR(table.weights(0)[0], 500.0, 1e-9);
}

TEST(WeightTable, NormalizedMeanOneAndOrdering) {
  Rng rng(4);
  const Dataset ta = dataset_of_lengths({5, 12, 1, 30});
  std::vector<std::vector<double>> r;
  for (const auto& t : ta.trajectories) {
    std::vector<double> v(static_cast<std::size_t>(t.size()));
    std::uniform_real_distribution<double> u(-3, 3);
    for (auto& x : v) x = u(rng);
    r.push_back(v);
  }
  const auto table = build_weight_table(field_from(ta, r), ta, 1.25, 0.98, true);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < table.normalized.size(); ++i) {
    sum += table.normalized[i].sum();
    n += static_cast<std::size_t>(table.normalized[i].size());
    for (Eigen::Index a = 0; a < table.raw[i].size(); ++a)
      for (Eigen::Index b = 0; b < table.raw[i].size(); ++b)
        EXPECT_EQ(table.raw[i][a] < table.raw[i][b], table.normalized[i][a] < table.normalized[i][b]);
  }
  EXPECT_NEAR(sum / static_cast<double>(n), 1.0, 1e-9);
}

TEST(WeightTable, AlphaIrrelevantForZeroReward) {
  const Dataset ta = dataset_of_lengths({4, 7});
  const auto f = field_from(ta, {std::vector<double>(4, 0.0), std::vector<double>(7, 0.0)});
  const auto a = build_weight_table(f, ta, 1.0, 0.9, true);
  const auto b = build_weight_table(f, ta, 2.0, 0.9, true);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_TRUE(a.normalized[i].isApprox(b.normalized[i], 1e-14));
}

TEST(WeightTable, MissingEntryNamesLocation) {
  const Dataset ta = dataset_of_lengths({3, 4});
  const auto f = field_from(ta, {{0.0, 0.0, 0.0}, {0.0, 0.0}});
  try {
    build_weight_table(f, ta, 1.0, 0.9, true);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("trajectory 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 2"), std::string::npos) << msg;
  }
}

TEST(WeightTable, ProbabilityTransform) {
  const Dataset ta = dataset_of_lengths({2});
  const auto table = build_weight_table(field_from(ta, {{0.0, 0.0}}), ta, 1.25, 0.0, false, Transform::ten_times_prob);
  EXPECT_DOUBLE_EQ(table.weights(0)[0], 5.0);
}
