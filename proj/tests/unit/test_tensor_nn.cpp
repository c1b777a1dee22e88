#include "tailo/nn/adam.hpp"
#include "tailo/nn/grad_check.hpp"
#include "tailo/nn/mlp.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace tailo;
using namespace tailo::nn;
using tailo::testing::check_net_gradient;
using tailo::testing::random_matrix;

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  Mlp net(mlp_shape(3, 5, 2), Activation::tanh, Head::gaussian_mean);
  Rng rng(1);
  EXPECT_TRUE(net.forward(random_matrix(4, 3, rng)).isZero(0.0));
}

TEST(Mlp, IdentityRelu) {
  Mlp net({1, 1, 1}, Activation::relu, Head::scalar_logit);
  for (auto& l : net.layers()) l.weight.setOnes();
  EXPECT_DOUBLE_EQ(net.forward(Matrix::Constant(1, 1, 2.0))(0, 0), 2.0);
}

TEST(Mlp, BatchRowIndependence) {
  Rng rng(2);
  const Mlp net = Mlp::init({4, 8, 8, 1}, Activation::tanh, Head::scalar_logit, rng);
  const Matrix x = random_matrix(1, 4, rng);
  Matrix xx(2, 4);
  xx << x, x;
  const Matrix y = net.forward(xx);
  EXPECT_EQ(y(0, 0), y(1, 0));
  EXPECT_EQ(y(0, 0), net.forward(x)(0, 0));

  const Matrix batch = random_matrix(5, 4, rng);
  Matrix perm(5, 4);
  const int order[5] = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i) perm.row(i) = batch.row(order[i]);
  const Matrix a = net.forward(batch), b = net.forward(perm);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(b(i, 0), a(order[i], 0));
}

TEST(Mlp, RejectsNonFiniteAndWrongShape) {
  Rng rng(3);
  const Mlp net = Mlp::init({2, 4, 1}, Activation::relu, Head::scalar_logit, rng);
  Matrix x = Matrix::Zero(1, 2);
  x(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(net.forward(x), Error);
  EXPECT_THROW(net.forward(Matrix::Zero(1, 3)), DimensionError);
}

TEST(Mlp, ZeroUpstreamGivesZeroGradients) {
  Rng rng(4);
  const Mlp net = Mlp::init({3, 6, 6, 2}, Activation::relu, Head::gaussian_mean, rng);
  ForwardCache cache;
  net.forward(random_matrix(4, 3, rng), &cache);
  const auto g = net.backward(cache, Matrix::Zero(4, 2));
  for (const auto& l : g.layers) {
    EXPECT_TRUE(l.weight.isZero(0.0));
    EXPECT_TRUE(l.bias.isZero(0.0));
  }
  EXPECT_TRUE(g.input.isZero(0.0));
}

TEST(Mlp, ScalarLinearAnalytic) {
  Mlp net({1, 1}, Activation::relu, Head::scalar_logit);
  net.layers()[0].weight(0, 0) = 3.0;
  ForwardCache cache;
  net.forward(Matrix::Constant(1, 1, 2.0), &cache);
  const auto g = net.backward(cache, Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.layers[0].weight(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.input(0, 0), 3.0);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  for (auto act : {Activation::tanh, Activation::relu}) {
    Rng rng(5);
    const Mlp net = Mlp::init({6, 16, 16, 1}, act, Head::scalar_logit, rng);
    const Matrix x = random_matrix(8, 6, rng);
    const Matrix up = random_matrix(8, 1, rng);
    auto loss = [&](const Mlp& n) { return (n.forward(x).array() * up.array()).sum(); };
    ForwardCache cache;
    net.forward(x, &cache);
    const auto g = net.backward(cache, up);
    const auto res = check_net_gradient(net, loss, g, rng, 200);
    EXPECT_LT(res.max_rel_error, 1e-4) << to_string(act) << " coord " << res.worst_coordinate;
    EXPECT_GE(res.coordinates_checked, 50);
  }
}

TEST(Mlp, InputGradientMatchesFiniteDifferences) {
  Rng rng(6);
  const Mlp net = Mlp::init({3, 10, 10, 1}, Activation::tanh, Head::scalar_logit, rng);
  const Matrix x = random_matrix(1, 3, rng);
  ForwardCache cache;
  net.forward(x, &cache);
  const auto g = net.backward(cache, Matrix::Ones(1, 1));
  auto f = [&](const Vector& v) { return net.forward(v.transpose())(0, 0); };
  const auto res = finite_diff_check(f, x.row(0).transpose(), g.input.row(0).transpose(), rng);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(Mlp, GradientPenaltyParameterGradient) {
  for (auto act : {Activation::tanh, Activation::relu}) {
    Rng rng(7);
    const Mlp net = Mlp::init({5, 32, 32, 1}, act, Head::scalar_logit, rng);
    const Matrix x = random_matrix(6, 5, rng);
    auto loss = [&](const Mlp& n) { return n.input_gradient_penalty(x).value; };
    const auto p = net.input_gradient_penalty(x);
    const auto res = check_net_gradient(net, loss, p.grads, rng, 200);
    EXPECT_LT(res.max_rel_error, 1e-4) << to_string(act) << " coord " << res.worst_coordinate;
  }
}

TEST(Mlp, InitBoundsAndSeeds) {
  Rng a(11), b(11), c(12);
  const Mlp n1 = Mlp::init({256, 16, 1}, Activation::tanh, Head::scalar_logit, a);
  const Mlp n2 = Mlp::init({256, 16, 1}, Activation::tanh, Head::scalar_logit, b);
  const Mlp n3 = Mlp::init({256, 16, 1}, Activation::tanh, Head::scalar_logit, c);
  EXPECT_LE(n1.layers()[0].weight.cwiseAbs().maxCoeff(), 0.0625);
  EXPECT_TRUE(n1.layers()[0].bias.isZero(0.0));
  EXPECT_TRUE(n1 == n2);
  EXPECT_FALSE(n1 == n3);
}

TEST(Mlp, CheckpointRoundTrip) {
  Rng rng(13);
  const Mlp net = Mlp::init({3, 7, 7, 2}, Activation::relu, Head::gaussian_mean, rng);
  const Mlp back = checkpoint_from_json(checkpoint_json(net));
  EXPECT_TRUE(net == back);
  EXPECT_EQ(back.activation(), Activation::relu);
  EXPECT_EQ(back.head(), Head::gaussian_mean);
}

TEST(Adam, ZeroGradientIsIdentity) {
  Rng rng(14);
  Mlp net = Mlp::init({3, 4, 1}, Activation::tanh, Head::scalar_logit, rng);
  const Mlp before = net;
  AdamState st;
  const auto zero = net.zero_grads();
  for (int i = 0; i < 3; ++i) adam_step(net.parameters(), zero.refs(), st, 0.1, 0.0);
  EXPECT_TRUE(net == before);
}

TEST(Adam, FirstStepHandValue) {
  double p = 0.0, g = 1.0;
  std::vector<ParamRef> params{{"p", {&p, 1}}};
  std::vector<ConstParamRef> grads{{"p", {&g, 1}}};
  AdamState st;
  adam_step(params, grads, st, 0.1, 0.0);
  EXPECT_NEAR(p, -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, DecoupledWeightDecay) {
  double p = 2.0, g = 0.0;
  std::vector<ParamRef> params{{"p", {&p, 1}}};
  std::vector<ConstParamRef> grads{{"p", {&g, 1}}};
  AdamState st;
  adam_step(params, grads, st, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(p, 2.0 * (1.0 - 0.05));
}

TEST(Adam, NonFiniteGradientNamesTensor) {
  double p = 0.0, g = std::numeric_limits<double>::infinity();
  std::vector<ParamRef> params{{"layer0.weight", {&p, 1}}};
  std::vector<ConstParamRef> grads{{"layer0.weight", {&g, 1}}};
  AdamState st;
  try {
    adam_step(params, grads, st, 0.1, 0.0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer0.weight"), std::string::npos);
  }
}

TEST(Adam, DeterministicRuns) {
  auto run = [] {
    Rng rng(15);
    Mlp net = Mlp::init({2, 8, 1}, Activation::tanh, Head::scalar_logit, rng);
    AdamState st;
    const Matrix x = random_matrix(16, 2, rng);
    for (int i = 0; i < 100; ++i) {
      ForwardCache cache;
      const Matrix y = net.forward(x, &cache);
      const auto g = net.backward(cache, y);
      adam_step(net.parameters(), g.refs(), st, 1e-2, 1e-3);
    }
    return net;
  };
  EXPECT_TRUE(run() == run());
}

TEST(GradCheck, Quadratic) {
  Rng rng(16);
  const Vector p = random_matrix(80, 1, rng).col(0);
  const auto res = finite_diff_check([](const Vector& v) { return v.squaredNorm(); }, p, 2.0 * p, rng);
  EXPECT_LT(res.max_rel_error, 1e-8);
  EXPECT_GE(res.coordinates_checked, 50);
}
