#include "tailo/wbc_trainer.hpp"

#include "tailo/nn/adam.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace tailo::wbc {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

double clamp_action(double a) { return std::clamp(a, -1.0 + kActionEps, 1.0 - kActionEps); }

}  // namespace

Matrix Policy::act(const Matrix& states) const {
  return mean_net.forward(input_norm.normalize_rows(states)).array().tanh().matrix();
}

Policy make_policy(int state_dim, int action_dim, int hidden, const NormStats& norm, Rng& rng) {
  Policy p;
  p.mean_net = nn::Mlp::init(nn::mlp_shape(state_dim, hidden, action_dim), nn::Activation::relu,
                             nn::Head::gaussian_mean, rng);
  p.log_std = Vector::Zero(action_dim);
  p.input_norm = norm;
  return p;
}

double log_prob(const Policy& policy, const Vector& state, const Vector& action) {
  if (action.size() != policy.action_dim()) throw DimensionError("log_prob: action dimension mismatch");
  const Vector mu = policy.mean_net.forward(policy.input_norm.normalize(state).transpose()).row(0).transpose();
  double lp = 0.0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    const double a = clamp_action(action[i]);
    const double u = std::atanh(a);
    const double sigma = std::exp(policy.log_std[i]);
    const double zs = (u - mu[i]) / sigma;
    lp += -0.5 * zs * zs - policy.log_std[i] - kHalfLog2Pi - std::log1p(-a * a);
  }
  if (!std::isfinite(lp)) throw NumericError("log_prob: non-finite result");
  return lp;
}

LossResult wbc_loss(const Policy& policy, const Matrix& states, const Matrix& actions, const Vector& weights) {
  const auto B = states.rows();
  if (B == 0) throw Error("wbc_loss: empty batch");
  if (actions.rows() != B || weights.size() != B) throw DimensionError("wbc_loss: batch size mismatch");
  if (actions.cols() != policy.action_dim()) throw DimensionError("wbc_loss: action dimension mismatch");
  if ((weights.array() < 0.0).any()) throw Error("wbc_loss: weights must be nonnegative");

  LossResult res;
  if ((weights.array() == 0.0).all()) {
    std::clog << "warning: wbc_loss batch has all-zero weights\n";
    res.all_zero_weights = true;
    res.mean_grads = policy.mean_net.zero_grads();
    res.log_std_grad = Vector::Zero(policy.action_dim());
    return res;
  }

  nn::ForwardCache cache;
  const Matrix mu = policy.mean_net.forward(policy.input_norm.normalize_rows(states), &cache);
  const Vector inv_var = (-2.0 * policy.log_std.array()).exp();
  Matrix dmu(B, policy.action_dim());
  Vector dls = Vector::Zero(policy.action_dim());
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < actions.cols(); ++i) {
      const double a = clamp_action(actions(b, i));
      const double u = std::atanh(a);
      const double diff = u - mu(b, i);
      const double z2 = diff * diff * inv_var[i];
      lp += -0.5 * z2 - policy.log_std[i] - kHalfLog2Pi - std::log1p(-a * a);
      // loss = -W lp / B
      dmu(b, i) = -weights[b] * scale * diff * inv_var[i];
      dls[i] += -weights[b] * scale * (z2 - 1.0);
    }
    total += weights[b] * lp;
  }
  res.value = -total * scale;
  if (!std::isfinite(res.value)) throw NumericError("wbc_loss: non-finite loss");
  res.mean_grads = policy.mean_net.backward(cache, dmu);
  res.log_std_grad = dls;
  return res;
}

Policy train_policy(const Dataset& ta, const weights::WeightTable* table, const RunConfig& config, Rng& rng,
                    const TrainOptions& options) {
  if (ta.kind != DatasetKind::task_agnostic) throw Error("train_policy needs a task-agnostic dataset");
  const FlatPairs pairs = flatten(ta);
  Vector flat_w = Vector::Ones(static_cast<Eigen::Index>(pairs.size()));
  if (table) {
    if (table->ids.size() != ta.trajectories.size() || table->total_steps() != pairs.size())
      throw Error("weight table does not cover the task-agnostic dataset");
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const auto& ref = pairs.refs[r];
      flat_w[static_cast<Eigen::Index>(r)] = table->weights(ref.traj)[ref.step];
    }
  }

  Policy policy = make_policy(ta.state_dim, ta.action_dim, config.hidden, ta.norm, rng);
  nn::AdamState adam_net, adam_std;
  MinibatchSampler sampler(pairs, rng());

  auto report = [&](int step) {
    if (options.on_eval) options.on_eval(step, policy);
  };
  for (int step = 0; step < config.steps_bc; ++step) {
    const Minibatch mb = sampler.next(config.batch_bc);
    Vector w(config.batch_bc);
    for (int b = 0; b < config.batch_bc; ++b) w[b] = flat_w[static_cast<Eigen::Index>(mb.index[static_cast<std::size_t>(b)])];
    auto loss = wbc_loss(policy, mb.states, mb.actions, w);
    if (!std::isfinite(loss.value)) {
      std::ostringstream msg;
      msg << "policy training diverged at step " << step << ": loss=" << loss.value;
      throw NumericError(msg.str());
    }
    if (options.curve) options.curve->push_back({step + 1, loss.value});
    const auto grefs = loss.mean_grads.refs();
    nn::adam_step(policy.mean_net.parameters(), grefs, adam_net, config.lr_policy, config.weight_decay_policy);
    std::vector<nn::ParamRef> sp{{"log_std", {policy.log_std.data(), static_cast<std::size_t>(policy.log_std.size())}}};
    std::vector<nn::ConstParamRef> sg{
        {"log_std", {loss.log_std_grad.data(), static_cast<std::size_t>(loss.log_std_grad.size())}}};
    nn::adam_step(sp, sg, adam_std, config.lr_policy, config.weight_decay_policy);
    policy.log_std = policy.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);

    const int done = step + 1;
    if (done % config.eval_interval == 0 && done != config.steps_bc) report(done);
    if (options.on_checkpoint && config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 &&
        done != config.steps_bc)
      options.on_checkpoint(done, policy);
  }
  report(config.steps_bc);
  if (options.on_checkpoint) options.on_checkpoint(config.steps_bc, policy);
  return policy;
}

void save_policy(const Policy& policy, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "tailo-policy";
  j["version"] = 1;
  j["mean_net"] = nlohmann::json::parse(nn::checkpoint_json(policy.mean_net));
  j["log_std"] = std::vector<double>(policy.log_std.data(), policy.log_std.data() + policy.log_std.size());
  j["norm_mean"] = std::vector<double>(policy.input_norm.mean.data(),
                                       policy.input_norm.mean.data() + policy.input_norm.mean.size());
  j["norm_std"] =
      std::vector<double>(policy.input_norm.std.data(), policy.input_norm.std.data() + policy.input_norm.std.size());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write policy checkpoint " + path.string());
  out << j.dump() << '\n';
}

Policy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open policy checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("policy checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "tailo-policy" || j.value("version", 0) != 1)
    throw Error("policy checkpoint: unknown format or version");
  Policy p;
  p.mean_net = nn::checkpoint_from_json(j.at("mean_net").dump());
  auto to_vec = [](const std::vector<double>& v) { return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()))); };
  p.log_std = to_vec(j.at("log_std").get<std::vector<double>>());
  p.input_norm.mean = to_vec(j.at("norm_mean").get<std::vector<double>>());
  p.input_norm.std = to_vec(j.at("norm_std").get<std::vector<double>>());
  return p;
}

}  // namespace tailo::wbc
