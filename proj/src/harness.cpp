#include "tailo/harness.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

namespace tailo::harness {

namespace {

Rng stage_rng(std::uint64_t seed, std::uint32_t stage) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stage};
  return Rng(seq);
}

Matrix standardized_states(const Dataset& ds, const NormStats& norm) {
  return norm.normalize_rows(flatten(ds).states);
}

pu::DiscriminatorSpec one_step_spec(const RunConfig& c, pu::Objective objective) {
  pu::DiscriminatorSpec spec;
  spec.objective = objective;
  spec.eta_p = c.eta_p;
  spec.variant = c.loss_variant;
  spec.steps = c.steps_formal;
  spec.batch = c.batch_disc;
  spec.lr = c.lr_disc;
  spec.grad_penalty_coef = c.grad_penalty_coef;
  spec.logit_clamp = c.logit_clamp;
  spec.hidden = c.hidden;
  return spec;
}

std::vector<int> eval_steps(const RunConfig& c) {
  std::vector<int> steps;
  for (int s = c.eval_interval; s < c.steps_bc; s += c.eval_interval) steps.push_back(s);
  steps.push_back(c.steps_bc);
  return steps;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::tailo: return "tailo";
    case Method::bc: return "bc";
    case Method::smodice_kl: return "smodice_kl";
    case Method::ours_v1: return "ours_v1";
    case Method::ours_v2: return "ours_v2";
    case Method::ours_v3: return "ours_v3";
  }
  return "bc";
}

Method parse_method(const std::string& text) {
  for (auto m : {Method::tailo, Method::bc, Method::smodice_kl, Method::ours_v1, Method::ours_v2, Method::ours_v3})
    if (to_string(m) == text) return m;
  throw Error("unknown method '" + text + "'");
}

std::vector<Method> parse_method_list(const std::string& text) {
  std::vector<Method> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    const Method m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw Error("empty method list");
  return out;
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::standard: return "standard";
    case Scenario::incomplete_ta: return "incomplete_ta";
    case Scenario::incomplete_ts: return "incomplete_ts";
    case Scenario::example_based: return "example_based";
    case Scenario::ablation: return "ablation";
  }
  return "standard";
}

Scenario parse_scenario(const std::string& text) {
  for (auto s : {Scenario::standard, Scenario::incomplete_ta, Scenario::incomplete_ts, Scenario::example_based,
                 Scenario::ablation})
    if (to_string(s) == text) return s;
  throw Error("unknown scenario '" + text + "'");
}

double evaluate(const wbc::Policy& policy, const RunConfig& config, std::uint64_t seed, int step) {
  envs::PointmazeEnv env;
  env.start_jitter = config.eval_start_jitter;
  env.velocity_jitter = config.eval_start_jitter;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), 0x5eedu};
  std::uint32_t word[2];
  seq.generate(word, word + 2);
  const std::uint64_t rollout_seed = (static_cast<std::uint64_t>(word[0]) << 32) | word[1];
  auto controller = [&policy](const Matrix& s) { return policy.act(s); };
  return envs::rollout(controller, env, config.eval_episodes, rollout_seed).success_rate;
}

MethodRun run_method(Method method, const Dataset& ta, const Dataset& ts, const RunConfig& config, std::uint64_t seed,
                     const std::filesystem::path& out) {
  config.validate();
  MethodRun run;
  run.method = method;
  run.seed = seed;
  if (!out.empty()) std::filesystem::create_directories(out);

  std::vector<wbc::CurvePoint> losses;
  try {
    Rng disc_rng = stage_rng(seed, 1);
    const bool normalize = config.normalize_weights;
    switch (method) {
      case Method::bc:
        break;
      case Method::tailo:
      case Method::ours_v1: {
        const auto pair = pu::train_pu_discriminator(ts, ta, config, disc_rng);
        run.rewards = pu::reward_field(pair.c, ta, config.logit_clamp);
        const auto transform =
            method == Method::tailo ? weights::Transform::exp_alpha_r : weights::Transform::ten_times_prob;
        run.weights = weights::build_weight_table(*run.rewards, ta, config.alpha, config.gamma, normalize, transform);
        break;
      }
      case Method::ours_v2:
      case Method::ours_v3: {
        const auto c = pu::train_discriminator(standardized_states(ts, ta.norm), standardized_states(ta, ta.norm),
                                               one_step_spec(config, pu::Objective::debiased_unclamped), disc_rng);
        run.rewards = pu::reward_field(c, ta, config.logit_clamp);
        const auto transform =
            method == Method::ours_v2 ? weights::Transform::exp_alpha_r : weights::Transform::ten_times_prob;
        run.weights = weights::build_weight_table(*run.rewards, ta, config.alpha, config.gamma, normalize, transform);
        break;
      }
      case Method::smodice_kl: {
        const auto c = pu::train_discriminator(standardized_states(ts, ta.norm), standardized_states(ta, ta.norm),
                                               one_step_spec(config, pu::Objective::cross_entropy), disc_rng);
        run.rewards = pu::reward_field(c, ta, config.logit_clamp);
        Rng value_rng = stage_rng(seed, 3);
        run.value = dice::train_value(ta, *run.rewards, config, value_rng);
        if (!out.empty()) dice::write_monitor_csv(*run.value, out / "vmonitor.csv");
        if (run.value->diverged())
          throw NumericError("value training diverged at step " + std::to_string(run.value->divergence_steps.front()));
        auto dw = dice::extract_dice_weights(*run.value, ta, *run.rewards);
        if (dw.overflow_count > 0)
          std::clog << "smodice_kl seed " << seed << ": " << dw.overflow_count << " weight exponents capped\n";
        run.weights = normalize ? std::move(dw.table) : weights::table_from_raw(dw.table.ids, dw.table.raw, false);
        break;
      }
    }
    if (!out.empty()) {
      if (run.rewards) pu::write_reward_csv(*run.rewards, out / "rewards.csv");
      if (run.weights) weights::write_weight_csv(*run.weights, out / "weights.csv");
    }

    Rng policy_rng = stage_rng(seed, 2);
    wbc::TrainOptions options;
    options.curve = &losses;
    options.on_eval = [&](int step, const wbc::Policy& p) {
      const double loss = losses.empty() ? 0.0 : losses.back().loss;
      run.curve.push_back({step, evaluate(p, config, seed, step), loss});
    };
    if (!out.empty())
      options.on_checkpoint = [&](int step, const wbc::Policy& p) {
        wbc::save_policy(p, out / ("policy_step_" + std::to_string(step) + ".json"));
      };
    run.policy = wbc::train_policy(ta, run.weights ? &*run.weights : nullptr, config, policy_rng, options);
  } catch (const Error& e) {
    run.aborted = true;
    run.abort_reason = e.what();
    std::clog << to_string(method) << " seed " << seed << " aborted: " << e.what() << "\n";
    for (int step : eval_steps(config)) {
      const bool have = std::any_of(run.curve.begin(), run.curve.end(), [&](const EvalPoint& p) { return p.step == step; });
      if (!have) run.curve.push_back({step, 0.0, 0.0});
    }
  }
  return run;
}

}  // namespace tailo::harness
