#include "tailo/pu_discriminator.hpp"

#include "tailo/nn/adam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tailo::pu {

namespace {

// log(1 + e^x) without overflow
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

Vector softplus(const Vector& z) { return z.unaryExpr([](double x) { return softplus(x); }); }
Vector sigmoid(const Vector& z) { return z.unaryExpr([](double x) { return sigmoid(x); }); }

void require_nonempty(const Vector& a, const Vector& b, const char* what) {
  if (a.size() == 0 || b.size() == 0) throw Error(std::string(what) + ": empty batch");
}

void require_probabilities(const Vector& c, const char* what) {
  for (double x : c)
    if (!(x > 0.0 && x < 1.0)) throw NumericError(std::string(what) + ": outputs must lie in (0,1)");
}

Vector logit(const Vector& c) { return c.unaryExpr([](double x) { return std::log(x) - std::log1p(-x); }); }

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  return out;
}

std::vector<Eigen::Index> sample_rows(Eigen::Index n, int batch, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Matrix stacked_states(const Dataset& ds, const NormStats& norm) {
  Matrix out(static_cast<Eigen::Index>(ds.total_steps()), ds.state_dim);
  Eigen::Index row = 0;
  for (const auto& t : ds.trajectories) {
    out.middleRows(row, t.size()) = t.states;
    row += t.size();
  }
  return norm.normalize_rows(out);
}

}  // namespace

// --- losses on probabilities ---------------------------------------------------------

double debiased_loss(const Vector& c_pos, const Vector& c_unl, double eta_p, LossVariant variant) {
  require_nonempty(c_pos, c_unl, "debiased_loss");
  require_probabilities(c_pos, "debiased_loss");
  require_probabilities(c_unl, "debiased_loss");
  return debiased_loss_logits(logit(c_pos), logit(c_unl), eta_p, variant).value;
}

double cross_entropy_loss(const Vector& c_pos, const Vector& c_neg) {
  require_nonempty(c_pos, c_neg, "cross_entropy_loss");
  require_probabilities(c_pos, "cross_entropy_loss");
  require_probabilities(c_neg, "cross_entropy_loss");
  return -c_pos.array().log().mean() - (1.0 - c_neg.array()).log().mean();
}

// --- losses on logits --------------------------------------------------------------------
//   -log c = softplus(-z),  -log(1-c) = softplus(z)
//   d softplus(-z)/dz = -(1 - c),  d softplus(z)/dz = c

LogitLoss debiased_loss_logits(const Vector& z_pos, const Vector& z_unl, double eta_p, LossVariant variant) {
  require_nonempty(z_pos, z_unl, "debiased_loss");
  const double np = static_cast<double>(z_pos.size());
  const double nu = static_cast<double>(z_unl.size());
  const Vector c_pos = sigmoid(z_pos);
  const Vector c_unl = sigmoid(z_unl);
  const double pos_term = softplus(Vector(-z_pos)).mean();      // mean_P[-log c]
  const double pos_as_neg = softplus(z_pos).mean();             // mean_P[-log(1-c)]
  const double unl_as_neg = softplus(z_unl).mean();             // mean_U[-log(1-c)]

  LogitLoss out;
  out.grad_pos = eta_p * (-(1.0 - c_pos.array())).matrix() / np;
  out.grad_other = Vector::Zero(z_unl.size());
  if (variant == LossVariant::nnpu) {
    const double neg_risk = unl_as_neg - eta_p * pos_as_neg;
    out.clamp_active = neg_risk <= 0.0;
    out.value = eta_p * pos_term + std::max(0.0, neg_risk);
    if (!out.clamp_active) {
      out.grad_other = c_unl / nu;
      out.grad_pos -= eta_p * c_pos / np;
    }
  } else {
    // verbatim: -[eta_p E_P log c + max(0, E_U log(1-c) - eta_p E_P log(1-c))]
    const double inner = -unl_as_neg + eta_p * pos_as_neg;
    out.clamp_active = inner <= 0.0;
    out.value = eta_p * pos_term - std::max(0.0, inner);
    if (!out.clamp_active) {
      out.grad_other = c_unl / nu;
      out.grad_pos -= eta_p * c_pos / np;
    }
  }
  return out;
}

LogitLoss unclamped_debiased_loss_logits(const Vector& z_pos, const Vector& z_unl, double eta_p) {
  require_nonempty(z_pos, z_unl, "debiased_loss");
  const double np = static_cast<double>(z_pos.size());
  const double nu = static_cast<double>(z_unl.size());
  const Vector c_pos = sigmoid(z_pos);
  const Vector c_unl = sigmoid(z_unl);
  LogitLoss out;
  out.value = eta_p * softplus(Vector(-z_pos)).mean() + softplus(z_unl).mean() - eta_p * softplus(z_pos).mean();
  out.grad_pos = (eta_p * (-(1.0 - c_pos.array())) - eta_p * c_pos.array()).matrix() / np;
  out.grad_other = c_unl / nu;
  return out;
}

LogitLoss cross_entropy_loss_logits(const Vector& z_pos, const Vector& z_neg) {
  require_nonempty(z_pos, z_neg, "cross_entropy_loss");
  LogitLoss out;
  out.value = softplus(Vector(-z_pos)).mean() + softplus(z_neg).mean();
  out.grad_pos = (-(1.0 - sigmoid(z_pos).array())).matrix() / static_cast<double>(z_pos.size());
  out.grad_other = sigmoid(z_neg) / static_cast<double>(z_neg.size());
  return out;
}

Matrix clamp_logits(Matrix& z, double bound) {
  Matrix mask = (z.array().abs() <= bound).cast<double>().matrix();
  z = z.cwiseMax(-bound).cwiseMin(bound);
  return mask;
}

// --- gradient penalty ------------------------------------------------------------------

PenaltyResult gradient_penalty(const nn::Mlp& net, const Matrix& batch_pos, const Matrix& batch_unl, Rng& rng) {
  if (batch_pos.rows() != batch_unl.rows() || batch_pos.cols() != batch_unl.cols())
    throw DimensionError("gradient_penalty: batches must have equal shapes");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Matrix mix(batch_pos.rows(), batch_pos.cols());
  for (Eigen::Index r = 0; r < mix.rows(); ++r) {
    const double u = u01(rng);
    mix.row(r) = u * batch_pos.row(r) + (1.0 - u) * batch_unl.row(r);
  }
  auto p = net.input_gradient_penalty(mix);
  return {p.value, std::move(p.grads)};
}

// --- training -----------------------------------------------------------------------------

nn::Mlp make_discriminator(int state_dim, int hidden, Rng& rng) {
  return nn::Mlp::init(nn::mlp_shape(state_dim, hidden, 1), nn::Activation::tanh, nn::Head::scalar_logit, rng);
}

nn::Mlp train_discriminator(const Matrix& positives, const Matrix& others, const DiscriminatorSpec& spec, Rng& rng,
                            TrainingLog* log) {
  if (positives.rows() == 0 || others.rows() == 0) throw Error("discriminator training needs nonempty datasets");
  if (positives.cols() != others.cols()) throw DimensionError("discriminator training: state dimension mismatch");
  nn::Mlp net = make_discriminator(static_cast<int>(positives.cols()), spec.hidden, rng);
  nn::AdamState adam;

  for (int step = 0; step < spec.steps; ++step) {
    const Matrix xp = gather_rows(positives, sample_rows(positives.rows(), spec.batch, rng));
    const Matrix xo = gather_rows(others, sample_rows(others.rows(), spec.batch, rng));

    nn::ForwardCache cp, co;
    Matrix zp = net.forward(xp, &cp);
    Matrix zo = net.forward(xo, &co);
    const Matrix mp = clamp_logits(zp, spec.logit_clamp);
    const Matrix mo = clamp_logits(zo, spec.logit_clamp);

    LogitLoss loss;
    switch (spec.objective) {
      case Objective::debiased:
        loss = debiased_loss_logits(zp.col(0), zo.col(0), spec.eta_p, spec.variant);
        break;
      case Objective::debiased_unclamped:
        loss = unclamped_debiased_loss_logits(zp.col(0), zo.col(0), spec.eta_p);
        break;
      case Objective::cross_entropy:
        loss = cross_entropy_loss_logits(zp.col(0), zo.col(0));
        break;
      case Objective::mixture: {
        const auto deb = debiased_loss_logits(zp.col(0), zo.col(0), spec.eta_p, spec.variant);
        const auto ce = cross_entropy_loss_logits(zp.col(0), zo.col(0));
        loss.value = spec.beta2 * deb.value + (1.0 - spec.beta2) * ce.value;
        loss.grad_pos = spec.beta2 * deb.grad_pos + (1.0 - spec.beta2) * ce.grad_pos;
        loss.grad_other = spec.beta2 * deb.grad_other + (1.0 - spec.beta2) * ce.grad_other;
        break;
      }
    }

    auto grads = net.backward(cp, Matrix(loss.grad_pos.cwiseProduct(mp.col(0))));
    grads.add(net.backward(co, Matrix(loss.grad_other.cwiseProduct(mo.col(0)))));

    double penalty = 0.0;
    if (spec.grad_penalty_coef > 0.0) {
      auto gp = gradient_penalty(net, xp, xo, rng);
      penalty = gp.value;
      grads.add(gp.grads, spec.grad_penalty_coef);
    }
    const double total = loss.value + spec.grad_penalty_coef * penalty;
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "discriminator training diverged at step " << step << ": objective=" << loss.value
          << " penalty=" << penalty;
      throw NumericError(msg.str());
    }
    if (log) log->steps.push_back({step, total, loss.value, penalty});
    const auto refs = grads.refs();
    nn::adam_step(net.parameters(), refs, adam, spec.lr, 0.0);
  }
  return net;
}

nn::Mlp pretrain_cprime(const Dataset& ts, const Dataset& ta, const RunConfig& config, Rng& rng, TrainingLog* log) {
  if (ts.trajectories.empty() || ta.trajectories.empty()) throw Error("pretrain_cprime: both datasets must be nonempty");
  DiscriminatorSpec spec;
  spec.objective = Objective::debiased;
  spec.eta_p = config.eta_p;
  spec.variant = config.loss_variant;
  spec.steps = config.steps_pretrain;
  spec.batch = config.batch_disc;
  spec.lr = config.lr_disc;
  spec.grad_penalty_coef = config.grad_penalty_coef;
  spec.logit_clamp = config.logit_clamp;
  spec.hidden = config.hidden;
  return train_discriminator(stacked_states(ts, ta.norm), stacked_states(ta, ta.norm), spec, rng, log);
}

std::vector<std::int64_t> select_lowest_fraction(const std::vector<std::int64_t>& ids, const std::vector<double>& means,
                                                 double beta1) {
  if (ids.size() != means.size()) throw DimensionError("select_lowest_fraction: size mismatch");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw Error("beta1 must lie in (0,1)");
  const auto count = static_cast<std::size_t>(std::floor(beta1 * static_cast<double>(ids.size())));
  if (count == 0) throw Error("too few trajectories: floor(beta1 * m) = 0");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (means[a] != means[b]) return means[a] < means[b];
    return ids[a] < ids[b];
  });
  std::vector<std::int64_t> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(ids[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> trajectory_mean_scores(const nn::Mlp& c_prime, const Dataset& ta, double logit_clamp) {
  const auto field = reward_field(c_prime, ta, logit_clamp);
  std::vector<double> means;
  means.reserve(field.values.size());
  for (const auto& r : field.values) means.push_back(r.mean());
  return means;
}

std::vector<std::int64_t> select_safe_negatives(const nn::Mlp& c_prime, const Dataset& ta, double beta1,
                                                double logit_clamp) {
  std::vector<std::int64_t> ids;
  for (const auto& t : ta.trajectories) ids.push_back(t.id);
  return select_lowest_fraction(ids, trajectory_mean_scores(c_prime, ta, logit_clamp), beta1);
}

nn::Mlp train_formal(const Dataset& ts, const Dataset& ta, const std::vector<std::int64_t>& safe_negative_ids,
                     const RunConfig& config, Rng& rng, TrainingLog* log) {
  if (safe_negative_ids.empty()) throw Error("train_formal: no safe negatives");
  std::vector<Trajectory> safe;
  for (auto id : safe_negative_ids) safe.push_back(ta.by_id(id));
  Dataset safe_ds;
  safe_ds.state_dim = ta.state_dim;
  safe_ds.trajectories = std::move(safe);

  DiscriminatorSpec spec;
  spec.objective = Objective::mixture;
  spec.beta2 = config.beta2;
  spec.eta_p = config.eta_p;
  spec.variant = config.loss_variant;
  spec.steps = config.steps_formal;
  spec.batch = config.batch_disc;
  spec.lr = config.lr_disc;
  spec.grad_penalty_coef = config.grad_penalty_coef;
  spec.logit_clamp = config.logit_clamp;
  spec.hidden = config.hidden;
  return train_discriminator(stacked_states(ts, ta.norm), stacked_states(safe_ds, ta.norm), spec, rng, log);
}

DiscriminatorPair train_pu_discriminator(const Dataset& ts, const Dataset& ta, const RunConfig& config, Rng& rng) {
  DiscriminatorPair pair;
  pair.eta_p = config.eta_p;
  pair.beta1 = config.beta1;
  pair.beta2 = config.beta2;
  pair.c_prime = pretrain_cprime(ts, ta, config, rng);
  pair.safe_negative_ids = select_safe_negatives(pair.c_prime, ta, config.beta1, config.logit_clamp);
  pair.c = train_formal(ts, ta, pair.safe_negative_ids, config, rng);
  return pair;
}

// --- reward field ---------------------------------------------------------------------------

const Vector& RewardField::of(std::int64_t id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return values[i];
  throw Error("reward field has no trajectory " + std::to_string(id));
}

double reward_from_probability(double c, double clamp) {
  if (!(c > 0.0 && c < 1.0)) throw NumericError("reward_from_probability: c must lie in (0,1)");
  return std::clamp(std::log(c) - std::log1p(-c), -clamp, clamp);
}

RewardField reward_field(const nn::Mlp& c, const Dataset& ta, double logit_clamp) {
  RewardField field;
  field.clamp = logit_clamp;
  for (const auto& t : ta.trajectories) {
    Matrix z = c.forward(ta.norm.normalize_rows(t.states));
    clamp_logits(z, logit_clamp);
    field.ids.push_back(t.id);
    field.values.push_back(z.col(0));
  }
  return field;
}

RewardField constant_reward_field(const Dataset& ta, double value, double clamp) {
  RewardField field;
  field.clamp = clamp;
  for (const auto& t : ta.trajectories) {
    field.ids.push_back(t.id);
    field.values.push_back(Vector::Constant(t.size(), std::clamp(value, -clamp, clamp)));
  }
  return field;
}

void write_reward_csv(const RewardField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "trajectory_id,step,R\n";
  char buf[64];
  for (std::size_t i = 0; i < field.ids.size(); ++i)
    for (Eigen::Index s = 0; s < field.values[i].size(); ++s) {
      std::snprintf(buf, sizeof buf, "%.17g", field.values[i][s]);
      out << field.ids[i] << ',' << s << ',' << buf << '\n';
    }
}

}  // namespace tailo::pu
