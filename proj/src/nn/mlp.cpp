#include "tailo/nn/mlp.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace tailo::nn {

namespace {

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::tanh) return z.array().tanh().matrix();
  return z.cwiseMax(0.0);
}

// derivative of the activation expressed through z (and h = act(z))
Matrix activation_grad(const Matrix& z, const Matrix& h, Activation act) {
  if (act == Activation::tanh) return (1.0 - h.array().square()).matrix();
  return (z.array() > 0.0).cast<double>().matrix();
}

Matrix activation_grad2(const Matrix& h, Activation act) {
  if (act == Activation::tanh) return (-2.0 * h.array() * (1.0 - h.array().square())).matrix();
  return Matrix::Zero(h.rows(), h.cols());
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
std::string to_string(Head h) { return h == Head::scalar_logit ? "scalar_logit" : "gaussian_mean"; }

std::vector<ConstParamRef> MlpGrads::refs() const {
  std::vector<ConstParamRef> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.push_back({"W" + std::to_string(l), {layers[l].weight.data(), static_cast<std::size_t>(layers[l].weight.size())}});
    out.push_back({"b" + std::to_string(l), {layers[l].bias.data(), static_cast<std::size_t>(layers[l].bias.size())}});
  }
  return out;
}

void MlpGrads::add(const MlpGrads& other, double scale) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += scale * other.layers[l].weight;
    layers[l].bias += scale * other.layers[l].bias;
  }
}

std::vector<int> mlp_shape(int input, int hidden, int output, int depth) {
  std::vector<int> s{input};
  for (int i = 0; i < depth; ++i) s.push_back(hidden);
  s.push_back(output);
  return s;
}

Mlp::Mlp(std::vector<int> sizes, Activation act, Head head) : sizes_(std::move(sizes)), act_(act), head_(head) {
  if (sizes_.size() < 2) throw Error("Mlp needs at least input and output sizes");
  for (int s : sizes_)
    if (s < 1) throw Error("Mlp layer sizes must be positive");
  if (head_ == Head::scalar_logit && sizes_.back() != 1) throw Error("scalar_logit head needs output size 1");
  for (std::size_t l = 1; l < sizes_.size(); ++l)
    layers_.push_back({Matrix::Zero(sizes_[l], sizes_[l - 1]), Vector::Zero(sizes_[l])});
}

Mlp Mlp::init(std::vector<int> sizes, Activation act, Head head, Rng& rng) {
  Mlp net(std::move(sizes), act, head);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(rng);
  }
  return net;
}

Matrix Mlp::forward(const Matrix& x, ForwardCache* cache) const {
  if (x.cols() != input_size())
    throw DimensionError("Mlp::forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(input_size()));
  if (!x.allFinite()) throw NumericError("Mlp::forward: non-finite input");
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = h * layers_[l].weight.transpose();
    z.rowwise() += layers_[l].bias.transpose();
    const bool last = l + 1 == layers_.size();
    if (last) {
      if (cache) cache->pre.push_back(z);
      return z;
    }
    h = activate(z, act_);
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(h);
    }
  }
  return h;
}

MlpGrads Mlp::backward(const ForwardCache& cache, const Matrix& upstream) const {
  if (cache.pre.size() != layers_.size()) throw DimensionError("Mlp::backward: cache does not match network");
  if (upstream.rows() != cache.input.rows() || upstream.cols() != output_size())
    throw DimensionError("Mlp::backward: upstream gradient shape mismatch");
  MlpGrads g;
  g.layers.resize(layers_.size());
  Matrix delta = upstream;  // dL/dz_l
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Matrix& below = l == 0 ? cache.input : cache.post[l - 1];
    g.layers[l].weight = delta.transpose() * below;
    g.layers[l].bias = delta.colwise().sum().transpose();
    Matrix dh = delta * layers_[l].weight;
    if (l == 0) {
      g.input = std::move(dh);
    } else {
      delta = dh.cwiseProduct(activation_grad(cache.pre[l - 1], cache.post[l - 1], act_));
    }
  }
  return g;
}

Mlp::PenaltyResult Mlp::input_gradient_penalty(const Matrix& x) const {
  if (output_size() != 1) throw Error("input_gradient_penalty needs a scalar-output net");
  const auto B = x.rows();
  const auto L = layers_.size();
  ForwardCache cache;
  forward(x, &cache);

  // First-order pass: a_l = d out / d z_l, v_l = d out / d h_{l-1} (v_0 = input gradient).
  std::vector<Matrix> a(L), v(L), dact(L);
  a[L - 1] = Matrix::Ones(B, 1);
  for (std::size_t l = L; l-- > 0;) {
    v[l] = a[l] * layers_[l].weight;
    if (l > 0) {
      dact[l - 1] = activation_grad(cache.pre[l - 1], cache.post[l - 1], act_);
      a[l - 1] = v[l].cwiseProduct(dact[l - 1]);
    }
  }
  const Matrix& g = v[0];
  Vector norms = g.rowwise().norm();

  PenaltyResult res;
  res.grad_norms = norms;
  res.value = (norms.array() - 1.0).square().mean();
  res.grads = zero_grads();
  res.grads.input = Matrix::Zero(B, input_size());

  // adjoint of g
  Matrix vbar(B, g.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    const double n = norms[b];
    const double scale = n > 0.0 ? 2.0 * (n - 1.0) / (n * static_cast<double>(B)) : 0.0;
    vbar.row(b) = scale * g.row(b);
  }

  // Reverse through the first-order pass, collecting direct adjoints of z_l.
  std::vector<Matrix> zbar_direct(L);
  for (std::size_t l = 0; l < L; ++l) {
    // v_l = a_l W_l
    res.grads.layers[l].weight += a[l].transpose() * vbar;
    Matrix abar = vbar * layers_[l].weight.transpose();
    if (l + 1 == L) break;  // a_{L-1} is constant
    // a_l = v_{l+1} * act'(z_l)
    const Matrix& hl = cache.post[l];
    zbar_direct[l] = abar.cwiseProduct(v[l + 1]).cwiseProduct(activation_grad2(hl, act_));
    vbar = abar.cwiseProduct(dact[l]);
  }

  // Propagate the z adjoints through the forward graph.
  Matrix zhat = Matrix::Zero(B, output_size());
  for (std::size_t l = L; l-- > 0;) {
    if (l + 1 < L) {
      Matrix hbar = zhat * layers_[l + 1].weight;
      zhat = hbar.cwiseProduct(dact[l]) + zbar_direct[l];
    }
    if (l + 1 == L) continue;  // the output itself is not penalized
    const Matrix& below = l == 0 ? cache.input : cache.post[l - 1];
    res.grads.layers[l].weight += zhat.transpose() * below;
    res.grads.layers[l].bias += zhat.colwise().sum().transpose();
  }
  return res;
}

std::vector<ParamRef> Mlp::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& L = layers_[l];
    out.push_back({"W" + std::to_string(l), {L.weight.data(), static_cast<std::size_t>(L.weight.size())}});
    out.push_back({"b" + std::to_string(l), {L.bias.data(), static_cast<std::size_t>(L.bias.size())}});
  }
  return out;
}

std::vector<ConstParamRef> Mlp::parameters() const {
  std::vector<ConstParamRef> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    out.push_back({"W" + std::to_string(l), {L.weight.data(), static_cast<std::size_t>(L.weight.size())}});
    out.push_back({"b" + std::to_string(l), {L.bias.data(), static_cast<std::size_t>(L.bias.size())}});
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += static_cast<std::size_t>(L.weight.size() + L.bias.size());
  return n;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (const auto& L : layers_)
    g.layers.push_back({Matrix::Zero(L.weight.rows(), L.weight.cols()), Vector::Zero(L.bias.size())});
  return g;
}

bool Mlp::all_finite() const {
  for (const auto& L : layers_)
    if (!L.weight.allFinite() || !L.bias.allFinite()) return false;
  return true;
}

bool Mlp::operator==(const Mlp& o) const {
  if (sizes_ != o.sizes_ || act_ != o.act_ || head_ != o.head_) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    if (layers_[l].weight != o.layers_[l].weight || layers_[l].bias != o.layers_[l].bias) return false;
  return true;
}

Vector flatten(std::span<const ConstParamRef> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.values.size();
  Vector out(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (const auto& p : params)
    for (double v : p.values) out[k++] = v;
  return out;
}

void assign(std::span<const ParamRef> params, const Vector& flat) {
  Eigen::Index k = 0;
  for (const auto& p : params)
    for (double& v : p.values) {
      if (k >= flat.size()) throw DimensionError("assign: flat vector too short");
      v = flat[k++];
    }
  if (k != flat.size()) throw DimensionError("assign: flat vector too long");
}

// --- checkpoints ----------------------------------------------------------------

namespace {
constexpr int kCheckpointVersion = 1;
}

std::string checkpoint_json(const Mlp& net) {
  nlohmann::json j;
  j["format"] = "tailo-mlp";
  j["version"] = kCheckpointVersion;
  j["sizes"] = net.sizes();
  j["activation"] = to_string(net.activation());
  j["head"] = to_string(net.head());
  auto layers = nlohmann::json::array();
  for (const auto& L : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(L.weight.size()));
    for (Eigen::Index i = 0; i < L.weight.rows(); ++i)
      for (Eigen::Index c = 0; c < L.weight.cols(); ++c) w.push_back(L.weight(i, c));
    std::vector<double> b(L.bias.data(), L.bias.data() + L.bias.size());
    layers.push_back({{"weight", w}, {"bias", b}});
  }
  j["layers"] = layers;
  return j.dump();
}

Mlp checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "tailo-mlp") throw Error("checkpoint: unknown format");
  if (j.value("version", 0) != kCheckpointVersion) throw Error("checkpoint: unsupported version");
  const auto act = j.at("activation").get<std::string>() == "tanh" ? Activation::tanh : Activation::relu;
  const auto head = j.at("head").get<std::string>() == "scalar_logit" ? Head::scalar_logit : Head::gaussian_mean;
  Mlp net(j.at("sizes").get<std::vector<int>>(), act, head);
  const auto& layers = j.at("layers");
  if (layers.size() != net.layers().size()) throw DimensionError("checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& L = net.layers()[l];
    const auto w = layers[l].at("weight").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != L.weight.size() || static_cast<Eigen::Index>(b.size()) != L.bias.size())
      throw DimensionError("checkpoint: parameter shape mismatch in layer " + std::to_string(l));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < L.weight.rows(); ++i)
      for (Eigen::Index c = 0; c < L.weight.cols(); ++c) L.weight(i, c) = w[k++];
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias[i] = b[static_cast<std::size_t>(i)];
  }
  return net;
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << checkpoint_json(net) << '\n';
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace tailo::nn
