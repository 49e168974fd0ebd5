#include "policysim/neural.hpp"

#include <algorithm>
#include <cmath>

#include "policysim/error.hpp"
#include "policysim/matrix.hpp"
#include "policysim/rng.hpp"

namespace policysim {

TwoLayerNet::TwoLayerNet(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed)
    : input_(input_dim), hidden_(hidden_dim), params_(hidden_dim * input_dim + 2 * hidden_dim + 1, 0.0) {
  if (input_dim == 0 || hidden_dim == 0) throw Error(ErrorCode::kInvalidArgument, "network dimensions must be positive");
  Rng rng(seed);
  const double s1 = std::sqrt(2.0 / static_cast<double>(input_));
  for (std::size_t i = 0; i < hidden_ * input_; ++i) params_[i] = s1 * rng.normal();
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (std::size_t j = 0; j < hidden_; ++j) params_[w2_offset() + j] = s2 * rng.normal();
}

std::vector<double> TwoLayerNet::hidden(std::span<const double> x) const {
  if (x.size() != input_) {
    throw Error(ErrorCode::kShape, "network expects input of length " + std::to_string(input_) + ", got " +
                                       std::to_string(x.size()));
  }
  std::vector<double> h(hidden_);
  for (std::size_t j = 0; j < hidden_; ++j) {
    double z = params_[b1_offset() + j];
    const double* w = params_.data() + j * input_;
    for (std::size_t i = 0; i < input_; ++i) z += w[i] * x[i];
    h[j] = z > 0.0 ? z : 0.0;
  }
  return h;
}

double TwoLayerNet::forward(std::span<const double> x) const {
  const auto h = hidden(x);
  double out = params_[b2_offset()];
  for (std::size_t j = 0; j < hidden_; ++j) out += params_[w2_offset() + j] * h[j];
  return out;
}

std::vector<double> TwoLayerNet::backward(std::span<const double> x, double grad_out) const {
  const auto h = hidden(x);
  std::vector<double> g(params_.size(), 0.0);
  for (std::size_t j = 0; j < hidden_; ++j) {
    g[w2_offset() + j] = grad_out * h[j];
    if (h[j] <= 0.0) continue;  // relu'(z) = 0 for z <= 0
    const double dz = grad_out * params_[w2_offset() + j];
    g[b1_offset() + j] = dz;
    double* row = g.data() + j * input_;
    for (std::size_t i = 0; i < input_; ++i) row[i] = dz * x[i];
  }
  g[b2_offset()] = grad_out;
  return g;
}

std::vector<double> TwoLayerNet::last_layer_gradient(std::span<const double> x) const {
  auto h = hidden(x);
  h.push_back(1.0);
  return h;
}

nlohmann::json to_json(const TwoLayerNet& net) {
  return {{"input", net.input_dim()}, {"hidden", net.hidden_dim()}, {"params", net.parameters()}};
}

TwoLayerNet net_from_json(const nlohmann::json& j) {
  TwoLayerNet net(j.at("input").get<std::size_t>(), j.at("hidden").get<std::size_t>(), 0);
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != net.parameter_count()) throw Error(ErrorCode::kShape, "parameter count mismatch");
  net.parameters() = std::move(params);
  return net;
}

std::vector<double> grad_features(const TwoLayerNet& exploit, std::span<const double> x) {
  auto g = exploit.last_layer_gradient(x);
  normalize(g);
  return g;
}

Adam::Adam(std::size_t size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {
  if (!(lr > 0.0)) throw Error(ErrorCode::kConfig, "learning rate must be positive");
}

void Adam::step(std::vector<double>& params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw Error(ErrorCode::kShape, "optimizer size mismatch");
  // An all-zero gradient is a no-op, so momentum does not drift the
  // parameters of an idle optimizer.
  if (std::all_of(grads.begin(), grads.end(), [](double g) { return g == 0.0; })) return;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

nlohmann::json to_json(const Adam& adam) {
  return {{"lr", adam.lr_}, {"beta1", adam.beta1_}, {"beta2", adam.beta2_}, {"eps", adam.eps_},
          {"t", adam.t_},   {"m", adam.m_},         {"v", adam.v_}};
}

Adam adam_from_json(const nlohmann::json& j) {
  Adam a(0, j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
         j.at("eps").get<double>());
  a.t_ = j.at("t").get<std::int64_t>();
  a.m_ = j.at("m").get<std::vector<double>>();
  a.v_ = j.at("v").get<std::vector<double>>();
  return a;
}

}  // namespace policysim
