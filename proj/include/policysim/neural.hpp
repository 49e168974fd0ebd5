#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace policysim {

/// Scalar regressor: out = W2 . relu(W1 x + b1) + b2.
///
/// Parameters live in one flat vector laid out as [W1 (row-major,
/// hidden x input), b1, W2, b2], and gradients use the same layout.
class TwoLayerNet {
 public:
  TwoLayerNet() = default;
  /// He-normal first layer, 1/sqrt(hidden) second layer, zero biases.
  TwoLayerNet(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

  [[nodiscard]] std::size_t input_dim() const noexcept { return input_; }
  [[nodiscard]] std::size_t hidden_dim() const noexcept { return hidden_; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }

  std::vector<double>& parameters() noexcept { return params_; }
  [[nodiscard]] const std::vector<double>& parameters() const noexcept { return params_; }

  // Offsets into the flat parameter vector.
  [[nodiscard]] std::size_t b1_offset() const noexcept { return hidden_ * input_; }
  [[nodiscard]] std::size_t w2_offset() const noexcept { return hidden_ * input_ + hidden_; }
  [[nodiscard]] std::size_t b2_offset() const noexcept { return hidden_ * input_ + 2 * hidden_; }

  /// Throws kShape when x has the wrong length.
  [[nodiscard]] double forward(std::span<const double> x) const;
  /// Hidden activations relu(W1 x + b1).
  [[nodiscard]] std::vector<double> hidden(std::span<const double> x) const;
  /// d(loss)/d(params) given d(loss)/d(out).
  [[nodiscard]] std::vector<double> backward(std::span<const double> x, double grad_out) const;
  /// d(out)/d[W2, b2]: the hidden activations followed by 1.
  [[nodiscard]] std::vector<double> last_layer_gradient(std::span<const double> x) const;

  bool operator==(const TwoLayerNet&) const = default;

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
};

nlohmann::json to_json(const TwoLayerNet& net);
TwoLayerNet net_from_json(const nlohmann::json& j);

/// Last-layer gradient of the exploit output, L2-normalized (left as is when
/// it is all zeros). Input to the exploration net.
std::vector<double> grad_features(const TwoLayerNet& exploit, std::span<const double> x);

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t size, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::vector<double>& params, std::span<const double> grads);

  [[nodiscard]] double learning_rate() const noexcept { return lr_; }
  [[nodiscard]] std::int64_t steps() const noexcept { return t_; }

  friend nlohmann::json to_json(const Adam& adam);
  friend Adam adam_from_json(const nlohmann::json& j);
  bool operator==(const Adam&) const = default;

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

nlohmann::json to_json(const Adam& adam);
Adam adam_from_json(const nlohmann::json& j);

}  // namespace policysim
