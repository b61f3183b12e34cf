#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kinship/errors.hpp"
#include "kinship/random.hpp"
#include "kinship/tensor.hpp"

namespace kinship::nn {

template <class Scalar>
struct Linear {
  Matrix<Scalar> weight;  // out x in
  Matrix<Scalar> bias;    // 1 x out

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

/// Fully connected network with ReLU between layers and a linear output.
/// An MLP with no layers is the identity map on `input_dim` features.
template <class Scalar>
class Mlp {
 public:
  /// Activations recorded by forward() for a later backward().
  struct Tape {
    std::vector<Matrix<Scalar>> inputs;  // input to each layer
  };

  Mlp() = default;

  explicit Mlp(std::size_t input_dim) : input_dim_(input_dim) {}

  /// sizes = {in, hidden..., out}. Weights and biases ~ U(−1/√fan_in, 1/√fan_in).
  Mlp(const std::vector<std::size_t>& sizes, Rng& rng) {
    if (sizes.empty()) throw ConfigError("mlp: need at least an input size");
    for (auto s : sizes) {
      if (s == 0) throw ConfigError("mlp: layer sizes must be positive");
    }
    input_dim_ = sizes.front();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto fan_in = static_cast<Eigen::Index>(sizes[l]);
      const auto fan_out = static_cast<Eigen::Index>(sizes[l + 1]);
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(fan_in));
      std::uniform_real_distribution<double> init(-bound, bound);
      Linear<Scalar> layer{Matrix<Scalar>(fan_out, fan_in), Matrix<Scalar>(1, fan_out)};
      for (Eigen::Index r = 0; r < fan_out; ++r)
        for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = static_cast<Scalar>(init(rng));
      for (Eigen::Index c = 0; c < fan_out; ++c) layer.bias(0, c) = static_cast<Scalar>(init(rng));
      layers_.push_back(std::move(layer));
    }
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept {
    return layers_.empty() ? input_dim_ : static_cast<std::size_t>(layers_.back().out());
  }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  const std::vector<Linear<Scalar>>& layers() const noexcept { return layers_; }
  std::vector<Linear<Scalar>>& layers() noexcept { return layers_; }

  /// Rebuilds from explicit layers (checkpoint loading).
  static Mlp from_layers(std::size_t input_dim, std::vector<Linear<Scalar>> layers) {
    Mlp m(input_dim);
    auto in = static_cast<Eigen::Index>(input_dim);
    for (const auto& l : layers) {
      if (l.in() != in || l.bias.rows() != 1 || l.bias.cols() != l.out()) {
        throw ConfigError("mlp: inconsistent layer shapes");
      }
      in = l.out();
    }
    m.layers_ = std::move(layers);
    return m;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Tape* tape = nullptr) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim_) {
      throw DomainError("mlp: expected " + std::to_string(input_dim_) + " input features, got " +
                        std::to_string(x.cols()));
    }
    if (tape) tape->inputs.clear();
    Matrix<Scalar> h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (tape) tape->inputs.push_back(h);
      Matrix<Scalar> z = h * layers_[l].weight.transpose();
      z.rowwise() += layers_[l].bias.row(0);
      if (l + 1 < layers_.size()) z = z.cwiseMax(Scalar(0));
      h = std::move(z);
    }
    return h;
  }

  /// Accumulates parameter gradients into `grads` (parameter order) and
  /// returns the gradient with respect to the input.
  Matrix<Scalar> backward(const Tape& tape, const Matrix<Scalar>& grad_out, std::vector<Matrix<Scalar>>& grads) const {
    if (grads.size() != 2 * layers_.size()) grads = zero_gradients();
    Matrix<Scalar> g = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& input = tape.inputs[l];
      grads[2 * l] += g.transpose() * input;
      grads[2 * l + 1] += g.colwise().sum();
      g = g * layers_[l].weight;
      // The input to layer l>0 is the ReLU output of layer l−1; positive entries pass.
      if (l > 0) g = (input.array() > Scalar(0)).select(g, Scalar(0));
    }
    return g;
  }

  /// Weight, bias, weight, bias, ...
  std::vector<Matrix<Scalar>*> parameters() {
    std::vector<Matrix<Scalar>*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::vector<Matrix<Scalar>> zero_gradients() const {
    std::vector<Matrix<Scalar>> out;
    for (const auto& l : layers_) {
      out.push_back(Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()));
      out.push_back(Matrix<Scalar>::Zero(1, l.bias.cols()));
    }
    return out;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.input_dim_ != b.input_dim_ || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      const auto& la = a.layers_[l];
      const auto& lb = b.layers_[l];
      if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols()) return false;
      if (la.weight != lb.weight || la.bias != lb.bias) return false;
    }
    return true;
  }

 private:
  std::size_t input_dim_ = 0;
  std::vector<Linear<Scalar>> layers_;
};

struct SgdOptions {
  double learning_rate = 5e-5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
/// g ← g + λp;  v ← μv + g;  p ← p − ηv.
template <class Scalar>
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {}

  void step(std::span<Matrix<Scalar>* const> params, std::span<const Matrix<Scalar>> grads) {
    if (params.size() != grads.size()) throw DomainError("sgd: parameter/gradient count mismatch");
    if (velocity_.empty()) {
      for (auto* p : params) velocity_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    }
    const auto lr = static_cast<Scalar>(options_.learning_rate);
    const auto mu = static_cast<Scalar>(options_.momentum);
    const auto wd = static_cast<Scalar>(options_.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix<Scalar> g = grads[i] + wd * *params[i];
      velocity_[i] = mu * velocity_[i] + g;
      *params[i] -= lr * velocity_[i];
    }
  }

 private:
  SgdOptions options_;
  std::vector<Matrix<Scalar>> velocity_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class Scalar>
class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) {}

  void step(std::span<Matrix<Scalar>* const> params, std::span<const Matrix<Scalar>> grads) {
    if (params.size() != grads.size()) throw DomainError("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const auto b1 = static_cast<Scalar>(options_.beta1);
    const auto b2 = static_cast<Scalar>(options_.beta2);
    const auto eps = static_cast<Scalar>(options_.epsilon);
    const auto bc1 = static_cast<Scalar>(1.0 - std::pow(options_.beta1, static_cast<double>(t_)));
    const auto bc2 = static_cast<Scalar>(1.0 - std::pow(options_.beta2, static_cast<double>(t_)));
    const auto lr = static_cast<Scalar>(options_.learning_rate);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grads[i].cwiseProduct(grads[i]);
      const Matrix<Scalar> v_hat = v_[i] / bc2;
      *params[i] -= (lr * (m_[i] / bc1).array() / (v_hat.array().sqrt() + eps)).matrix();
    }
  }

 private:
  AdamOptions options_;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
  std::size_t t_ = 0;
};

}  // namespace kinship::nn
