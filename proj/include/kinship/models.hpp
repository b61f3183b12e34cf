#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "kinship/errors.hpp"
#include "kinship/nn.hpp"
#include "kinship/random.hpp"
#include "kinship/tensor.hpp"

namespace kinship {

using Real = float;

inline constexpr std::size_t kProjectionDim = 128;

enum class TrainableMode { frozen, finetuned };

inline std::string_view to_string(TrainableMode m) noexcept {
  return m == TrainableMode::frozen ? "frozen" : "finetuned";
}

inline TrainableMode parse_trainable_mode(std::string_view s) {
  if (s == "frozen") return TrainableMode::frozen;
  if (s == "finetuned") return TrainableMode::finetuned;
  throw ConfigError("trainable mode must be 'frozen' or 'finetuned', got '" + std::string(s) + "'");
}

struct ModelConfig {
  std::size_t input_dim = 16;
  // "mlp": small trainable encoder over input features.
  // "identity": input features are already backbone embeddings (computed offline).
  std::string encoder = "mlp";
  std::size_t encoder_hidden = 256;
  std::size_t embedding_dim = 512;
  std::size_t projection_hidden = 512;
  std::size_t classifier_hidden = 256;
  bool zero_init_classifier_output = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
    if (encoder != "mlp" && encoder != "identity") {
      throw ConfigError("model: encoder must be 'mlp' or 'identity', got '" + encoder + "'");
    }
    if (encoder == "mlp" && (encoder_hidden == 0 || embedding_dim == 0)) {
      throw ConfigError("model: encoder sizes must be positive");
    }
    if (projection_hidden == 0 || classifier_hidden == 0) throw ConfigError("model: hidden sizes must be positive");
  }

  std::size_t resolved_embedding_dim() const { return encoder == "identity" ? input_dim : embedding_dim; }
};

/// The encoder f: input features → D-dimensional representation h.
class Encoder {
 public:
  Encoder() = default;
  Encoder(nn::Mlp<Real> net, TrainableMode mode) : net_(std::move(net)), mode_(mode) {}

  static Encoder create(const ModelConfig& config, Rng& rng) {
    if (config.encoder == "identity") return Encoder(nn::Mlp<Real>(config.input_dim), TrainableMode::frozen);
    return Encoder(nn::Mlp<Real>({config.input_dim, config.encoder_hidden, config.embedding_dim}, rng),
                   TrainableMode::finetuned);
  }

  Matrix<Real> encode(const Matrix<Real>& inputs, nn::Mlp<Real>::Tape* tape = nullptr) const {
    return net_.forward(inputs, tape);
  }

  Vector<Real> encode_one(const Vector<Real>& input) const {
    return encode(Matrix<Real>(input.transpose())).row(0).transpose();
  }

  std::size_t input_dim() const noexcept { return net_.input_dim(); }
  std::size_t embedding_dim() const noexcept { return net_.output_dim(); }
  TrainableMode mode() const noexcept { return mode_; }
  void set_mode(TrainableMode m) noexcept { mode_ = m; }
  bool trainable() const noexcept { return mode_ == TrainableMode::finetuned && net_.num_layers() > 0; }

  /// Set once contrastive pretraining has run; the classifier stage checks it.
  bool stage1_complete() const noexcept { return stage1_complete_; }
  void mark_stage1_complete(bool v = true) noexcept { stage1_complete_ = v; }

  nn::Mlp<Real>& net() noexcept { return net_; }
  const nn::Mlp<Real>& net() const noexcept { return net_; }

 private:
  nn::Mlp<Real> net_;
  TrainableMode mode_ = TrainableMode::finetuned;
  bool stage1_complete_ = false;
};

/// The projection head g: D → H → 128, ReLU hidden, linear output.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  explicit ProjectionHead(nn::Mlp<Real> net) : net_(std::move(net)) {
    if (net_.num_layers() != 2 || net_.output_dim() != kProjectionDim) {
      throw ConfigError("projection head must be a 2-layer MLP with 128 outputs");
    }
  }

  static ProjectionHead create(std::size_t embedding_dim, std::size_t hidden, Rng& rng) {
    return ProjectionHead(nn::Mlp<Real>({embedding_dim, hidden, kProjectionDim}, rng));
  }

  Matrix<Real> project(const Matrix<Real>& h, nn::Mlp<Real>::Tape* tape = nullptr) const { return net_.forward(h, tape); }

  nn::Mlp<Real>& net() noexcept { return net_; }
  const nn::Mlp<Real>& net() const noexcept { return net_; }

 private:
  nn::Mlp<Real> net_;
};

/// Feature fusion: [a² − b² ; (a − b)²], elementwise, dimension 2D.
template <class DerivedA, class DerivedB>
Vector<typename DerivedA::Scalar> fuse(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DomainError("fuse: embeddings differ in dimension");
  const auto d = a.size();
  Vector<typename DerivedA::Scalar> out(2 * d);
  out.head(d) = (a.array().square() - b.array().square()).matrix();
  out.tail(d) = (a - b).array().square().matrix();
  return out;
}

/// Row-wise fuse of rows a(left[k]) and a(right[k]).
template <class Scalar>
Matrix<Scalar> fuse_rows(const Matrix<Scalar>& h, std::span<const std::size_t> left, std::span<const std::size_t> right) {
  if (left.size() != right.size()) throw DomainError("fuse_rows: index lists differ in length");
  const auto d = h.cols();
  Matrix<Scalar> out(static_cast<Eigen::Index>(left.size()), 2 * d);
  for (std::size_t k = 0; k < left.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const auto a = h.row(static_cast<Eigen::Index>(left[k])).array();
    const auto b = h.row(static_cast<Eigen::Index>(right[k])).array();
    out.row(r).head(d) = (a.square() - b.square()).matrix();
    out.row(r).tail(d) = (a - b).square().matrix();
  }
  return out;
}

/// Gradient of fuse_rows with respect to h, accumulated into `grad_h`.
template <class Scalar>
void fuse_rows_backward(const Matrix<Scalar>& h, std::span<const std::size_t> left, std::span<const std::size_t> right,
                        const Matrix<Scalar>& grad_fused, Matrix<Scalar>& grad_h) {
  const auto d = h.cols();
  for (std::size_t k = 0; k < left.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const auto li = static_cast<Eigen::Index>(left[k]);
    const auto ri = static_cast<Eigen::Index>(right[k]);
    const auto a = h.row(li).array();
    const auto b = h.row(ri).array();
    const auto g1 = grad_fused.row(r).head(d).array();
    const auto g2 = grad_fused.row(r).tail(d).array();
    const auto diff = (a - b).eval();
    grad_h.row(li).array() += Scalar(2) * (a * g1 + diff * g2);
    grad_h.row(ri).array() -= Scalar(2) * (b * g1 + diff * g2);
  }
}

/// The classifier d: fused 2D features → H' → 1 logit, sigmoid on top.
class FusionClassifier {
 public:
  FusionClassifier() = default;
  explicit FusionClassifier(nn::Mlp<Real> net) : net_(std::move(net)) {
    if (net_.num_layers() != 2 || net_.output_dim() != 1 || net_.input_dim() % 2 != 0) {
      throw ConfigError("classifier must be a 2-layer MLP from 2D fused features to one output");
    }
  }

  static FusionClassifier create(std::size_t embedding_dim, std::size_t hidden, bool zero_output, Rng& rng) {
    nn::Mlp<Real> net({2 * embedding_dim, hidden, 1}, rng);
    if (zero_output) {
      net.layers().back().weight.setZero();
      net.layers().back().bias.setZero();
    }
    return FusionClassifier(std::move(net));
  }

  std::size_t embedding_dim() const noexcept { return net_.input_dim() / 2; }

  Matrix<Real> logits(const Matrix<Real>& fused, nn::Mlp<Real>::Tape* tape = nullptr) const {
    return net_.forward(fused, tape);
  }

  nn::Mlp<Real>& net() noexcept { return net_; }
  const nn::Mlp<Real>& net() const noexcept { return net_; }

 private:
  nn::Mlp<Real> net_;
};

/// Logistic function kept strictly inside (0, 1).
inline double probability_from_logit(double logit) {
  const double p = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(p, lo, hi);
}

/// P(kin) = d(fuse(f(x_i), f(x_j))).
inline double classify_pair(const Vector<Real>& x_i, const Vector<Real>& x_j, const Encoder& encoder,
                            const FusionClassifier& classifier) {
  if (encoder.embedding_dim() != classifier.embedding_dim()) {
    throw DomainError("classify_pair: encoder and classifier dimensions disagree");
  }
  Matrix<Real> inputs(2, x_i.size());
  if (x_i.size() != x_j.size()) throw DomainError("classify_pair: inputs differ in dimension");
  inputs.row(0) = x_i.transpose();
  inputs.row(1) = x_j.transpose();
  const Matrix<Real> h = encoder.encode(inputs);
  const Vector<Real> fused = fuse(h.row(0).transpose(), h.row(1).transpose());
  const Matrix<Real> logit = classifier.logits(Matrix<Real>(fused.transpose()));
  return probability_from_logit(static_cast<double>(logit(0, 0)));
}

/// f, g and d together with the configuration that built them.
struct KinshipModel {
  ModelConfig config;
  Encoder encoder;
  ProjectionHead head;
  FusionClassifier classifier;

  static KinshipModel create(const ModelConfig& config) {
    config.validate();
    Rng rng{derive_seed(config.seed, "init")};
    KinshipModel m;
    m.config = config;
    m.encoder = Encoder::create(config, rng);
    const auto d = m.encoder.embedding_dim();
    m.head = ProjectionHead::create(d, config.projection_hidden, rng);
    m.classifier = FusionClassifier::create(d, config.classifier_hidden, config.zero_init_classifier_output, rng);
    return m;
  }
};

}  // namespace kinship
