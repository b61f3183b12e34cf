#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kinship/augment.hpp"
#include "kinship/contrastive_loss.hpp"
#include "kinship/errors.hpp"
#include "kinship/models.hpp"
#include "kinship/nn.hpp"
#include "kinship/random.hpp"
#include "kinship/sampler.hpp"

namespace kinship {

/// Contrastive pretraining defaults: SGD(lr 5e-5, momentum 0.9, wd 1e-4), τ = 0.07, N = 32.
struct Stage1Config {
  double learning_rate = 5e-5;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  double temperature = 0.07;
  std::size_t batch_size = 32;
  std::size_t steps = 1250;
  // frozen: only the projection head learns.
  TrainableMode encoder_mode = TrainableMode::finetuned;
  AugmentPolicy augment = AugmentPolicy::standard();
  std::uint64_t seed = 0;

  void validate() const {
    if (!(temperature > 0)) throw ConfigError("stage1: temperature must be positive");
    if (batch_size < 2) throw ConfigError("stage1: batch_size must be at least 2");
    if (!(learning_rate > 0)) throw ConfigError("stage1: learning_rate must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("stage1: momentum must lie in [0,1)");
    if (!(weight_decay >= 0)) throw ConfigError("stage1: weight_decay must be non-negative");
  }
};

/// Classifier training defaults: Adam(lr 1e-4), binary cross-entropy, N = 32.
struct Stage2Config {
  double learning_rate = 1e-4;
  // Encoder step size in finetuned mode, as a multiple of learning_rate.
  double encoder_lr_scale = 0.03;
  std::size_t batch_size = 32;
  std::size_t steps = 1500;
  TrainableMode encoder_mode = TrainableMode::frozen;
  double negative_ratio = 1.0;
  bool augment = true;
  AugmentPolicy augment_policy = AugmentPolicy::standard();
  // Refuse encoders that never went through contrastive pretraining.
  bool require_stage1 = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 1) throw ConfigError("stage2: steps must be at least 1");
    if (!(negative_ratio > 0)) throw ConfigError("stage2: negative_ratio must be positive");
    if (batch_size < 2) throw ConfigError("stage2: batch_size must be at least 2");
    if (!(learning_rate > 0)) throw ConfigError("stage2: learning_rate must be positive");
    if (!(encoder_lr_scale > 0)) throw ConfigError("stage2: encoder_lr_scale must be positive");
  }
};

class TrainingLog {
 public:
  struct Step {
    std::size_t step;
    double loss;
    double wall_seconds;
  };
  struct Snapshot {
    std::size_t step;
    double accuracy;
  };

  void add_step(std::size_t step, double loss, double wall_seconds) {
    if (!steps_.empty() && step <= steps_.back().step) throw InvariantViolation("training log: step indices must increase");
    steps_.push_back({step, loss, wall_seconds});
  }

  void add_snapshot(std::size_t step, double accuracy) {
    if (!snapshots_.empty() && step <= snapshots_.back().step) {
      throw InvariantViolation("training log: snapshot steps must increase");
    }
    snapshots_.push_back({step, accuracy});
  }

  const std::vector<Step>& steps() const noexcept { return steps_; }
  const std::vector<Snapshot>& snapshots() const noexcept { return snapshots_; }
  bool empty() const noexcept { return steps_.empty(); }

  /// Mean loss over steps [first, last).
  double mean_loss(std::size_t first, std::size_t last) const {
    last = std::min(last, steps_.size());
    if (first >= last) throw DomainError("training log: empty range");
    double s = 0;
    for (auto i = first; i < last; ++i) s += steps_[i].loss;
    return s / static_cast<double>(last - first);
  }

  /// `step,loss[,accuracy]` lines; the accuracy field appears on snapshot steps.
  void write_csv(std::ostream& out) const {
    out << "step,loss,accuracy\n";
    std::size_t snap = 0;
    std::ostringstream line;
    line.precision(9);
    for (const auto& s : steps_) {
      line.str("");
      line << s.step << ',' << s.loss;
      while (snap < snapshots_.size() && snapshots_[snap].step < s.step) ++snap;
      if (snap < snapshots_.size() && snapshots_[snap].step == s.step) line << ',' << snapshots_[snap].accuracy;
      out << line.str() << '\n';
    }
  }

 private:
  std::vector<Step> steps_;
  std::vector<Snapshot> snapshots_;
};

/// Called every `every` steps with the step index; returns an accuracy.
struct SnapshotHook {
  std::size_t every = 0;
  std::function<double(std::size_t)> evaluate;
};

namespace detail {

inline std::string batch_families(const Batch& b) {
  std::string s;
  for (const auto& item : b.items) s += (s.empty() ? "" : ",") + item.pair.family_id;
  return s;
}

// Rows [x_1..x_N, y_1..y_N] gathered from the per-image feature matrix.
inline Matrix<Real> gather_inputs(const Batch& b, const Matrix<Real>& features) {
  const auto n = static_cast<Eigen::Index>(b.size());
  Matrix<Real> x(2 * n, features.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& item = b.items[static_cast<std::size_t>(k)];
    x.row(k) = features.row(static_cast<Eigen::Index>(item.image_x));
    x.row(n + k) = features.row(static_cast<Eigen::Index>(item.image_y));
  }
  return x;
}

inline void check_inputs(const Sampler& sampler, const Matrix<Real>& features, const Encoder& encoder,
                         std::size_t batch_size) {
  if (static_cast<std::size_t>(features.rows()) != sampler.dataset().images().size()) {
    throw ConfigError("feature matrix must have one row per dataset image");
  }
  if (static_cast<std::size_t>(features.cols()) != encoder.input_dim()) {
    throw ConfigError("feature dimension " + std::to_string(features.cols()) + " does not match encoder input " +
                      std::to_string(encoder.input_dim()));
  }
  if (sampler.batch_size() != batch_size) throw ConfigError("sampler batch_size differs from the stage config");
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Contrastive pretraining of f and g. `features` has one row per dataset
/// image. Each step draws one sampler batch, augments every image
/// independently, and applies one SGD update of the symmetric batch loss.
inline TrainingLog train_contrastive(const Matrix<Real>& features, Sampler& sampler, KinshipModel& model,
                                     const Stage1Config& config, const SnapshotHook& hook = {}) {
  config.validate();
  detail::check_inputs(sampler, features, model.encoder, config.batch_size);
  model.encoder.set_mode(config.encoder_mode);
  TrainingLog log;
  if (config.steps == 0) return log;

  Rng aug_rng{derive_seed(config.seed, "augment")};
  nn::Sgd<Real> opt({config.learning_rate, config.momentum, config.weight_decay});
  const bool train_encoder = model.encoder.trainable();
  std::vector<Matrix<Real>*> params = model.head.net().parameters();
  if (train_encoder) {
    for (auto* p : model.encoder.net().parameters()) params.push_back(p);
  }
  const auto tau = static_cast<Real>(config.temperature);
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const Batch batch = sampler.next_batch_cycling();
    const Matrix<Real> x = augment(detail::gather_inputs(batch, features), config.augment, aug_rng);

    nn::Mlp<Real>::Tape enc_tape, head_tape;
    const Matrix<Real> h = model.encoder.encode(x, train_encoder ? &enc_tape : nullptr);
    const Matrix<Real> z = model.head.project(h, &head_tape);
    Matrix<Real> grad_z;
    Real loss;
    try {
      loss = batch_loss<Real>(z, tau, &grad_z);
    } catch (const DomainError& e) {
      throw NumericalError("stage1 step " + std::to_string(step) + ": " + e.what() + " (families " +
                           detail::batch_families(batch) + ")");
    }
    if (!std::isfinite(loss) || !grad_z.allFinite()) {
      throw NumericalError("stage1 step " + std::to_string(step) + ": non-finite loss (families " +
                           detail::batch_families(batch) + ")");
    }

    auto grads = model.head.net().zero_gradients();
    const Matrix<Real> grad_h = model.head.net().backward(head_tape, grad_z, grads);
    if (train_encoder) {
      auto enc_grads = model.encoder.net().zero_gradients();
      model.encoder.net().backward(enc_tape, grad_h, enc_grads);
      for (auto& g : enc_grads) grads.push_back(std::move(g));
    }
    opt.step(params, grads);
    log.add_step(step, static_cast<double>(loss), detail::seconds_since(t0));
    if (hook.every && hook.evaluate && step % hook.every == 0) log.add_snapshot(step, hook.evaluate(step));
  }
  model.encoder.mark_stage1_complete();
  return log;
}

/// Labelled stage-2 examples over the 2N rows of one batch.
struct PairExamples {
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  std::vector<Real> labels;  // 1 = kin, 0 = non-kin
};

/// Positives are the batch's own pairs (x_k, y_k). Negatives are cross pairs
/// (x_a, y_b), a ≠ b, sampled without replacement, round(ratio·N) of them
/// (capped at N(N−1)). Cross pairs are non-kin because batch families are distinct.
inline PairExamples build_pair_examples(const Batch& batch, double negative_ratio, Rng& rng) {
  const auto n = batch.size();
  PairExamples ex;
  for (std::size_t k = 0; k < n; ++k) {
    ex.left.push_back(k);
    ex.right.push_back(n + k);
    ex.labels.push_back(Real(1));
  }
  std::vector<std::pair<std::size_t, std::size_t>> cross;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b) cross.emplace_back(a, b);
  std::shuffle(cross.begin(), cross.end(), rng);
  const auto wanted = static_cast<std::size_t>(std::llround(negative_ratio * static_cast<double>(n)));
  cross.resize(std::min(wanted, cross.size()));
  for (auto [a, b] : cross) {
    if (batch.items[a].pair.family_id == batch.items[b].pair.family_id) {
      throw InvariantViolation("negative example joins two members of family '" + batch.items[a].pair.family_id + "'");
    }
    ex.left.push_back(a);
    ex.right.push_back(n + b);
    ex.labels.push_back(Real(0));
  }
  return ex;
}

/// Mean binary cross-entropy on logits; fills dL/dlogit.
inline double bce_with_logits(const Matrix<Real>& logits, const std::vector<Real>& labels, Matrix<Real>& grad) {
  const auto m = logits.rows();
  grad.resize(m, 1);
  double total = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = logits(i, 0);
    const double y = labels[static_cast<std::size_t>(i)];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    grad(i, 0) = static_cast<Real>((probability_from_logit(x) - y) / static_cast<double>(m));
  }
  return total / static_cast<double>(m);
}

/// Binary kin classifier on top of the pretrained encoder. The encoder moves
/// only in finetuned mode; optimizer state starts fresh.
inline TrainingLog train_classifier(const Matrix<Real>& features, Sampler& sampler, KinshipModel& model,
                                    const Stage2Config& config, const SnapshotHook& hook = {}) {
  config.validate();
  detail::check_inputs(sampler, features, model.encoder, config.batch_size);
  if (config.require_stage1 && !model.encoder.stage1_complete()) {
    throw ConfigError("stage2: encoder has not been through contrastive pretraining (override to force)");
  }
  model.encoder.set_mode(config.encoder_mode);

  Rng aug_rng{derive_seed(config.seed, "augment2")};
  Rng neg_rng{derive_seed(config.seed, "negatives")};
  nn::Adam<Real> opt({config.learning_rate});
  nn::Adam<Real> encoder_opt({config.learning_rate * config.encoder_lr_scale});
  const bool train_encoder = model.encoder.trainable();
  const auto params = model.classifier.net().parameters();
  const auto encoder_params = model.encoder.net().parameters();
  TrainingLog log;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const Batch batch = sampler.next_batch_cycling();
    Matrix<Real> x = detail::gather_inputs(batch, features);
    if (config.augment) x = augment(x, config.augment_policy, aug_rng);
    const auto ex = build_pair_examples(batch, config.negative_ratio, neg_rng);

    nn::Mlp<Real>::Tape enc_tape, cls_tape;
    const Matrix<Real> h = model.encoder.encode(x, train_encoder ? &enc_tape : nullptr);
    const Matrix<Real> fused = fuse_rows<Real>(h, ex.left, ex.right);
    const Matrix<Real> logits = model.classifier.logits(fused, &cls_tape);
    Matrix<Real> grad_logits;
    const double loss = bce_with_logits(logits, ex.labels, grad_logits);
    if (!std::isfinite(loss)) {
      throw NumericalError("stage2 step " + std::to_string(step) + ": non-finite loss (families " +
                           detail::batch_families(batch) + ")");
    }

    auto grads = model.classifier.net().zero_gradients();
    const Matrix<Real> grad_fused = model.classifier.net().backward(cls_tape, grad_logits, grads);
    if (train_encoder) {
      Matrix<Real> grad_h = Matrix<Real>::Zero(h.rows(), h.cols());
      fuse_rows_backward<Real>(h, ex.left, ex.right, grad_fused, grad_h);
      auto enc_grads = model.encoder.net().zero_gradients();
      model.encoder.net().backward(enc_tape, grad_h, enc_grads);
      encoder_opt.step(encoder_params, enc_grads);
    }
    opt.step(params, grads);
    log.add_step(step, loss, detail::seconds_since(t0));
    if (hook.every && hook.evaluate && step % hook.every == 0) log.add_snapshot(step, hook.evaluate(step));
  }
  return log;
}

}  // namespace kinship
