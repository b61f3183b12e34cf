#include <gtest/gtest.h>

#include <sstream>

#include "kinship/pipeline.hpp"

namespace kinship {
namespace {

// Small model so the suite stays fast on one core.
RunConfig small_run() {
  RunConfig c;
  c.seed = 3;
  c.synth.num_families = 24;
  c.synth.seed = c.seed;
  c.model.input_dim = c.synth.archetype_dim;
  c.model.encoder_hidden = 32;
  c.model.embedding_dim = 32;
  c.model.projection_hidden = 32;
  c.model.classifier_hidden = 16;
  c.model.seed = c.seed;
  c.stage1.batch_size = 8;
  c.stage1.steps = 20;
  c.stage1.seed = c.seed;
  c.stage2.batch_size = 8;
  c.stage2.steps = 20;
  c.stage2.seed = c.seed;
  return c;
}

struct Fixture {
  RunConfig config = small_run();
  SyntheticSplit split = make_synthetic_split(config);
  Sampler sampler(std::size_t batch) const {
    return Sampler(split.data.dataset, split.train, batch, derive_seed(config.seed, "sampler"));
  }
};

TEST(TrainContrastive, ZeroStepsIsANoOp) {
  Fixture f;
  auto model = KinshipModel::create(f.config.model);
  const auto before = model;
  auto s = f.sampler(8);
  f.config.stage1.steps = 0;
  const auto log = train_contrastive(f.split.features, s, model, f.config.stage1);
  EXPECT_TRUE(log.empty());
  EXPECT_TRUE(model.encoder.net() == before.encoder.net());
  EXPECT_TRUE(model.head.net() == before.head.net());
  EXPECT_FALSE(model.encoder.stage1_complete());
}

TEST(TrainContrastive, FrozenEncoderIsBitwiseUnchanged) {
  Fixture f;
  auto model = KinshipModel::create(f.config.model);
  const auto before = model;
  auto s = f.sampler(8);
  f.config.stage1.encoder_mode = TrainableMode::frozen;
  train_contrastive(f.split.features, s, model, f.config.stage1);
  EXPECT_TRUE(model.encoder.net() == before.encoder.net());
  EXPECT_FALSE(model.head.net() == before.head.net());
  EXPECT_TRUE(model.encoder.stage1_complete());
}

TEST(TrainContrastive, FinetunedEncoderMoves) {
  Fixture f;
  auto model = KinshipModel::create(f.config.model);
  const auto before = model;
  auto s = f.sampler(8);
  const auto log = train_contrastive(f.split.features, s, model, f.config.stage1);
  EXPECT_FALSE(model.encoder.net() == before.encoder.net());
  EXPECT_EQ(log.steps().size(), 20u);
  EXPECT_EQ(log.steps().front().step, 1u);
}

TEST(TrainContrastive, DeterministicUnderSeed) {
  Fixture f;
  auto a = KinshipModel::create(f.config.model), b = a;
  auto sa = f.sampler(8), sb = f.sampler(8);
  const auto la = train_contrastive(f.split.features, sa, a, f.config.stage1);
  const auto lb = train_contrastive(f.split.features, sb, b, f.config.stage1);
  EXPECT_TRUE(a.encoder.net() == b.encoder.net());
  EXPECT_TRUE(a.head.net() == b.head.net());
  for (std::size_t i = 0; i < la.steps().size(); ++i) EXPECT_EQ(la.steps()[i].loss, lb.steps()[i].loss);
}

TEST(TrainContrastive, LossDecreasesOverThreeHundredSteps) {
  RunConfig c;  // library defaults, small synthetic set
  c.synth.num_families = 30;
  const auto split = make_synthetic_split(c);
  auto model = KinshipModel::create(c.model);
  c.stage1.steps = 300;
  Sampler s(split.data.dataset, split.train, c.stage1.batch_size, derive_seed(c.seed, "sampler"));
  const auto log = train_contrastive(split.features, s, model, c.stage1);
  EXPECT_LT(log.mean_loss(250, 300), log.mean_loss(0, 50));
}

TEST(TrainContrastive, SnapshotHookFeedsTheLog) {
  Fixture f;
  auto model = KinshipModel::create(f.config.model);
  auto s = f.sampler(8);
  const auto log =
      train_contrastive(f.split.features, s, model, f.config.stage1, {5, [](std::size_t step) { return step / 100.0; }});
  ASSERT_EQ(log.snapshots().size(), 4u);
  EXPECT_EQ(log.snapshots()[1].step, 10u);
  std::ostringstream csv;
  log.write_csv(csv);
  EXPECT_NE(csv.str().find("step,loss,accuracy\n1,"), std::string::npos);
  EXPECT_NE(csv.str().find(",0.1\n"), std::string::npos);
}

TEST(TrainContrastive, RejectsBadConfig) {
  Fixture f;
  auto model = KinshipModel::create(f.config.model);
  auto s = f.sampler(8);
  f.config.stage1.temperature = 0;
  EXPECT_THROW(train_contrastive(f.split.features, s, model, f.config.stage1), ConfigError);
  f.config.stage1 = small_run().stage1;
  const Matrix<Real> wrong = Matrix<Real>::Zero(f.split.features.rows(), 5);
  EXPECT_THROW(train_contrastive(wrong, s, model, f.config.stage1), ConfigError);
}

TEST(TrainingLog, StepsMustIncrease) {
  TrainingLog log;
  log.add_step(1, 0.5, 0);
  EXPECT_THROW(log.add_step(1, 0.4, 0), InvariantViolation);
  EXPECT_THROW(log.mean_loss(1, 1), DomainError);
}

Batch distinct_family_batch(std::size_t n) {
  Batch b;
  for (std::size_t k = 0; k < n; ++k) {
    KinPair p{2 * k, 2 * k + 1, "F" + std::to_string(k), Relationship::FS};
    b.items.push_back({k, 2 * k, 2 * k + 1, p});
  }
  return b;
}

TEST(PairExamples, NPositivesAndNNegatives) {
  Rng rng(0);
  const auto b = distinct_family_batch(6);
  const auto ex = build_pair_examples(b, 1.0, rng);
  ASSERT_EQ(ex.labels.size(), 12u);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(ex.labels[k], 1.0f);
    EXPECT_EQ(ex.right[k], ex.left[k] + 6);
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t k = 6; k < 12; ++k) {
    EXPECT_EQ(ex.labels[k], 0.0f);
    EXPECT_NE(ex.right[k] - 6, ex.left[k]);
    EXPECT_TRUE(seen.insert({ex.left[k], ex.right[k]}).second);
  }
  EXPECT_EQ(build_pair_examples(b, 100.0, rng).labels.size(), 6u + 30u);
  EXPECT_EQ(build_pair_examples(b, 0.5, rng).labels.size(), 9u);
}

TEST(PairExamples, SameFamilyNegativeIsInvariantViolation) {
  Rng rng(0);
  auto b = distinct_family_batch(2);
  b.items[1].pair.family_id = b.items[0].pair.family_id;
  EXPECT_THROW(build_pair_examples(b, 1.0, rng), InvariantViolation);
}

TEST(BceWithLogits, KnownValues) {
  Matrix<Real> logits(2, 1);
  logits << 0, 2;
  Matrix<Real> grad;
  const double loss = bce_with_logits(logits, {1, 0}, grad);
  EXPECT_NEAR(loss, (std::log(2.0) + 2 + std::log1p(std::exp(-2.0))) / 2, 1e-6);
  EXPECT_NEAR(grad(0, 0), -0.25, 1e-7);
  EXPECT_NEAR(grad(1, 0), 1 / (1 + std::exp(-2.0)) / 2, 1e-7);
}

TEST(TrainClassifier, RefusesEncoderWithoutPretraining) {
  Fixture f;
  auto model = KinshipModel::create(f.config.model);
  auto s = f.sampler(8);
  EXPECT_THROW(train_classifier(f.split.features, s, model, f.config.stage2), ConfigError);
  f.config.stage2.require_stage1 = false;
  EXPECT_NO_THROW(train_classifier(f.split.features, s, model, f.config.stage2));
}

TEST(TrainClassifier, FrozenModeTouchesOnlyTheClassifier) {
  Fixture f;
  auto [model, log1] = pretrain(f.split, f.config);
  const auto before = model;
  auto s = f.sampler(8);
  const auto log = train_classifier(f.split.features, s, model, f.config.stage2);
  EXPECT_EQ(log.steps().size(), 20u);
  EXPECT_TRUE(model.encoder.net() == before.encoder.net());
  EXPECT_TRUE(model.head.net() == before.head.net());
  EXPECT_FALSE(model.classifier.net() == before.classifier.net());
}

TEST(TrainClassifier, FinetunedModeMovesTheEncoder) {
  Fixture f;
  auto [model, log1] = pretrain(f.split, f.config);
  const auto before = model;
  auto s = f.sampler(8);
  f.config.stage2.encoder_mode = TrainableMode::finetuned;
  train_classifier(f.split.features, s, model, f.config.stage2);
  EXPECT_FALSE(model.encoder.net() == before.encoder.net());
  EXPECT_EQ(model.encoder.mode(), TrainableMode::finetuned);
}

TEST(TrainClassifier, StepsMustBePositive) {
  Stage2Config c;
  c.steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace kinship
