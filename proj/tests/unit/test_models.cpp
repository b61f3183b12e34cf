#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "kinship/checkpoint.hpp"
#include "kinship/models.hpp"
#include "kinship/nn.hpp"

namespace kinship {
namespace {

Matrix<double> random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Loss = Σ w ⊙ mlp(x) for a fixed random w, so dL/dout = w.
TEST(Mlp, BackwardMatchesCentralDifferences) {
  std::mt19937_64 data_rng(1);
  Rng init(2);
  nn::Mlp<double> net({5, 7, 6, 3}, init);
  const auto x = random_matrix(data_rng, 4, 5);
  const auto w = random_matrix(data_rng, 4, 3);
  auto objective = [&](const nn::Mlp<double>& m, const Matrix<double>& in) { return m.forward(in).cwiseProduct(w).sum(); };

  nn::Mlp<double>::Tape tape;
  net.forward(x, &tape);
  std::vector<Matrix<double>> grads;
  const Matrix<double> grad_x = net.backward(tape, w, grads);

  constexpr double h = 1e-6;
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index i = 0; i < params[k]->size(); ++i) {
      double& p = params[k]->data()[i];
      const double orig = p;
      p = orig + h;
      const double up = objective(net, x);
      p = orig - h;
      const double down = objective(net, x);
      p = orig;
      EXPECT_NEAR(grads[k].data()[i], (up - down) / (2 * h), 1e-6) << "param " << k << " entry " << i;
    }
  }
  Matrix<double> xp = x;
  for (Eigen::Index i = 0; i < xp.size(); ++i) {
    const double orig = xp.data()[i];
    xp.data()[i] = orig + h;
    const double up = objective(net, xp);
    xp.data()[i] = orig - h;
    const double down = objective(net, xp);
    xp.data()[i] = orig;
    EXPECT_NEAR(grad_x.data()[i], (up - down) / (2 * h), 1e-6);
  }
}

TEST(Mlp, InitIsSeededAndBounded) {
  Rng a(5), b(5);
  nn::Mlp<float> m1({16, 256, 512}, a), m2({16, 256, 512}, b);
  EXPECT_TRUE(m1 == m2);
  EXPECT_LE(m1.layers()[0].weight.cwiseAbs().maxCoeff(), 0.25f);
  EXPECT_LE(m1.layers()[1].weight.cwiseAbs().maxCoeff(), 1.0f / 16.0f);
  EXPECT_THROW(nn::Mlp<float>({16, 0, 4}, a), ConfigError);
  EXPECT_THROW(m1.forward(Matrix<float>::Zero(2, 15)), DomainError);
}

TEST(Mlp, EmptyNetworkIsIdentity) {
  nn::Mlp<float> id(4);
  Matrix<float> x = Matrix<float>::Random(3, 4);
  EXPECT_EQ(id.forward(x), x);
  EXPECT_EQ(id.output_dim(), 4u);
}

TEST(Sgd, MomentumAndWeightDecayUpdate) {
  Matrix<double> p(1, 1);
  p << 1.0;
  std::vector<Matrix<double>*> params = {&p};
  const std::vector<Matrix<double>> g = {Matrix<double>::Constant(1, 1, 0.5)};
  nn::Sgd<double> opt({0.1, 0.9, 0.01});
  opt.step(params, g);
  // v = 0.5 + 0.01·1 = 0.51;  p = 1 − 0.051
  EXPECT_NEAR(p(0, 0), 0.949, 1e-15);
  opt.step(params, g);
  // v = 0.9·0.51 + 0.5 + 0.01·0.949 = 0.96849;  p = 0.949 − 0.096849
  EXPECT_NEAR(p(0, 0), 0.852151, 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix<double> p = Matrix<double>::Constant(1, 2, 1.0);
  std::vector<Matrix<double>*> params = {&p};
  Matrix<double> g(1, 2);
  g << 3.0, -0.2;
  nn::Adam<double> opt({0.01});
  opt.step(params, std::vector<Matrix<double>>{g});
  EXPECT_NEAR(p(0, 0), 0.99, 1e-9);
  EXPECT_NEAR(p(0, 1), 1.01, 1e-9);
}

TEST(Fuse, WorkedExample) {
  Eigen::Vector2d a(2, 1), b(1, 3);
  const auto f = fuse(a, b);
  ASSERT_EQ(f.size(), 4);
  EXPECT_EQ(f(0), 3);
  EXPECT_EQ(f(1), -8);
  EXPECT_EQ(f(2), 1);
  EXPECT_EQ(f(3), 4);
}

TEST(Fuse, IdentitiesOnRandomVectors) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a(i) = g(rng);
      b(i) = g(rng);
    }
    const auto ab = fuse(a, b), ba = fuse(b, a), aa = fuse(a, a);
    EXPECT_TRUE(ab.head(8).isApprox(-ba.head(8)));
    EXPECT_EQ(ab.tail(8), ba.tail(8));
    EXPECT_TRUE(aa.isZero(0));
    EXPECT_GE(ab.tail(8).minCoeff(), 0.0);
  }
  EXPECT_THROW(fuse(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)), DomainError);
}

TEST(Fuse, RowBackwardMatchesDifferences) {
  std::mt19937_64 rng(4);
  const auto h = random_matrix(rng, 4, 3);
  const std::vector<std::size_t> left = {0, 1, 0}, right = {2, 3, 3};
  const auto w = random_matrix(rng, 3, 6);
  Matrix<double> grad = Matrix<double>::Zero(4, 3);
  fuse_rows_backward<double>(h, left, right, w, grad);
  constexpr double eps = 1e-6;
  Matrix<double> hp = h;
  for (Eigen::Index i = 0; i < hp.size(); ++i) {
    const double orig = hp.data()[i];
    hp.data()[i] = orig + eps;
    const double up = fuse_rows<double>(hp, left, right).cwiseProduct(w).sum();
    hp.data()[i] = orig - eps;
    const double down = fuse_rows<double>(hp, left, right).cwiseProduct(w).sum();
    hp.data()[i] = orig;
    EXPECT_NEAR(grad.data()[i], (up - down) / (2 * eps), 1e-7);
  }
}

TEST(ProjectionHead, OutputsOneHundredTwentyEight) {
  ModelConfig cfg;
  const auto m = KinshipModel::create(cfg);
  const Matrix<Real> z = m.head.project(m.encoder.encode(Matrix<Real>::Random(5, 16)));
  EXPECT_EQ(z.rows(), 5);
  EXPECT_EQ(z.cols(), static_cast<Eigen::Index>(kProjectionDim));
  Rng rng(0);
  EXPECT_THROW(ProjectionHead(nn::Mlp<Real>({8, 16, 64}, rng)), ConfigError);
}

TEST(Classifier, ZeroInitScoresExactlyHalf) {
  ModelConfig cfg;
  cfg.zero_init_classifier_output = true;
  const auto m = KinshipModel::create(cfg);
  Vector<Real> a = Vector<Real>::Random(16), b = Vector<Real>::Random(16);
  EXPECT_EQ(classify_pair(a, b, m.encoder, m.classifier), 0.5);
}

TEST(Classifier, ProbabilityStrictlyInsideUnitInterval) {
  for (double logit : {-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6}) {
    const double p = probability_from_logit(logit);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_EQ(probability_from_logit(0.0), 0.5);
  const auto m = KinshipModel::create({});
  const double p = classify_pair(Vector<Real>::Random(16), Vector<Real>::Random(16), m.encoder, m.classifier);
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);
  EXPECT_THROW(classify_pair(Vector<Real>::Random(15), Vector<Real>::Random(15), m.encoder, m.classifier), DomainError);
}

TEST(Encoder, IdentityEncoderPassesFeaturesThrough) {
  ModelConfig cfg;
  cfg.encoder = "identity";
  cfg.input_dim = 12;
  const auto m = KinshipModel::create(cfg);
  EXPECT_EQ(m.encoder.embedding_dim(), 12u);
  EXPECT_FALSE(m.encoder.trainable());
  const Matrix<Real> x = Matrix<Real>::Random(2, 12);
  EXPECT_EQ(m.encoder.encode(x), x);
  EXPECT_EQ(m.classifier.embedding_dim(), 12u);
}

TEST(ModelConfig, Validation) {
  ModelConfig cfg;
  cfg.encoder = "resnet";
  EXPECT_THROW(KinshipModel::create(cfg), ConfigError);
  EXPECT_THROW(parse_trainable_mode("thawed"), ConfigError);
  EXPECT_EQ(parse_trainable_mode("frozen"), TrainableMode::frozen);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  ModelConfig cfg;
  cfg.seed = 42;
  auto m = KinshipModel::create(cfg);
  m.encoder.set_mode(TrainableMode::frozen);
  m.encoder.mark_stage1_complete();
  const auto path = std::filesystem::temp_directory_path() / "kinship_checkpoint_test.json";
  save_checkpoint(m, path.string(), {{"seed", "42"}});
  const auto back = load_checkpoint(path.string());
  std::filesystem::remove(path);
  EXPECT_TRUE(back.encoder.net() == m.encoder.net());
  EXPECT_TRUE(back.head.net() == m.head.net());
  EXPECT_TRUE(back.classifier.net() == m.classifier.net());
  EXPECT_EQ(back.encoder.mode(), TrainableMode::frozen);
  EXPECT_TRUE(back.encoder.stage1_complete());
  EXPECT_EQ(back.config.seed, 42u);
  const Vector<Real> a = Vector<Real>::Random(16), b = Vector<Real>::Random(16);
  EXPECT_EQ(classify_pair(a, b, back.encoder, back.classifier), classify_pair(a, b, m.encoder, m.classifier));
}

TEST(Checkpoint, RejectsForeignDocuments) {
  EXPECT_THROW(checkpoint_from_json({{"format", "other"}, {"version", 1}}), ParseError);
  EXPECT_THROW(checkpoint_from_json(nlohmann::json::object()), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), ConfigError);
}

}  // namespace
}  // namespace kinship
