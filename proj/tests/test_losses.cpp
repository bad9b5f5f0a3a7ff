#include <gtest/gtest.h>

#include <cmath>

#include "adah/config.hpp"
#include "adah/gradcheck.hpp"
#include "adah/losses.hpp"

using namespace adah;

namespace {

double value(const Var& v) { return v->value.item(); }

Var probs(std::size_t r, std::size_t c, std::initializer_list<double> v) { return constant(Array::matrix(r, c, v)); }

Var uniform(std::size_t r, std::size_t c) { return constant(Array(Shape{r, c}, 1.0 / static_cast<double>(c))); }

}  // namespace

TEST(HashPairLoss, ExactMatchIsZero) {
  const Var u = constant(Array::matrix(2, 2, {1, 1, 1, 1}));
  EXPECT_EQ(value(hash_pair_loss(u, SimilarityMatrix::from_labels(std::vector<int>{3, 3}), 0.01)), 0.0);
}

TEST(HashPairLoss, AntiMatchIsZero) {
  const Var u = constant(Array::matrix(2, 2, {1, 1, -1, -1}));
  EXPECT_EQ(value(hash_pair_loss(u, SimilarityMatrix::from_labels(std::vector<int>{0, 1}), 0.0)), 0.0);
}

TEST(HashPairLoss, HalfMatchFixture) {
  const Var u = constant(Array::matrix(2, 2, {1, 0, 1, 0}));
  EXPECT_NEAR(value(hash_pair_loss(u, SimilarityMatrix::from_labels(std::vector<int>{1, 1}), 0.01)), 0.51, 1e-12);
}

TEST(HashPairLoss, SignIsConstantInBackward) {
  // With only the quantization term active the gradient is υ·(u − sign u).
  const Var u = leaf(Array::matrix(1, 2, {0.25, -0.5}));
  SimilarityMatrix s{Array::matrix(1, 1, {0.0625 / 2.0 + 0.25 / 2.0})};
  const Var l = hash_pair_loss(u, s, 1.0);
  backward(l);
  EXPECT_NEAR(u->grad(0, 0), 0.25 - 1.0, 1e-12);
  EXPECT_NEAR(u->grad(0, 1), -0.5 + 1.0, 1e-12);
}

TEST(HashPairLoss, DimensionMismatchThrows) {
  EXPECT_THROW(hash_pair_loss(constant(Array(Shape{3, 2})), SimilarityMatrix::from_labels(std::vector<int>{1, 2}), 0.0),
               DimensionError);
}

TEST(CentroidLoss, IdenticalCentroidsZero) {
  const Var us = constant(Array::matrix(2, 2, {1, 2, 3, 4})), ut = constant(Array::matrix(1, 2, {2, 3}));
  EXPECT_EQ(value(centroid_loss(us, std::vector<int>{0, 0}, ut, std::vector<int>{0}, 2)), 0.0);
}

TEST(CentroidLoss, HandCentroid) {
  const Var us = constant(Array::matrix(2, 1, {0.0, 0.2})), ut = constant(Array::matrix(1, 1, {0.5}));
  EXPECT_NEAR(value(centroid_loss(us, std::vector<int>{0, 0}, ut, std::vector<int>{0}, 1)), 0.16, 1e-12);
}

TEST(CentroidLoss, AllUnlabeledTargetIsZero) {
  const Var us = constant(Array::matrix(2, 1, {0.0, 0.2})), ut = constant(Array::matrix(2, 1, {0.5, 9.0}));
  EXPECT_EQ(value(centroid_loss(us, std::vector<int>{0, 1}, ut, std::vector<int>{-1, -1}, 2)), 0.0);
}

TEST(CentroidLoss, ClassesMissingOnOneSideAreSkipped) {
  const Var us = constant(Array::matrix(2, 1, {1.0, 5.0})), ut = constant(Array::matrix(2, 1, {2.0, 100.0}));
  EXPECT_NEAR(value(centroid_loss(us, std::vector<int>{0, 1}, ut, std::vector<int>{0, 2}, 3)), 1.0, 1e-12);
}

TEST(ClassificationLoss, PerfectIsZero) {
  const Var ps = probs(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(value(classification_loss(ps, std::vector<int>{0, 1}, uniform(1, 2), std::vector<int>{-1}, 0.1)), 0.0);
}

TEST(ClassificationLoss, SourceRowOneOverE) {
  const double p = std::exp(-1.0);
  const Var ps = probs(1, 2, {p, 1 - p});
  EXPECT_NEAR(value(classification_loss(ps, std::vector<int>{0}, uniform(1, 2), std::vector<int>{-1}, 0.1)), 1.0,
              1e-12);
}

TEST(ClassificationLoss, TargetRowOneOverE) {
  const double p = std::exp(-1.0);
  const Var ps = constant(Array(Shape{0, 2}));
  const Var pt = probs(1, 2, {1 - p, p});
  EXPECT_NEAR(value(classification_loss(ps, std::vector<int>{}, pt, std::vector<int>{1}, 0.1)), 0.1, 1e-12);
}

TEST(ClassificationLoss, ZeroProbabilityIsClamped) {
  const Var ps = probs(1, 2, {0, 1});
  const double l = value(classification_loss(ps, std::vector<int>{0}, uniform(1, 2), std::vector<int>{-1}, 0.1));
  EXPECT_NEAR(l, -std::log(1e-12), 1e-9);
}

TEST(ReconL1Loss, Values) {
  const Var x = constant(Array::matrix(1, 2, {1, 2})), zero = constant(Array(Shape{1, 2}));
  const Var empty = constant(Array(Shape{0, 2}));
  EXPECT_EQ(value(recon_l1_loss(x, x, x, x)), 0.0);
  EXPECT_EQ(value(recon_l1_loss(x, zero, empty, empty)), 3.0);
  const Var xx = constant(Array::matrix(2, 2, {1, 2, 1, 2})), zz = constant(Array(Shape{2, 2}));
  EXPECT_EQ(value(recon_l1_loss(xx, zz, empty, empty)), 6.0);
}

TEST(AdversarialDLoss, UniformOutput) {
  EXPECT_NEAR(value(adversarial_d_loss(uniform(1, 3), std::vector<int>{1}, uniform(1, 3), 2)), 2.0 * std::log(3.0),
              1e-12);
}

TEST(AdversarialDLoss, PerfectIsZero) {
  const Var real = probs(2, 3, {1, 0, 0, 0, 1, 0}), fake = probs(1, 3, {0, 0, 1});
  EXPECT_EQ(value(adversarial_d_loss(real, std::vector<int>{0, 1}, fake, 2)), 0.0);
}

TEST(AdversarialDLoss, UnlabeledRealRowsExcluded) {
  const Var real = uniform(2, 3), fake = uniform(1, 3);
  EXPECT_NEAR(value(adversarial_d_loss(real, std::vector<int>{-1, -1}, fake, 2)), std::log(3.0), 1e-12);
}

TEST(AdversarialDLoss, WidthMustBeNPlusOne) {
  EXPECT_THROW(adversarial_d_loss(uniform(1, 2), std::vector<int>{0}, uniform(1, 2), 2), DimensionError);
}

TEST(AdversarialGLoss, CarriedClassIsZero) {
  const Var st = probs(1, 3, {0, 1, 0}), ts = probs(1, 3, {1, 0, 0});
  EXPECT_EQ(value(adversarial_g_loss(st, std::vector<int>{1}, ts, std::vector<int>{0}, 2)), 0.0);
}

TEST(AdversarialGLoss, UniformOneRow) {
  const Var none = constant(Array(Shape{0, 3}));
  EXPECT_NEAR(value(adversarial_g_loss(uniform(1, 3), std::vector<int>{0}, none, std::vector<int>{}, 2)),
              std::log(3.0), 1e-12);
}

TEST(AdversarialGLoss, UnlabeledTargetLeavesSourceTerm) {
  const Var st = uniform(1, 3), ts = probs(2, 3, {0.001, 0.001, 0.998, 0.3, 0.3, 0.4});
  EXPECT_NEAR(value(adversarial_g_loss(st, std::vector<int>{0}, ts, std::vector<int>{-1, -1}, 2)), std::log(3.0),
              1e-12);
}

TEST(TotalLoss, ZeroWeightsLeaveClassificationAndAdversarial) {
  Hyperparams hp;
  hp.alpha = hp.beta = hp.chi = 0.0;
  const auto c = [](double v) { return constant(Array::scalar(v)); };
  EXPECT_EQ(value(total_encoder_generator_loss({c(1.5), c(0.25), c(9), c(9), c(9)}, hp)), 1.75);
}

TEST(TotalLoss, AlphaScalesHashLinearly) {
  Hyperparams hp;
  const auto c = [](double v) { return constant(Array::scalar(v)); };
  const LossTerms t{c(1), c(2), c(3), c(4), c(5)};
  const double base = value(total_encoder_generator_loss(t, hp));
  hp.alpha *= 2.0;
  EXPECT_NEAR(value(total_encoder_generator_loss(t, hp)) - base, 3.0, 1e-12);
}

TEST(TotalLoss, MatchesHandSumWithConfigWeights) {
  const RunConfig cfg = parse_config("train.alpha=0.7\ntrain.beta=0.3\ntrain.chi=0.05\n");
  const auto c = [](double v) { return constant(Array::scalar(v)); };
  const LossTerms t{c(1.25), c(0.5), c(2.0), c(4.0), c(8.0)};
  EXPECT_NEAR(value(total_encoder_generator_loss(t, cfg.hp)), 1.25 + 0.5 + 0.7 * 2.0 + 0.3 * 4.0 + 0.05 * 8.0, 1e-12);
  RunConfig off = cfg;
  off.hp.adversarial = false;
  EXPECT_NEAR(value(total_encoder_generator_loss(t, off.hp)), 1.25 + 0.7 * 2.0 + 0.3 * 4.0 + 0.05 * 8.0, 1e-12);
}

TEST(Hyperparams, Validation) {
  Hyperparams hp;
  EXPECT_NO_THROW(hp.validate(10));
  hp.threshold = 0.1;
  EXPECT_THROW(hp.validate(10), ConfigError);
  hp = {};
  hp.batch_size = 10;
  EXPECT_THROW(hp.validate(10), ConfigError);
  hp.batch_size = 11;
  EXPECT_NO_THROW(hp.validate(10));
  EXPECT_EQ(Hyperparams{}.effective_batch_size(10), 100u);
}

class LossGradients : public ::testing::TestWithParam<LossKind> {};

TEST_P(LossGradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    EXPECT_LT(ObjectiveInstance::random(seed).check(GetParam()), 1e-4) << loss_name(GetParam()) << " seed " << seed;
}

INSTANTIATE_TEST_SUITE_P(AllTerms, LossGradients, ::testing::ValuesIn(kAllLosses));
