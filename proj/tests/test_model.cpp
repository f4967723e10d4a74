#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bridge.hpp"
#include "reweight/model.hpp"

using namespace reweight;
using namespace bridge;

TEST(Mlp, ShapeValidation) {
  EXPECT_THROW(Mlp::zeros({3}), InvalidArgument);
  EXPECT_THROW(Mlp({2, 3}, {Matrix::Zero(2, 3)}, {Vector::Zero(3)}), InvalidArgument);
  EXPECT_THROW(Mlp({2, 3}, {Matrix::Zero(3, 2)}, {Vector::Zero(2)}), InvalidArgument);
  const auto m = Mlp::random({4, 16, 16, 3}, 1);
  EXPECT_EQ(m.feature_dim(), 16);
  EXPECT_EQ(m.classes(), 3);
  EXPECT_EQ(m.layers(), 3u);
}

TEST(Forward, ZeroModelGivesZeros) {
  const auto m = Mlp::zeros({3, 5, 2});
  const auto pass = forward(m, Matrix::Random(4, 3));
  EXPECT_EQ(pass.features(), Matrix::Zero(4, 5));
  EXPECT_EQ(pass.logits, Matrix::Zero(4, 2));
}

TEST(Forward, IdentitySingleLayer) {
  const Mlp m({3, 3}, {Matrix::Identity(3, 3)}, {Vector::Zero(3)});
  const Matrix x = Matrix::Random(5, 3);
  EXPECT_EQ(forward(m, x).logits, x);
}

TEST(Forward, DeterministicAndWidthChecked) {
  const Matrix x = Matrix::Random(6, 4);
  EXPECT_EQ(forward(Mlp::random({4, 8, 3}, 5), x).logits, forward(Mlp::random({4, 8, 3}, 5), x).logits);
  EXPECT_THROW(forward(Mlp::random({4, 8, 3}, 5), Matrix::Random(6, 3)), InvalidArgument);
}

TEST(Loss, UniformLogitsGiveLogC) {
  EXPECT_NEAR(weighted_cross_entropy(Matrix::Zero(5, 4), {0, 1, 2, 3, 0}, Vector::Ones(5)), std::log(4.0), 1e-15);
}

TEST(Loss, UnitWeightsEqualMeanCrossEntropy) {
  std::mt19937_64 rng(1);
  const Matrix logits = oracle::random_matrix(rng, 10, 3, 4.0);
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  const Matrix p = softmax_rows(logits);
  double mean = 0.0;
  for (int i = 0; i < 10; ++i) mean -= std::log(p(i, y[i]));
  EXPECT_NEAR(weighted_cross_entropy(logits, y, Vector::Ones(10)), mean / 10.0, 1e-12);
}

TEST(Loss, LinearInWeights) {
  std::mt19937_64 rng(2);
  const Matrix logits = oracle::random_matrix(rng, 6, 3);
  const std::vector<int> y{2, 1, 0, 0, 1, 2};
  const Vector w1 = oracle::random_positive_weights(rng, 6), w2 = oracle::random_positive_weights(rng, 6);
  const double a = weighted_cross_entropy(logits, y, w1), b = weighted_cross_entropy(logits, y, w2);
  EXPECT_NEAR(weighted_cross_entropy(logits, y, 0.5 * (w1 + w2)), 0.5 * (a + b), 1e-14);
  Vector w3 = Vector::Ones(6);
  w3(2) = 2.0;
  const double single = weighted_cross_entropy(logits.row(2), {y[2]}, Vector::Ones(1));
  EXPECT_NEAR(weighted_cross_entropy(logits, y, w3) - weighted_cross_entropy(logits, y, Vector::Ones(6)),
              single / 6.0, 1e-14);
}

TEST(Loss, LabelsChecked) {
  EXPECT_THROW(weighted_cross_entropy(Matrix::Zero(2, 3), {0, 3}, Vector::Ones(2)), InvalidArgument);
  EXPECT_THROW(weighted_cross_entropy(Matrix::Zero(2, 3), {0, -1}, Vector::Ones(2)), InvalidArgument);
  EXPECT_THROW(weighted_cross_entropy(Matrix::Zero(2, 3), {0}, Vector::Ones(2)), InvalidArgument);
}

TEST(Loss, StableForLargeLogits) {
  Matrix logits(1, 2);
  logits << 1000.0, -1000.0;
  EXPECT_NEAR(weighted_cross_entropy(logits, {0}, Vector::Ones(1)), 0.0, 1e-12);
  EXPECT_NEAR(weighted_cross_entropy(logits, {1}, Vector::Ones(1)), 2000.0, 1e-9);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(3);
  const Matrix p = softmax_rows(oracle::random_matrix(rng, 20, 5, 10.0));
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(Backprop, MatchesFiniteDifferencesOnSmallNet) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    Mlp m = Mlp::random({2, 4, 3}, static_cast<std::uint64_t>(t));
    const Batch b = random_batch(rng, 7, 2, 3);
    const Vector w = oracle::random_positive_weights(rng, 7);
    const Vector analytic = flatten(compute_gradients(m, b, w).grads);
    const Vector fd = oracle::central_difference(
        [&](const Vector& p) {
          Mlp probe = m;
          unflatten(probe, p);
          return weighted_cross_entropy(forward(probe, b.inputs).logits, b.labels, w);
        },
        flatten(m), 1e-5);
    EXPECT_LT(oracle::max_relative_error(analytic, fd), 1e-4);
  }
}

TEST(Backprop, DeeperNetGradients) {
  std::mt19937_64 rng(5);
  Mlp m = Mlp::random({5, 6, 4, 3}, 9);
  const Batch b = random_batch(rng, 9, 5, 3);
  const Vector w = oracle::random_positive_weights(rng, 9);
  const Vector fd = oracle::central_difference(
      [&](const Vector& p) {
        Mlp probe = m;
        unflatten(probe, p);
        return weighted_cross_entropy(forward(probe, b.inputs).logits, b.labels, w);
      },
      flatten(m), 1e-5);
  EXPECT_LT(oracle::max_relative_error(flatten(compute_gradients(m, b, w).grads), fd), 1e-4);
}

TEST(Step, ZeroLearningRateKeepsParameters) {
  std::mt19937_64 rng(6);
  Mlp m = Mlp::random({3, 4, 2}, 1);
  const Vector before = flatten(m);
  backward_and_step(m, random_batch(rng, 5, 3, 2), Vector::Ones(5), 0.0, 0.9);
  EXPECT_EQ(flatten(m), before);
}

TEST(Step, DecreasesLossOnSeparableToy) {
  Batch b{Matrix(4, 2), {0, 0, 1, 1}};
  b.inputs << -2, -1, -1, -2, 2, 1, 1, 2;
  Mlp m = Mlp::random({2, 4, 2}, 3);
  const double before = backward_and_step(m, b, Vector::Ones(4), 0.05, 0.0);
  const double after = weighted_cross_entropy(forward(m, b.inputs).logits, b.labels, Vector::Ones(4));
  EXPECT_LT(after, before);
}

TEST(Step, MomentumAccumulates) {
  std::mt19937_64 rng(7);
  Mlp m = Mlp::random({3, 2}, 1);
  const Batch b = random_batch(rng, 4, 3, 2);
  const Matrix g = compute_gradients(m, b, Vector::Ones(4)).grads.weights[0];
  backward_and_step(m, b, Vector::Ones(4), 0.0, 0.5);
  backward_and_step(m, b, Vector::Ones(4), 0.0, 0.5);
  EXPECT_TRUE(m.weight_velocity(0).isApprox(1.5 * g, 1e-14));
}

TEST(Step, NonFiniteLossDiverges) {
  Mlp m = Mlp::zeros({2, 2});
  m.weight(0)(0, 0) = std::numeric_limits<double>::infinity();
  Batch b{Matrix::Ones(1, 2), {1}};
  EXPECT_THROW(backward_and_step(m, b, Vector::Ones(1), 0.1, 0.0), Diverged);
}

TEST(Saliency, ZeroNoiseSingleDrawIsAbsoluteGradient) {
  const Mlp m = Mlp::random({4, 6, 3}, 2);
  const Vector x = Vector::LinSpaced(4, -1.0, 1.0);
  std::mt19937_64 rng(1);
  EXPECT_EQ(smoothgrad_saliency(m, x, 1, 0.0, 1, rng), input_gradient(m, x, 1).cwiseAbs());
}

TEST(Saliency, InputGradientMatchesFiniteDifference) {
  const Mlp m = Mlp::random({4, 6, 3}, 8);
  const Vector x = Vector::LinSpaced(4, -0.7, 1.3);
  const Vector fd = oracle::central_difference(
      [&](const Vector& p) { return forward(m, p.transpose()).logits(0, 2); }, x, 1e-6);
  EXPECT_LT(oracle::max_relative_error(input_gradient(m, x, 2), fd), 1e-6);
}

TEST(Saliency, LinearModelGivesAbsoluteWeightRow) {
  Matrix w(2, 3);
  w << 1.0, -2.0, 0.5, -3.0, 0.25, 4.0;
  const Mlp m({3, 2}, {w}, {Vector::Zero(2)});
  std::mt19937_64 rng(2);
  const Vector s = smoothgrad_saliency(m, Vector::Zero(3), 1, 0.7, 10, rng);
  EXPECT_TRUE(s.isApprox(w.row(1).cwiseAbs().transpose(), 1e-15));
}

TEST(Saliency, DeterministicAndValidated) {
  const Mlp m = Mlp::random({4, 6, 3}, 4);
  const Vector x = Vector::Ones(4);
  std::mt19937_64 r1(9), r2(9);
  EXPECT_EQ(smoothgrad_saliency(m, x, 0, 0.2, 8, r1), smoothgrad_saliency(m, x, 0, 0.2, 8, r2));
  EXPECT_THROW(smoothgrad_saliency(m, x, 0, 0.2, 0, r1), InvalidArgument);
  EXPECT_THROW(smoothgrad_saliency(m, x, 0, -0.1, 1, r1), InvalidArgument);
  EXPECT_THROW(smoothgrad_saliency(m, x, 3, 0.1, 1, r1), InvalidArgument);
  EXPECT_EQ(smoothgrad_saliency(Mlp::zeros({4, 6, 3}), x, 0, 0.3, 5, r1), Vector::Zero(4));
}

TEST(Predict, ArgmaxOfLogits) {
  Matrix w = Matrix::Identity(3, 3);
  const Mlp m({3, 3}, {w}, {Vector::Zero(3)});
  Matrix x(2, 3);
  x << 0.1, 0.9, 0.0, 2.0, -1.0, 1.0;
  EXPECT_EQ(predict(m, x), (std::vector<int>{1, 0}));
}
