#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "oracles.hpp"
#include "reweight/rff.hpp"

using namespace reweight;
using rff::RffFunction;
using rff::RffProjection;

TEST(Rff, DefaultProjectionHasFiveFunctions) {
  EXPECT_EQ(rff::kDefaultFunctions, 5u);
  EXPECT_EQ(rff::sample_projection(rff::kDefaultFunctions, 1).size(), 5u);
}

TEST(Rff, ZeroFunctionsRejected) { EXPECT_THROW(rff::sample_projection(0, 1), InvalidArgument); }

TEST(Rff, SameSeedSameFunctions) {
  const auto a = rff::sample_projection(16, 42);
  const auto b = rff::sample_projection(16, 42);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == rff::sample_projection(16, 43));
}

TEST(Rff, PhaseInRangeAndOmegaFinite) {
  const auto p = rff::sample_projection(5000, 7);
  for (const auto& f : p.functions()) {
    EXPECT_TRUE(std::isfinite(f.omega));
    EXPECT_GE(f.phi, 0.0);
    EXPECT_LT(f.phi, rff::kTwoPi);
  }
}

TEST(Rff, ConstructorValidatesFunctions) {
  EXPECT_THROW(RffProjection({}, 0), InvalidArgument);
  EXPECT_THROW(RffProjection({{1.0, rff::kTwoPi}}, 0), InvalidArgument);
  EXPECT_THROW(RffProjection({{1.0, -0.1}}, 0), InvalidArgument);
  EXPECT_THROW(RffProjection({{std::numeric_limits<double>::infinity(), 0.0}}, 0), InvalidArgument);
}

TEST(Rff, HandEvaluatedPoints) {
  const RffProjection p({{0.0, 0.0}, {1.0, std::numbers::pi / 2}, {1.0, 0.0}}, 0);
  Vector x(2);
  x << 0.0, std::numbers::pi;
  const Matrix h = rff::apply_projection(p, x);
  ASSERT_EQ(h.rows(), 2);
  ASSERT_EQ(h.cols(), 3);
  EXPECT_DOUBLE_EQ(h(0, 0), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(h(1, 0), std::sqrt(2.0));
  EXPECT_NEAR(h(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(h(1, 2), -std::sqrt(2.0), 1e-15);
}

TEST(Rff, NonFiniteInputRejected) {
  const auto p = rff::sample_projection(3, 1);
  Vector x(3);
  x << 1.0, std::numeric_limits<double>::quiet_NaN(), 2.0;
  EXPECT_THROW(rff::apply_projection(p, x), InvalidArgument);
  x(1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(rff::apply_projection(p, x), InvalidArgument);
}

TEST(Rff, OutputBoundedAndMatchesScalarFormula) {
  std::mt19937_64 rng(3);
  const auto p = rff::sample_projection(8, 11);
  const Vector x = oracle::random_matrix(rng, 200, 1, 10.0).col(0);
  const Matrix h = rff::apply_projection(p, x);
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      EXPECT_LE(std::abs(h(i, j)), std::sqrt(2.0) + 1e-15);
      EXPECT_DOUBLE_EQ(h(i, j), oracle::rff(p[j].omega, p[j].phi, x(i)));
    }
}

TEST(Rff, ApplyIsPureFunctionOfSeedAndValues) {
  Vector x = Vector::LinSpaced(17, -3.0, 3.0);
  const Matrix a = rff::apply_projection(rff::sample_projection(5, 9), x);
  const Matrix b = rff::apply_projection(rff::sample_projection(5, 9), x);
  EXPECT_EQ(a, b);
}

TEST(Rff, FeatureProjectionsIndependentOfIterationOrder) {
  const auto all = rff::sample_feature_projections(6, 5, 100);
  ASSERT_EQ(all.size(), 6u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].seed(), derive_seed(100, i));
    EXPECT_TRUE(all[i] == rff::sample_projection(5, derive_seed(100, i)));
  }
  EXPECT_FALSE(all[0] == all[1]);
}

TEST(Rff, OmegaAndPhiDistributionsPassKs) {
  std::vector<double> omega, phi;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto p = rff::sample_projection(1000, 5000 + s);
    for (const auto& f : p.functions()) {
      omega.push_back(f.omega);
      phi.push_back(f.phi);
    }
  }
  const auto ks_omega = oracle::ks_test(omega, oracle::normal_cdf);
  const auto ks_phi = oracle::ks_test(phi, [](double x) { return std::clamp(x / rff::kTwoPi, 0.0, 1.0); });
  EXPECT_GT(ks_omega.p, 0.01) << "D=" << ks_omega.d;
  EXPECT_GT(ks_phi.p, 0.01) << "D=" << ks_phi.d;
}

TEST(Oracle, KsRejectsWrongDistribution) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.3, 1.0);
  std::vector<double> xs(20000);
  for (auto& x : xs) x = n(rng);
  EXPECT_LT(oracle::ks_test(xs, oracle::normal_cdf).p, 1e-6);
}
