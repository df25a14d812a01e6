#include <gtest/gtest.h>

#include "fin/induced_prior.hpp"
#include "fin/model.hpp"
#include "fin/rng.hpp"
#include "oracles.hpp"

namespace {

using namespace fin;
using fin::testing::random_matrix;
using fin::testing::random_orthogonal;
using fin::testing::random_positive;
using fin::testing::random_symmetric;

TEST(FactorPosteriorMoments, ZeroLoadingsGiveNoInformation) {
  const auto m = factor_posterior_moments(Matrix::Zero(3, 2), Vector::Ones(3));
  EXPECT_TRUE(m.V.isApprox(Matrix::Identity(2, 2)));
  EXPECT_EQ(m.A.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FactorPosteriorMoments, IdentityCase) {
  const auto m = factor_posterior_moments(Matrix::Identity(2, 2), Vector::Ones(2));
  EXPECT_LT((m.V - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((m.A - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FactorPosteriorMoments, MatchesDenseSolve) {
  RngStream g(10, 1);
  const Matrix Lambda = random_matrix(4, 2, g);
  const Vector psi = (Vector(4) << 1, 2, 3, 4).finished();
  const Matrix psi_inv = psi.cwiseInverse().asDiagonal();
  const Matrix V = (Lambda.transpose() * psi_inv * Lambda + Matrix::Identity(2, 2)).fullPivLu().inverse();
  const Matrix A = V * Lambda.transpose() * psi_inv;
  const auto m = factor_posterior_moments(Lambda, psi);
  EXPECT_LT((m.V - V).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((m.A - A).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FactorPosteriorMoments, ContractionAndLimit) {
  RngStream g(10, 2);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix Lambda = random_matrix(6, 3, g);
    const auto m = factor_posterior_moments(Lambda, random_positive(6, g));
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(m.V).eigenvalues();
    EXPECT_GT(ev.minCoeff(), 0.0);
    EXPECT_LE(ev.maxCoeff(), 1.0 + 1e-12);
    const auto small = factor_posterior_moments(1e-6 * Lambda, Vector::Ones(6));
    EXPECT_LT((small.V - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(FactorPosteriorMoments, RejectsNonPositiveNoise) {
  EXPECT_THROW(factor_posterior_moments(Matrix::Zero(2, 1), Vector::Zero(2)), Error);
}

TEST(InducedCoefficients, LinearSubmodel) {
  RngStream g(11, 1);
  const auto m = factor_posterior_moments(random_matrix(5, 2, g), random_positive(5, g));
  RegressionCoefficients c;
  c.omega = random_matrix(2, 1, g);
  c.Omega = Matrix::Zero(2, 2);
  const auto induced = induced_coefficients(m, c);
  EXPECT_EQ(induced.intercept, 0.0);
  EXPECT_EQ(induced.Omega_X.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((induced.beta_X - m.A.transpose() * c.omega).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(induced.covariate_int.size(), 0);
}

TEST(InducedCoefficients, HandComputedIdentityCase) {
  const auto m = factor_posterior_moments(Matrix::Identity(2, 2), Vector::Ones(2));
  RegressionCoefficients c;
  c.omega = Vector::Constant(2, 2.0);
  c.Omega = Matrix::Identity(2, 2);
  const auto induced = induced_coefficients(m, c);
  EXPECT_NEAR(induced.intercept, 1.0, 1e-15);
  EXPECT_LT((induced.beta_X - Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((induced.Omega_X - 0.25 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(InducedCoefficients, CovariateInteractions) {
  RngStream g(11, 2);
  const auto m = factor_posterior_moments(random_matrix(4, 2, g), random_positive(4, g));
  RegressionCoefficients c;
  c.omega = Vector::Zero(2);
  c.Omega = Matrix::Zero(2, 2);
  c.Delta = random_matrix(2, 3, g);
  const auto induced = induced_coefficients(m, c);
  ASSERT_EQ(induced.covariate_int.rows(), 4);
  ASSERT_EQ(induced.covariate_int.cols(), 3);
  EXPECT_LT((induced.covariate_int - m.A.transpose() * c.Delta).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(InducedCoefficients, DimensionMismatchIsAnArgumentError) {
  const auto m = factor_posterior_moments(Matrix::Identity(2, 2), Vector::Ones(2));
  RegressionCoefficients c;
  c.omega = Vector::Zero(3);
  c.Omega = Matrix::Zero(2, 2);
  try {
    induced_coefficients(m, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::argument);
  }
}

TEST(InducedCoefficients, ConditionalMeanMatchesMonteCarlo) {
  RngStream g(11, 3);
  const Index p = 4, k = 2;
  const Matrix Lambda = random_matrix(p, k, g);
  const Vector psi = random_positive(p, g);
  RegressionCoefficients c;
  c.omega = random_matrix(k, 1, g);
  c.Omega = random_symmetric(k, g);
  const auto m = factor_posterior_moments(Lambda, psi);
  const auto induced = induced_coefficients(m, c);
  const Matrix L = Eigen::LLT<Matrix>(m.V).matrixL();
  const int draws = 1000000;
  for (int point = 0; point < 10; ++point) {
    const Vector x = random_matrix(p, 1, g);
    const Vector mu = m.A * x;
    double sum = 0.0, sq = 0.0;
    for (int d = 0; d < draws; ++d) {
      Vector eta = mu;
      eta.noalias() += L * Vector{{g.normal(), g.normal()}};
      const double v = eta.dot(c.omega) + eta.dot(c.Omega * eta);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    EXPECT_LT(std::abs(mean - induced.conditional_mean(x)), 4.0 * se) << "point " << point;
  }
}

TEST(InducedCoefficients, RotationInvariance) {
  RngStream g(11, 4);
  const Index p = 12, k = 4;
  const Matrix Lambda = random_matrix(p, k, g);
  const Vector psi = random_positive(p, g);
  RegressionCoefficients c;
  c.omega = random_matrix(k, 1, g);
  c.Omega = random_symmetric(k, g);
  c.Delta = random_matrix(k, 2, g);
  const auto base = induced_coefficients(factor_posterior_moments(Lambda, psi), c);
  for (int rep = 0; rep < 100; ++rep) {
    const Matrix P = random_orthogonal(k, g);
    RegressionCoefficients r;
    r.omega = P.transpose() * c.omega;
    r.Omega = P.transpose() * c.Omega * P;
    r.Delta = P.transpose() * c.Delta;
    const auto rotated = induced_coefficients(factor_posterior_moments(Lambda * P, psi), r);
    EXPECT_LT(std::abs(rotated.intercept - base.intercept), 1e-9);
    EXPECT_LT((rotated.beta_X - base.beta_X).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((rotated.Omega_X - base.Omega_X).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((rotated.covariate_int - base.covariate_int).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(InducedCoefficients, CovarianceIdentity) {
  // Cov(y, X) = Lambda omega under the joint model.
  RngStream g(11, 5);
  const Index p = 3, k = 2;
  const Matrix Lambda = random_matrix(p, k, g);
  const Vector psi = random_positive(p, g);
  const Vector omega = random_matrix(k, 1, g);
  const Matrix Omega = random_symmetric(k, g);
  const int n = 1000000;
  Vector sx = Vector::Zero(p), sxy = Vector::Zero(p), sxy2 = Vector::Zero(p);
  double sy = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector eta{{g.normal(), g.normal()}};
    Vector x = Lambda * eta;
    for (Index j = 0; j < p; ++j) x[j] += std::sqrt(psi[j]) * g.normal();
    const double y = eta.dot(omega) + eta.dot(Omega * eta) + g.normal();
    sx += x;
    sy += y;
    sxy += x * y;
    sxy2 += (x * y).cwiseAbs2();
  }
  const Vector cov = sxy / n - (sx / n) * (sy / n);
  const Vector se = ((sxy2 / n - (sxy / n).cwiseAbs2()) / n).cwiseSqrt();
  const Vector truth = Lambda * omega;
  for (Index j = 0; j < p; ++j) EXPECT_LT(std::abs(cov[j] - truth[j]), 4.0 * se[j]);
}

TEST(SelectK, RuleOfThumbExamples) {
  EXPECT_EQ(select_k(std::vector<double>{10, 0, 0, 0}), 1);
  EXPECT_EQ(select_k(std::vector<double>{5, 3, 1, 1}, 0.9), 4);
  EXPECT_EQ(select_k(std::vector<double>(10, 1.0), 0.9), 10);
  EXPECT_EQ(select_k(std::vector<double>{5, 3, 1, 1}, 0.85), 3);
}

TEST(SelectK, InvalidInput) {
  EXPECT_THROW(select_k(std::vector<double>{}), Error);
  EXPECT_THROW(select_k(std::vector<double>{1, 2}), Error);
  EXPECT_THROW(select_k(std::vector<double>{0, 0}), Error);
  EXPECT_THROW(select_k(std::vector<double>{1, -1}), Error);
}

TEST(KlBound, ExactRankGivesZero) {
  RngStream g(12, 1);
  const Matrix B = random_matrix(6, 2, g);
  Matrix Lambda0(6, 4);
  Lambda0 << B, B * random_matrix(2, 2, g);  // rank 2 with k0 = 4
  const auto r = kl_bound_check(Lambda0, 1.0, 2);
  EXPECT_LT(r.kl, 1e-9);
  EXPECT_LT(r.bound, 1e-9);
}

TEST(KlBound, RandomInstanceAndScaling) {
  RngStream g(12, 2);
  const Matrix Lambda0 = random_matrix(8, 5, g);
  const auto r = kl_bound_check(Lambda0, 1.0, 3);
  EXPECT_GT(r.kl, 0.0);
  EXPECT_GT(r.bound, 0.0);
  EXPECT_LE(r.kl, r.bound);
  const auto scaled = kl_bound_check(Lambda0, 10.0, 3);
  EXPECT_NEAR(scaled.bound * 10.0, r.bound, 1e-10 * r.bound);
}

TEST(KlBound, RejectsFullRank) {
  EXPECT_THROW(kl_bound_check(Matrix::Identity(4, 3), 1.0, 3), Error);
}

TEST(Masks, BlockSparsityAndApply) {
  const std::vector<int> groups{0, 0, 1, 1, 1};
  const MaskMatrix mask = block_sparsity_mask(groups, 2, 3);
  EXPECT_FALSE(mask(0, 0));
  EXPECT_TRUE(mask(0, 1));
  EXPECT_TRUE(mask(3, 0));
  EXPECT_FALSE(mask(3, 1));
  for (Index j = 0; j < 5; ++j) EXPECT_FALSE(mask(j, 2));
  Matrix Lambda = Matrix::Ones(5, 3);
  apply_mask(Lambda, mask);
  EXPECT_EQ(Lambda(0, 1), 0.0);
  EXPECT_EQ(Lambda(0, 0), 1.0);
  EXPECT_EQ(Lambda.sum(), 10.0);
}

TEST(InducedPrior, ZeroFactorsGiveZeros) {
  RngStream g(13, 1);
  InducedPriorSettings s;
  s.k = 0;
  s.n_draws = 10;
  const auto draws = simulate_induced_prior(s, g);
  for (double v : draws.main) EXPECT_EQ(v, 0.0);
  for (double v : draws.third) EXPECT_EQ(v, 0.0);
}

TEST(InducedPrior, SpreadGrowsWithKAndShrinksWithOrder) {
  InducedPriorSettings s;
  s.n_draws = 2000;
  RngStream g5(13, 2), g10(13, 3);
  s.k = 5;
  const auto five = simulate_induced_prior(s, g5);
  s.k = 10;
  const auto ten = simulate_induced_prior(s, g10);
  const auto iqr = [](const std::vector<double>& v) { return summarize_quantiles(v).iqr(); };
  EXPECT_GT(iqr(ten.main), iqr(five.main));
  EXPECT_GT(iqr(five.main), iqr(five.pairwise));
  EXPECT_GT(iqr(five.pairwise), iqr(five.third));
}

}  // namespace
