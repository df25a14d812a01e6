#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "fin/distributions.hpp"
#include "fin/rng.hpp"
#include "ks.hpp"

namespace {

using namespace fin;
using fin::testing::draw_n;
using fin::testing::ks_critical_001;
using fin::testing::ks_statistic;
using fin::testing::sample_mean;
using fin::testing::sample_var;

double inverse_gaussian_cdf(double x, double mu, double lambda) {
  if (x <= 0.0) return 0.0;
  const double r = std::sqrt(lambda / x);
  return normal_cdf(r * (x / mu - 1.0)) +
         std::exp(2.0 * lambda / mu) * normal_cdf(-r * (x / mu + 1.0));
}

double gamma_cdf(double x, double shape, double rate) {
  return x <= 0.0 ? 0.0 : boost::math::gamma_p(shape, rate * x);
}

// GIG CDF by quadrature, in log x, of the density between consecutive sorted points.
double gig_ks(std::vector<double> draws, double p, double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  const double omega = std::sqrt(a * b);
  const double log_norm =
      std::log(2.0 * boost::math::cyl_bessel_k(p, omega)) + 0.5 * p * std::log(b / a);
  const auto density_in_log = [&](double u) {
    return std::exp(p * u - 0.5 * (a * std::exp(u) + b * std::exp(-u)) - log_norm);
  };
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double previous = std::log(draws.front()) - 40.0;
  double cumulative = 0.0, d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double u = std::log(draws[i]);
    if (u > previous) cumulative += gauss_kronrod<double, 31>::integrate(density_in_log, previous, u, 8, 1e-10);
    previous = std::max(previous, u);
    const double f = cumulative;
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double truncated_normal_cdf(double x, double mu, double sd, double lower, double upper) {
  const double a = (lower - mu) / sd, b = (upper - mu) / sd, z = (x - mu) / sd;
  if (a > 0.0) {
    return (normal_upper_tail(a) - normal_upper_tail(z)) / (normal_upper_tail(a) - normal_upper_tail(b));
  }
  return (normal_cdf(z) - normal_cdf(a)) / (normal_cdf(b) - normal_cdf(a));
}

TEST(Mvn, StandardNormalMean) {
  RngStream g(1, 1);
  Vector sum = Vector::Zero(2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_mvn_covariance(Vector::Zero(2), Matrix::Identity(2, 2), g);
  EXPECT_LT((sum / n).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Mvn, DegenerateCovarianceReturnsMean) {
  RngStream g(1, 2);
  const Vector mean = (Vector(2) << 1.0, 2.0).finished();
  const Vector draw = sample_mvn_covariance(mean, Matrix::Zero(2, 2), g);
  EXPECT_EQ(draw, mean);
}

TEST(Mvn, EmpiricalCovariance) {
  RngStream g(1, 3);
  Matrix cov(2, 2);
  cov << 2, 1, 1, 2;
  const int n = 100000;
  Matrix draws(n, 2);
  for (int i = 0; i < n; ++i) draws.row(i) = sample_mvn_covariance(Vector::Zero(2), cov, g).transpose();
  const Matrix centered = draws.rowwise() - draws.colwise().mean();
  const Matrix empirical = centered.transpose() * centered / (n - 1);
  EXPECT_LT((empirical - cov).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Mvn, PrecisionFormProjectionPassesKs) {
  RngStream g(1, 4);
  Matrix Q(3, 3);
  Q << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const Vector b = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const Matrix cov = Q.inverse();
  const Vector mean = cov * b;
  const Vector dir = (Vector(3) << 0.3, -0.5, 0.8).finished();
  const double m = dir.dot(mean), sd = std::sqrt(dir.dot(cov * dir));
  const auto draws = draw_n(5000, [&] { return dir.dot(sample_mvn_precision(b, Q, g)); });
  EXPECT_LT(ks_statistic(draws, [&](double x) { return normal_cdf((x - m) / sd); }), ks_critical_001(5000));
}

TEST(Mvn, NonPositiveDefiniteNamesTheStep) {
  RngStream g(1, 5);
  Matrix Q(2, 2);
  Q << 1, 2, 2, 1;
  try {
    sample_mvn_precision(Vector::Zero(2), Q, g, "Omega update");
    FAIL() << "expected a numerical error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numerical);
    EXPECT_NE(std::string(e.what()).find("Omega update"), std::string::npos);
  }
}

TEST(InverseGaussian, MeanAndVariance) {
  RngStream g(2, 1);
  const auto unit = draw_n(100000, [&] { return sample_inverse_gaussian(1.0, 1.0, g); });
  EXPECT_NEAR(sample_mean(unit), 1.0, 0.02);
  const auto wide = draw_n(100000, [&] { return sample_inverse_gaussian(2.0, 1.0, g); });
  EXPECT_NEAR(sample_var(wide) / 8.0, 1.0, 0.10);
}

TEST(InverseGaussian, RejectsNonPositiveParameters) {
  RngStream g(2, 2);
  EXPECT_THROW(sample_inverse_gaussian(0.0, 1.0, g), Error);
  EXPECT_THROW(sample_inverse_gaussian(1.0, -1.0, g), Error);
}

TEST(InverseGaussian, KolmogorovSmirnov) {
  RngStream g(2, 3);
  for (auto [mu, lambda] : {std::pair{1.0, 1.0}, {0.1, 5.0}, {20.0, 0.5}, {1e4, 1.0}}) {
    const auto draws = draw_n(5000, [&] { return sample_inverse_gaussian(mu, lambda, g); });
    EXPECT_LT(ks_statistic(draws, [&](double x) { return inverse_gaussian_cdf(x, mu, lambda); }),
              ks_critical_001(5000))
        << "mu=" << mu << " lambda=" << lambda;
  }
}

TEST(Gig, MatchesInverseGaussianReduction) {
  RngStream g(3, 1);
  const double mu = 1.5, lambda = 2.0;
  const auto gig = draw_n(10000, [&] { return sample_gig(-0.5, lambda / (mu * mu), lambda, g); });
  const auto ig = draw_n(10000, [&] { return sample_inverse_gaussian(mu, lambda, g); });
  EXPECT_LT(fin::testing::ks_two_sample(gig, ig), 0.03);
}

TEST(Gig, MeanMatchesNumericIntegration) {
  using boost::math::quadrature::gauss_kronrod;
  RngStream g(3, 2);
  const double p = 1.0, a = 2.0, b = 2.0;
  const auto density = [&](double x) { return std::pow(x, p - 1.0) * std::exp(-0.5 * (a * x + b / x)); };
  const double mass = gauss_kronrod<double, 61>::integrate(density, 0.0, 60.0, 15, 1e-13);
  const double first = gauss_kronrod<double, 61>::integrate(
      [&](double x) { return x * density(x); }, 0.0, 60.0, 15, 1e-13);
  const auto draws = draw_n(100000, [&] { return sample_gig(p, a, b, g); });
  EXPECT_NEAR(sample_mean(draws) / (first / mass), 1.0, 0.02);
}

TEST(Gig, DegenerateProductUsesGammaLimit) {
  RngStream g(3, 3);
  const auto draws = draw_n(5000, [&] { return sample_gig(3.0, 1.0, 1e-12, g); });
  EXPECT_LT(ks_statistic(draws, [](double x) { return gamma_cdf(x, 3.0, 0.5); }), ks_critical_001(5000));
  const auto inverse = draw_n(5000, [&] { return 1.0 / sample_gig(-2.0, 1e-12, 1.0, g); });
  EXPECT_LT(ks_statistic(inverse, [](double x) { return gamma_cdf(x, 2.0, 0.5); }), ks_critical_001(5000));
}

TEST(Gig, KolmogorovSmirnovAcrossRegimes) {
  RngStream g(3, 4);
  struct Case { double p, a, b; };
  const Case cases[] = {
      {0.3, 0.02, 0.02},   // concave hat
      {0.5, 1.0, 1.0},     // ratio of uniforms without shift
      {3.0, 4.0, 5.0},     // with shift
      {-2.5, 1.0, 3.0},    // negative order
      {-0.5, 2.0, 1e-6},   // near-degenerate b
      {-4.5, 1.0, 0.05},   // strongly negative order, typical of the tau update
  };
  for (const Case& c : cases) {
    const auto draws = draw_n(4000, [&] { return sample_gig(c.p, c.a, c.b, g); });
    for (double x : draws) ASSERT_TRUE(std::isfinite(x) && x > 0.0);
    EXPECT_LT(gig_ks(draws, c.p, c.a, c.b), ks_critical_001(4000))
        << "p=" << c.p << " a=" << c.a << " b=" << c.b;
  }
}

TEST(Gig, RejectsNonPositiveScale) {
  RngStream g(3, 5);
  EXPECT_THROW(sample_gig(1.0, 0.0, 1.0, g), Error);
  EXPECT_THROW(sample_gig(1.0, 1.0, -1.0, g), Error);
}

TEST(TruncatedNormal, UntruncatedMoments) {
  RngStream g(4, 1);
  const double inf = std::numeric_limits<double>::infinity();
  const auto draws = draw_n(100000, [&] { return sample_truncated_normal(0.0, 1.0, -inf, inf, g); });
  EXPECT_NEAR(sample_mean(draws), 0.0, 0.02);
  EXPECT_NEAR(sample_var(draws), 1.0, 0.02);
}

TEST(TruncatedNormal, HalfNormalMean) {
  RngStream g(4, 2);
  const double inf = std::numeric_limits<double>::infinity();
  const auto draws = draw_n(100000, [&] { return sample_truncated_normal(0.0, 1.0, -inf, 0.0, g); });
  for (double x : draws) ASSERT_LE(x, 0.0);
  EXPECT_NEAR(sample_mean(draws), -std::sqrt(2.0 / std::numbers::pi), 0.02);
}

TEST(TruncatedNormal, FarTailMatchesMillsRatio) {
  RngStream g(4, 3);
  const double inf = std::numeric_limits<double>::infinity();
  const auto draws = draw_n(50000, [&] { return sample_truncated_normal(5.0, 1.0, -inf, 0.0, g); });
  for (double x : draws) ASSERT_TRUE(std::isfinite(x) && x <= 0.0);
  const double beta = -5.0;
  const double pdf = std::exp(-0.5 * beta * beta) / std::sqrt(2.0 * std::numbers::pi);
  const double expected = 5.0 - pdf / normal_cdf(beta);
  EXPECT_NEAR(sample_mean(draws) / expected, 1.0, 0.05);
}

TEST(TruncatedNormal, KolmogorovSmirnovAcrossRegimes) {
  RngStream g(4, 4);
  const double inf = std::numeric_limits<double>::infinity();
  struct Case { double mu, s2, lo, hi; };
  const Case cases[] = {
      {0.0, 1.0, -1.0, 2.0},   // inversion, straddling
      {1.0, 4.0, -inf, -3.0},  // inversion, left of the mean
      {0.0, 1.0, 5.0, inf},    // exponential tail
      {0.0, 1.0, 6.0, 6.05},   // narrow tail slab, uniform proposal
      {3.0, 0.25, -inf, 0.5},  // below-LOD style, 5 sd into the left tail
  };
  for (const Case& c : cases) {
    const double sd = std::sqrt(c.s2);
    const auto draws = draw_n(5000, [&] { return sample_truncated_normal(c.mu, c.s2, c.lo, c.hi, g); });
    for (double x : draws) ASSERT_TRUE(x >= c.lo && x <= c.hi);
    EXPECT_LT(ks_statistic(draws, [&](double x) { return truncated_normal_cdf(x, c.mu, sd, c.lo, c.hi); }),
              ks_critical_001(5000))
        << "mu=" << c.mu << " lo=" << c.lo << " hi=" << c.hi;
  }
}

TEST(TruncatedNormal, RejectsEmptyInterval) {
  RngStream g(4, 5);
  EXPECT_THROW(sample_truncated_normal(0.0, 1.0, 1.0, 1.0, g), Error);
  EXPECT_THROW(sample_truncated_normal(0.0, 1.0, 2.0, 1.0, g), Error);
}

TEST(Dirichlet, SymmetricMeansAndSimplex) {
  RngStream g(5, 1);
  Vector sum = Vector::Zero(3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vector d = sample_dirichlet(1.0, 3, g);
    ASSERT_NEAR(d.sum(), 1.0, 1e-12);
    sum += d;
  }
  EXPECT_LT(((sum / n).array() - 1.0 / 3.0).abs().maxCoeff(), 0.01);
}

TEST(Dirichlet, MarginalIsBeta) {
  RngStream g(5, 2);
  for (auto [a, dim] : {std::pair{0.5, 4}, {1.0, 3}, {2.5, 6}}) {
    const auto draws = draw_n(5000, [&] { return sample_dirichlet(a, dim, g)[0]; });
    const double other = a * (dim - 1);
    EXPECT_LT(ks_statistic(draws, [&](double x) { return boost::math::ibeta(a, other, x); }),
              ks_critical_001(5000));
  }
}

TEST(Gamma, MomentsAndSmallShape) {
  RngStream g(6, 1);
  const auto regular = draw_n(100000, [&] { return sample_gamma(2.0, 4.0, g); });
  EXPECT_NEAR(sample_mean(regular) / 0.5, 1.0, 0.01);
  const auto small = draw_n(100000, [&] { return sample_gamma(0.25, 0.5, g); });
  for (double x : small) ASSERT_GT(x, 0.0);
  EXPECT_NEAR(sample_mean(small) / 0.5, 1.0, 0.02);
}

TEST(Gamma, KolmogorovSmirnov) {
  RngStream g(6, 2);
  for (auto [shape, rate] : {std::pair{0.25, 0.5}, {2.0, 4.0}, {50.0, 0.1}}) {
    const auto draws = draw_n(5000, [&] { return sample_gamma(shape, rate, g); });
    EXPECT_LT(ks_statistic(draws, [&](double x) { return gamma_cdf(x, shape, rate); }), ks_critical_001(5000));
  }
}

TEST(Gamma, RejectsNonPositiveParameters) {
  RngStream g(6, 3);
  EXPECT_THROW(sample_gamma(0.0, 1.0, g), Error);
  EXPECT_THROW(sample_gamma(1.0, 0.0, g), Error);
  EXPECT_THROW(sample_dirichlet(0.0, 3, g), Error);
}

TEST(Reproducibility, IdenticalStreamsGiveIdenticalDraws) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto run = [&](std::uint64_t stream) {
    RngStream g(42, stream);
    std::vector<double> out;
    for (int i = 0; i < 200; ++i) {
      out.push_back(sample_normal(g));
      out.push_back(sample_gamma(0.7, 1.3, g));
      out.push_back(sample_inverse_gaussian(0.8, 2.0, g));
      out.push_back(sample_gig(-1.5, 0.7, 0.2, g));
      out.push_back(sample_truncated_normal(2.0, 1.0, -inf, -3.0, g));
      out.push_back(sample_dirichlet(0.5, 3, g)[1]);
    }
    return out;
  };
  EXPECT_EQ(run(7), run(7));
  EXPECT_NE(run(7), run(8));
}

TEST(Support, NoNonFiniteDrawsOverParameterSweep) {
  RngStream g(7, 1);
  const double inf = std::numeric_limits<double>::infinity();
  for (double p : {-30.0, -5.0, -1.0, -0.5, 0.0, 0.5, 1.0, 4.0, 30.0})
    for (double a : {1e-8, 1e-3, 1.0, 1e3})
      for (double b : {1e-12, 1e-4, 1.0, 1e4})
        for (int r = 0; r < 20; ++r) {
          const double x = sample_gig(p, a, b, g);
          ASSERT_TRUE(std::isfinite(x) && x > 0.0) << p << " " << a << " " << b;
        }
  for (double mu : {1e-8, 1e-2, 1.0, 1e6})
    for (double lambda : {1e-6, 1.0, 1e6})
      for (int r = 0; r < 20; ++r) {
        const double x = sample_inverse_gaussian(mu, lambda, g);
        ASSERT_TRUE(std::isfinite(x) && x > 0.0) << mu << " " << lambda;
      }
  for (double mu : {-50.0, -5.0, 0.0, 5.0, 50.0})
    for (double upper : {-40.0, -1.0, 0.0, 40.0})
      for (int r = 0; r < 20; ++r) {
        const double x = sample_truncated_normal(mu, 1.0, -inf, upper, g);
        ASSERT_TRUE(std::isfinite(x) && x <= upper) << mu << " " << upper;
      }
}

}  // namespace
