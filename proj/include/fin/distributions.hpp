#pragma once

// Samplers for every conditional the FIN Gibbs sweep needs. Each function
// is stateless apart from the generator it is handed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include <boost/math/special_functions/erf.hpp>

#include "fin/errors.hpp"
#include "fin/types.hpp"

namespace fin {

template <class G>
concept RandomGenerator = std::uniform_random_bit_generator<std::remove_cvref_t<G>>;

/// Uniform on the open interval (0, 1).
template <RandomGenerator G>
double uniform_open(G& g) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(g);
    if (u > 0.0 && u < 1.0) return u;
  }
}

template <RandomGenerator G>
double sample_normal(G& g) {
  return std::normal_distribution<double>{}(g);
}

template <RandomGenerator G>
Vector sample_standard_normal(Index m, G& g) {
  Vector z(m);
  for (Index i = 0; i < m; ++i) z[i] = sample_normal(g);
  return z;
}

/// Draw from N(Q^{-1} b, Q^{-1}) given the precision Q and linear term b.
/// One Cholesky factorization, no explicit inverse.
template <RandomGenerator G>
Vector sample_mvn_precision(const Vector& linear, const Matrix& precision, G& g,
                            std::string_view context = "mvn") {
  require(precision.rows() == precision.cols() && precision.rows() == linear.size(),
          "sample_mvn_precision: dimension mismatch");
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::numerical,
                "precision matrix is not positive definite in " + std::string(context));
  }
  Vector draw = llt.solve(linear);
  draw += llt.matrixU().solve(sample_standard_normal(linear.size(), g));
  return draw;
}

/// Draw from N(mean, cov). A covariance whose diagonal is entirely below
/// `degenerate_tol` returns the mean exactly.
template <RandomGenerator G>
Vector sample_mvn_covariance(const Vector& mean, const Matrix& cov, G& g,
                             std::string_view context = "mvn",
                             double degenerate_tol = 1e-14) {
  require(cov.rows() == cov.cols() && cov.rows() == mean.size(),
          "sample_mvn_covariance: dimension mismatch");
  if (mean.size() == 0 || cov.diagonal().maxCoeff() <= degenerate_tol) return mean;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::numerical,
                "covariance matrix is not positive definite in " + std::string(context));
  }
  return mean + llt.matrixL() * sample_standard_normal(mean.size(), g);
}

/// Gamma(shape, rate); mean shape / rate.
template <RandomGenerator G>
double sample_gamma(double shape, double rate, G& g) {
  require(shape > 0.0 && rate > 0.0 && std::isfinite(shape) && std::isfinite(rate),
          "sample_gamma: shape and rate must be positive and finite");
  for (;;) {
    const double x = std::gamma_distribution<double>(shape, 1.0 / rate)(g);
    if (x > 0.0 && std::isfinite(x)) return x;
  }
}

/// Symmetric Dirichlet(shape, ..., shape) of dimension `dim` via normalized gammas.
template <RandomGenerator G>
Vector sample_dirichlet(double shape, Index dim, G& g) {
  require(dim >= 1, "sample_dirichlet: dimension must be at least 1");
  require(shape > 0.0, "sample_dirichlet: shape must be positive");
  Vector draw(dim);
  for (Index h = 0; h < dim; ++h) draw[h] = sample_gamma(shape, 1.0, g);
  draw /= draw.sum();
  return draw;
}

/// Inverse Gaussian with mean `mu` and shape `lambda` (Michael, Schucany & Haas).
template <RandomGenerator G>
double sample_inverse_gaussian(double mu, double lambda, G& g) {
  require(mu > 0.0 && lambda > 0.0, "sample_inverse_gaussian: mu and lambda must be positive");
  if (!std::isfinite(mu)) {
    // Infinite mean: the law of lambda / chi^2_1 (Levy).
    const double z = sample_normal(g);
    return lambda / (z * z);
  }
  const double z = sample_normal(g);
  const double r = mu * z * z / lambda;
  // mu * (1 + r/2 - sqrt(r + r^2/4)), rewritten without cancellation.
  const double x = mu / (1.0 + 0.5 * r + std::sqrt(r + 0.25 * r * r));
  return uniform_open(g) <= mu / (mu + x) ? x : mu * mu / x;
}

namespace detail {

inline double gig_mode(double lambda, double omega) {
  if (lambda >= 1.0)
    return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
  return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// The three regimes below sample the standardized GIG with density
// proportional to x^(lambda-1) exp(-omega (x + 1/x) / 2), lambda >= 0
// (Hormann & Leydold 2014).

// Ratio-of-uniforms without mode shift.
template <RandomGenerator G>
double gig_rou_noshift(double lambda, double omega, G& g) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
  const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
  const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
  for (;;) {
    const double u = um * uniform_open(g);
    const double v = uniform_open(g);
    const double x = u / v;
    if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Ratio-of-uniforms with the mode shifted to the origin; bounds of the
// enclosing rectangle come from the roots of a cubic (Cardano).
template <RandomGenerator G>
double gig_rou_shift(double lambda, double omega, G& g) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

  const double a = -(2.0 * (lambda + 1.0) / omega + xm);
  const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
  const double c = xm;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
  const double fak = 2.0 * std::sqrt(-p / 3.0);
  const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
  const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
  const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
  const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);

  for (;;) {
    const double u = uminus + uniform_open(g) * (uplus - uminus);
    const double v = uniform_open(g);
    const double x = u / v + xm;
    if (x > 0.0 && std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Rejection from a three-piece hat; used for lambda < 1 and tiny omega where
// the density is not T-concave.
template <RandomGenerator G>
double gig_concave_hat(double lambda, double omega, G& g) {
  const double xm = gig_mode(lambda, omega);
  const double x0 = omega / (1.0 - lambda);
  const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
  double area[3];
  area[0] = k0 * x0;
  double k1 = 0.0;
  double k2 = 0.0;
  if (x0 >= 2.0 / omega) {
    area[1] = 0.0;
    k2 = std::pow(x0, lambda - 1.0);
    area[2] = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
  } else {
    k1 = std::exp(-omega);
    area[1] = lambda == 0.0
                  ? k1 * std::log(2.0 / (omega * omega))
                  : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
    k2 = std::pow(2.0 / omega, lambda - 1.0);
    area[2] = k2 * 2.0 * std::exp(-1.0) / omega;
  }
  const double total = area[0] + area[1] + area[2];

  for (;;) {
    double v = total * uniform_open(g);
    double x = 0.0;
    double hat = 0.0;
    if (v <= area[0]) {
      x = x0 * v / area[0];
      hat = k0;
    } else if ((v -= area[0]) <= area[1]) {
      if (lambda == 0.0) {
        x = omega * std::exp(std::exp(omega) * v);
        hat = k1 / x;
      } else {
        x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
        hat = k1 * std::pow(x, lambda - 1.0);
      }
    } else {
      v -= area[1];
      const double start = std::max(x0, 2.0 / omega);
      x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * start) - omega / (2.0 * k2) * v);
      hat = k2 * std::exp(-omega / 2.0 * x);
    }
    const double u = uniform_open(g) * hat;
    if (x > 0.0 && std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x))
      return x;
  }
}

}  // namespace detail

/// Below this value of a*b the GIG draw uses its Gamma (p > 0) or
/// inverse-Gamma (p < 0) limit.
inline constexpr double kGigDegenerateProduct = 1e-10;

/// Generalized inverse Gaussian with density proportional to
/// x^(p-1) exp(-(a x + b / x) / 2).
template <RandomGenerator G>
double sample_gig(double p, double a, double b, G& g) {
  require(std::isfinite(p), "sample_gig: p must be finite");
  require(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b),
          "sample_gig: a and b must be positive and finite");
  if (a * b < kGigDegenerateProduct && p != 0.0) {
    if (p > 0.0) return sample_gamma(p, 0.5 * a, g);
    return 1.0 / sample_gamma(-p, 0.5 * b, g);
  }
  const double lambda = std::abs(p);
  const double omega = std::sqrt(a * b);
  const double scale = std::sqrt(b / a);
  double x = 0.0;
  if (lambda > 2.0 || omega > 3.0)
    x = detail::gig_rou_shift(lambda, omega, g);
  else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2)
    x = detail::gig_rou_noshift(lambda, omega, g);
  else
    x = detail::gig_concave_hat(lambda, omega, g);
  return p < 0.0 ? scale / x : scale * x;
}

/// Standard normal CDF.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Upper tail 1 - Phi(x), accurate for large positive x.
inline double normal_upper_tail(double x) {
  return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

namespace detail {

// Standard normal restricted to [lower, upper] with lower > 0 deep in the
// right tail: exponential proposal (Robert 1995), or a uniform proposal when
// the interval is narrow relative to the exponential rate.
template <RandomGenerator G>
double right_tail_normal(double lower, double upper, G& g) {
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  if (std::isfinite(upper) && rate * (upper - lower) < 1.0) {
    for (;;) {
      const double z = lower + (upper - lower) * uniform_open(g);
      if (std::log(uniform_open(g)) <= 0.5 * (lower * lower - z * z)) return z;
    }
  }
  for (;;) {
    const double z = lower - std::log(uniform_open(g)) / rate;
    if (z > upper) continue;
    if (std::log(uniform_open(g)) <= -0.5 * (z - rate) * (z - rate)) return z;
  }
}

// Standard normal restricted to [lower, upper] by inversion. Works in the
// tail where the interval lies so that erfc keeps its precision.
template <RandomGenerator G>
double inverse_cdf_normal(double lower, double upper, G& g) {
  using boost::math::erfc_inv;
  double z = 0.0;
  if (lower >= 0.0) {
    const double hi = normal_upper_tail(lower);
    const double lo = normal_upper_tail(upper);
    const double u = lo + (hi - lo) * uniform_open(g);
    z = std::numbers::sqrt2 * erfc_inv(2.0 * u);
  } else if (upper <= 0.0) {
    const double hi = normal_cdf(upper);
    const double lo = normal_cdf(lower);
    const double u = lo + (hi - lo) * uniform_open(g);
    z = -std::numbers::sqrt2 * erfc_inv(2.0 * u);
  } else {
    const double lo = normal_cdf(lower);
    const double hi = normal_cdf(upper);
    const double u = lo + (hi - lo) * uniform_open(g);
    z = -std::numbers::sqrt2 * erfc_inv(2.0 * u);
  }
  return std::clamp(z, lower, upper);
}

}  // namespace detail

/// Truncation points further than this many standard deviations into a tail
/// switch from inversion to exponential rejection.
inline constexpr double kTailSwitchSd = 4.0;

/// Normal(mu, sigma2) restricted to (lower, upper); either bound may be infinite.
template <RandomGenerator G>
double sample_truncated_normal(double mu, double sigma2, double lower, double upper, G& g) {
  require(sigma2 > 0.0 && std::isfinite(mu), "sample_truncated_normal: need finite mu and sigma2 > 0");
  require(lower < upper, "sample_truncated_normal: lower bound must be below upper bound");
  const double sd = std::sqrt(sigma2);
  const double a = (lower - mu) / sd;
  const double b = (upper - mu) / sd;
  double z = 0.0;
  if (a > kTailSwitchSd)
    z = detail::right_tail_normal(a, b, g);
  else if (b < -kTailSwitchSd)
    z = -detail::right_tail_normal(-b, -a, g);
  else if (std::isinf(a) && std::isinf(b))
    z = sample_normal(g);
  else
    z = detail::inverse_cdf_normal(a, b, g);
  return mu + sd * z;
}

}  // namespace fin
