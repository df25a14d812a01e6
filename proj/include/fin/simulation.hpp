#pragma once

// Synthetic benchmark: covariates from a factor, AR(1) or independent
// design, a sparse quadratic regression obeying strong heredity, and the
// metric suite used to score an estimate against the truth.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fin/diagnostics.hpp"
#include "fin/distributions.hpp"
#include "fin/model.hpp"
#include "fin/rng.hpp"
#include "fin/sampler.hpp"
#include "fin/transform.hpp"

namespace fin {

enum class Scenario { factor, linear, independent };
enum class Density { sparse, dense };

inline double density_fraction(Density d) { return d == Density::sparse ? 0.05 : 0.20; }

/// Default number of true factors: 7 at p = 25, 17 at p = 50, ceil(0.35 p) otherwise.
inline int default_true_factors(int p) {
  if (p == 25) return 7;
  if (p == 50) return 17;
  return std::max(1, static_cast<int>(std::ceil(0.35 * p)));
}

struct ScenarioSpec {
  int p = 25;
  int n_train = 500;
  int n_test = 500;
  Scenario scenario = Scenario::factor;
  int k_true = 0;  ///< 0 picks default_true_factors(p)
  Density density = Density::sparse;
  double noise_sd = 1.0;
  /// Correlation decay of the linear design, Sigma_ij = rho^|i-j|.
  double linear_rho = 0.8;
  std::uint64_t seed = 1;

  int true_factors() const { return k_true > 0 ? k_true : default_true_factors(p); }

  void validate() const {
    const auto fail = [](const std::string& m) { throw Error(ErrorKind::config, m); };
    if (p < 2) fail("scenario needs p >= 2");
    if (n_train < 2 || n_test < 1) fail("scenario needs n_train >= 2 and n_test >= 1");
    if (!(noise_sd > 0.0)) fail("noise_sd must be positive");
    if (!(std::abs(linear_rho) < 1.0)) fail("linear_rho must lie in (-1, 1)");
    if (scenario == Scenario::factor && true_factors() < 1) fail("k_true must be positive");
  }
};

struct GroundTruth {
  Vector beta0;
  Matrix Omega0;  ///< symmetric, zero diagonal; monomial coefficient of x_j x_l is 2 Omega0_jl
  std::vector<int> main_support;
  std::vector<std::pair<int, int>> interaction_support;  ///< j < l
  Matrix covariance;  ///< population covariance of X

  double conditional_mean(const Vector& x) const { return beta0.dot(x) + x.dot(Omega0 * x); }
};

struct ScenarioData {
  Matrix X_train;
  Vector y_train;
  Matrix X_test;
  Vector y_test;
  GroundTruth truth;
};

namespace detail {

template <RandomGenerator G>
double signed_uniform_coefficient(G& g) {
  const double magnitude = 0.5 + 0.5 * uniform_open(g);
  return uniform_open(g) < 0.5 ? -magnitude : magnitude;
}

template <RandomGenerator G>
Matrix draw_design(const Matrix& chol, Index n, G& g) {
  Matrix Z(n, chol.rows());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < Z.cols(); ++j) Z(i, j) = sample_normal(g);
  return Z * chol.transpose();
}

}  // namespace detail

/// Population covariance of X for the scenario; factor loadings drawn from `g`.
template <RandomGenerator G>
Matrix scenario_covariance(const ScenarioSpec& spec, G& g) {
  const Index p = spec.p;
  switch (spec.scenario) {
    case Scenario::factor: {
      const Index k = spec.true_factors();
      Matrix Lambda(p, k);
      for (Index j = 0; j < p; ++j)
        for (Index h = 0; h < k; ++h) Lambda(j, h) = sample_normal(g);
      Matrix cov = Lambda * Lambda.transpose();
      cov.diagonal().array() += 1.0;
      return cov;
    }
    case Scenario::linear: {
      Matrix cov(p, p);
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) cov(i, j) = std::pow(spec.linear_rho, std::abs(static_cast<double>(i - j)));
      return cov;
    }
    case Scenario::independent:
      return Matrix::Identity(p, p);
  }
  return Matrix::Identity(p, p);
}

/// Half of the main effects (a random subset of size ceil(p/2)) are nonzero;
/// interactions are a random subset of the pairs inside that support, sized
/// to the density fraction of all p(p-1)/2 pairs.
template <RandomGenerator G>
GroundTruth draw_ground_truth(int p, Density density, G& g) {
  GroundTruth t;
  t.beta0 = Vector::Zero(p);
  t.Omega0 = Matrix::Zero(p, p);
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), g);
  const int support = (p + 1) / 2;
  t.main_support.assign(order.begin(), order.begin() + support);
  std::sort(t.main_support.begin(), t.main_support.end());
  for (int j : t.main_support) t.beta0[j] = detail::signed_uniform_coefficient(g);

  const int total_pairs = p * (p - 1) / 2;
  const auto target = static_cast<std::size_t>(std::lround(density_fraction(density) * total_pairs));
  std::vector<std::pair<int, int>> candidates;
  for (std::size_t a = 0; a < t.main_support.size(); ++a)
    for (std::size_t b = a + 1; b < t.main_support.size(); ++b)
      candidates.emplace_back(t.main_support[a], t.main_support[b]);
  if (target > candidates.size()) {
    throw Error(ErrorKind::config,
                "interaction density needs " + std::to_string(target) + " pairs but only " +
                    std::to_string(candidates.size()) + " respect strong heredity at p = " + std::to_string(p));
  }
  std::shuffle(candidates.begin(), candidates.end(), g);
  candidates.resize(target);
  std::sort(candidates.begin(), candidates.end());
  for (auto [j, l] : candidates) {
    const double c = detail::signed_uniform_coefficient(g);
    t.Omega0(j, l) = c;
    t.Omega0(l, j) = c;
  }
  t.interaction_support = std::move(candidates);
  return t;
}

/// Train and test sets come from separate streams of the same population.
inline ScenarioData generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  RngStream truth_rng(spec.seed, stream_key(0, 101, 0));
  RngStream train_rng(spec.seed, stream_key(0, 101, 1));
  RngStream test_rng(spec.seed, stream_key(0, 101, 2));

  ScenarioData out;
  const Matrix cov = scenario_covariance(spec, truth_rng);
  out.truth = draw_ground_truth(spec.p, spec.density, truth_rng);
  out.truth.covariance = cov;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::numerical, "scenario covariance is not positive definite");
  const Matrix chol = llt.matrixL();

  const auto respond = [&](const Matrix& X, RngStream& g) {
    Vector y(X.rows());
    for (Index i = 0; i < X.rows(); ++i)
      y[i] = out.truth.conditional_mean(X.row(i).transpose()) + spec.noise_sd * g.normal();
    return y;
  };
  out.X_train = detail::draw_design(chol, spec.n_train, train_rng);
  out.y_train = respond(out.X_train, train_rng);
  out.X_test = detail::draw_design(chol, spec.n_test, test_rng);
  out.y_test = respond(out.X_test, test_rng);
  return out;
}

/// Posterior summary with exact zeros where the equal-tailed interval covers 0.
struct PointEstimate {
  double intercept = 0.0;
  Vector beta;
  Matrix Omega;  ///< matrix form, symmetric
  Matrix covariate_int;
};

inline PointEstimate posterior_to_point(std::span<const InducedCoefficients> draws, double level = 0.95) {
  require(!draws.empty(), "posterior_to_point: no draws");
  const Index p = draws.front().beta_X.size();
  const Index q = draws.front().covariate_int.cols();
  const auto n = draws.size();
  std::vector<double> trace(n);
  const auto summarize = [&](auto&& get) {
    for (std::size_t t = 0; t < n; ++t) trace[t] = get(draws[t]);
    return equal_tailed_interval(trace, level).contains(0.0) ? 0.0 : mean_of(trace);
  };
  PointEstimate out;
  for (std::size_t t = 0; t < n; ++t) out.intercept += draws[t].intercept;
  out.intercept /= static_cast<double>(n);
  out.beta.resize(p);
  for (Index j = 0; j < p; ++j) out.beta[j] = summarize([j](const InducedCoefficients& c) { return c.beta_X[j]; });
  out.Omega.resize(p, p);
  for (Index j = 0; j < p; ++j)
    for (Index l = j; l < p; ++l) {
      out.Omega(j, l) = summarize([j, l](const InducedCoefficients& c) { return c.Omega_X(j, l); });
      out.Omega(l, j) = out.Omega(j, l);
    }
  out.covariate_int.resize(p, q);
  for (Index j = 0; j < p; ++j)
    for (Index c = 0; c < q; ++c)
      out.covariate_int(j, c) = summarize([j, c](const InducedCoefficients& d) { return d.covariate_int(j, c); });
  return out;
}

struct MetricReport {
  double test_mse = 0.0;
  double main_mse = 0.0;
  double frobenius = 0.0;
  /// Rates: sign-matched hits over the true support, zeros over the true zero set.
  double tp_main = 0.0;
  double tn_main = 0.0;
  double tp_int = 0.0;
  double tn_int = 0.0;
  /// The same counts divided by the number of coefficients (p, or p(p-1)/2).
  double tp_main_raw = 0.0;
  double tn_main_raw = 0.0;
  double tp_int_raw = 0.0;
  double tn_int_raw = 0.0;
};

namespace detail {

struct SupportCounts {
  double tp = 0.0, tn = 0.0, positives = 0.0, negatives = 0.0, total = 0.0;

  void add(double estimate, double truth) {
    total += 1.0;
    if (truth != 0.0) {
      positives += 1.0;
      if (estimate != 0.0 && (estimate > 0.0) == (truth > 0.0)) tp += 1.0;
    } else {
      negatives += 1.0;
      if (estimate == 0.0) tn += 1.0;
    }
  }
  double tp_rate() const { return positives > 0.0 ? tp / positives : 1.0; }
  double tn_rate() const { return negatives > 0.0 ? tn / negatives : 1.0; }
};

}  // namespace detail

inline MetricReport metrics(const Vector& beta_hat, const Matrix& Omega_hat, const Vector& predictions,
                            const GroundTruth& truth, const Vector& y_test) {
  const Index p = truth.beta0.size();
  require(beta_hat.size() == p && Omega_hat.rows() == p && Omega_hat.cols() == p,
          "metrics: estimate dimensions do not match the truth");
  require(predictions.size() == y_test.size() && y_test.size() > 0, "metrics: prediction length mismatch");
  MetricReport r;
  r.test_mse = (predictions - y_test).squaredNorm() / static_cast<double>(y_test.size());
  r.main_mse = (beta_hat - truth.beta0).squaredNorm() / static_cast<double>(p);
  r.frobenius = (Omega_hat - truth.Omega0).norm();
  detail::SupportCounts mains, pairs;
  for (Index j = 0; j < p; ++j) mains.add(beta_hat[j], truth.beta0[j]);
  for (Index j = 0; j < p; ++j)
    for (Index l = j + 1; l < p; ++l) pairs.add(Omega_hat(j, l), truth.Omega0(j, l));
  r.tp_main = mains.tp_rate();
  r.tn_main = mains.tn_rate();
  r.tp_int = pairs.tp_rate();
  r.tn_int = pairs.tn_rate();
  r.tp_main_raw = mains.tp / mains.total;
  r.tn_main_raw = mains.tn / mains.total;
  r.tp_int_raw = pairs.total > 0.0 ? pairs.tp / pairs.total : 0.0;
  r.tn_int_raw = pairs.total > 0.0 ? pairs.tn / pairs.total : 0.0;
  return r;
}

struct FitSettings {
  int k = 0;  ///< 0 applies the rule of thumb to the training correlation matrix
  int n_iter = 2000;
  int n_burn = 1000;
  double level = 0.95;
  double predictive_level = 0.95;
  int n_threads = 1;
  std::uint64_t seed = 1;
};

struct ReplicateResult {
  MetricReport metrics;
  double predictive_coverage = 0.0;
  double min_ess_main = 0.0;
  double accept_rate = 0.0;
  double oracle_noise_var = 0.0;
  double oracle_test_mse = 0.0;  ///< test MSE of the true conditional mean
  int k = 0;
};

/// Pearson correlation matrix of the columns of X.
inline Matrix correlation_matrix(const Matrix& X) {
  const Matrix centered = X.rowwise() - X.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(X.rows() - 1);
  const Vector inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  return inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
}

inline int rule_of_thumb_k(const Matrix& correlation, double threshold = 0.9) {
  const Vector values = descending_eigenvalues(correlation);
  return select_k(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), threshold);
}

/// Standardizes the training data, runs one chain, maps draws back to the
/// original scale and scores them against the truth.
inline ReplicateResult run_replicate(const ScenarioData& sim, double noise_sd, const FitSettings& fit) {
  const Standardization transform = fit_standardization(sim.y_train, sim.X_train);
  Vector y_std(sim.y_train.size());
  for (Index i = 0; i < y_std.size(); ++i) y_std[i] = transform.response(sim.y_train[i]);
  const Dataset data = Dataset::fully_observed(y_std, transform.predictors(sim.X_train));

  Hyperparams hyper;
  hyper.k = fit.k > 0 ? fit.k : rule_of_thumb_k(correlation_matrix(sim.X_train));
  hyper.n_iter = fit.n_iter;
  hyper.n_burn = fit.n_burn;
  hyper.seed = fit.seed;
  hyper.n_threads = fit.n_threads;
  const PredictionInputs test{transform.predictors(sim.X_test), Matrix(sim.X_test.rows(), 0)};
  const ChainOutput chain = run_chain(data, hyper, &test);

  std::vector<InducedCoefficients> original;
  original.reserve(chain.induced_draws.size());
  for (const auto& d : chain.induced_draws) original.push_back(transform.to_original(d));
  const PointEstimate point = posterior_to_point(original, fit.level);

  Vector predictions(sim.y_test.size());
  Index covered = 0;
  std::vector<double> row(static_cast<std::size_t>(chain.n_kept()));
  for (Index i = 0; i < predictions.size(); ++i) {
    predictions[i] = transform.original_response(chain.predictive_mean[i]);
    for (Index t = 0; t < chain.n_kept(); ++t)
      row[static_cast<std::size_t>(t)] = transform.original_response(chain.predictive_draws(i, t));
    if (equal_tailed_interval(row, fit.predictive_level).contains(sim.y_test[i])) ++covered;
  }

  ReplicateResult r;
  r.metrics = metrics(point.beta, point.Omega, predictions, sim.truth, sim.y_test);
  r.predictive_coverage = static_cast<double>(covered) / static_cast<double>(predictions.size());
  r.min_ess_main = chain.ess_main.size() > 0 ? chain.ess_main.minCoeff() : 0.0;
  r.accept_rate = chain.accept_rate_eta;
  r.oracle_noise_var = noise_sd * noise_sd;
  double oracle = 0.0;
  for (Index i = 0; i < sim.y_test.size(); ++i) {
    const double e = sim.y_test[i] - sim.truth.conditional_mean(sim.X_test.row(i).transpose());
    oracle += e * e;
  }
  r.oracle_test_mse = oracle / static_cast<double>(sim.y_test.size());
  r.k = hyper.k;
  return r;
}

}  // namespace fin
