#pragma once

// Joint-distribution ("getting it right") test of the sampler. The
// marginal-conditional simulator draws parameters from the prior; the
// successive-conditional simulator alternates one sweep with a fresh draw of
// the data given the current parameters. Both target the prior, so the means
// of any functional must agree.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fin/diagnostics.hpp"
#include "fin/sampler.hpp"

namespace fin {

struct GewekeSettings {
  Index n = 20;
  Index p = 4;
  int k = 2;
  bool covariates = true;
  int n_prior = 50000;
  int n_sweeps = 50000;
  double step = 0.2;
  std::uint64_t seed = 1;
  /// Proper, light-tailed variance priors so that sigma^2 has finite moments.
  double inv_gamma_shape = 3.0;
  double inv_gamma_rate = 2.0;
  double prior_var_coef = 1.0;
  LocalScaleUpdate local_scale_update = LocalScaleUpdate::dirichlet_laplace;
  MalaMetric mala_metric = MalaMetric::gauss_newton;
};

struct GewekeResult {
  std::string name;
  double prior_mean = 0.0;
  double prior_se = 0.0;
  double chain_mean = 0.0;
  double chain_se = 0.0;
  double z = 0.0;
};

inline std::vector<GewekeResult> geweke_test(const GewekeSettings& s) {
  Hyperparams hyper;
  hyper.k = s.k;
  hyper.seed = s.seed;
  hyper.prior_var_coef = s.prior_var_coef;
  hyper.local_scale_update = s.local_scale_update;
  hyper.mala_metric = s.mala_metric;
  hyper.inv_gamma_shape = s.inv_gamma_shape;
  hyper.inv_gamma_rate = s.inv_gamma_rate;
  hyper.n_iter = 2;
  hyper.n_burn = 1;
  hyper.validate(s.p);

  RngStream setup(s.seed, stream_key(0, static_cast<std::uint64_t>(Block::init), 1));
  Dataset data = Dataset::fully_observed(Vector::Zero(s.n), Matrix::Zero(s.n, s.p));
  if (s.covariates) {
    data.Z = Matrix(s.n, 1);
    for (Index i = 0; i < s.n; ++i) data.Z(i, 0) = setup.normal();
  }
  data.status(0, 0) = EntryStatus::missing;

  using Functional = std::function<double(const ModelState&)>;
  std::vector<std::pair<std::string, Functional>> functionals = {
      {"omega_1", [](const ModelState& m) { return m.omega[0]; }},
      {"sigma2", [](const ModelState& m) { return m.sigma2_y; }},
      {"lambda_11^2", [](const ModelState& m) { return m.Lambda(0, 0) * m.Lambda(0, 0); }},
      {"|lambda_11|", [](const ModelState& m) { return std::abs(m.Lambda(0, 0)); }},
      {"log|lambda_11|", [](const ModelState& m) { return std::log(std::abs(m.Lambda(0, 0))); }},
      {"|lambda_11|<1", [](const ModelState& m) { return std::abs(m.Lambda(0, 0)) < 1.0 ? 1.0 : 0.0; }},
      {"tau_1", [](const ModelState& m) { return m.tau[0]; }},
      {"imputed_x_11", [](const ModelState& m) { return m.X(0, 0); }},
      {"Omega_12", [](const ModelState& m) { return m.Omega(0, 1); }},
      {"psi_1", [](const ModelState& m) { return m.psi_diag[0]; }},
      {"eta_11^2", [](const ModelState& m) { return m.eta(0, 0) * m.eta(0, 0); }},
  };
  if (s.covariates) functionals.push_back({"alpha_1", [](const ModelState& m) { return m.alpha[0]; }});

  const std::size_t nf = functionals.size();
  std::vector<std::vector<double>> prior(nf), chain(nf);

  RngStream prior_rng(s.seed, stream_key(0, static_cast<std::uint64_t>(Block::prior), 0));
  for (int d = 0; d < s.n_prior; ++d) {
    const ModelState m = draw_from_prior(data, hyper, prior_rng);
    for (std::size_t f = 0; f < nf; ++f) prior[f].push_back(functionals[f].second(m));
  }

  RngStream start_rng(s.seed, stream_key(0, static_cast<std::uint64_t>(Block::prior), 1));
  ModelState state = draw_from_prior(data, hyper, start_rng);
  RngStream observe_rng(s.seed, stream_key(0, static_cast<std::uint64_t>(Block::observe), 0));
  simulate_observations(state, data, observe_rng);
  for (int t = 0; t < s.n_sweeps; ++t) {
    sweep(state, data, hyper, static_cast<std::uint64_t>(t + 1), s.step);
    simulate_observations(state, data, observe_rng);
    for (std::size_t f = 0; f < nf; ++f) chain[f].push_back(functionals[f].second(state));
  }

  std::vector<GewekeResult> out;
  for (std::size_t f = 0; f < nf; ++f) {
    GewekeResult r;
    r.name = functionals[f].first;
    r.prior_mean = mean_of(prior[f]);
    r.prior_se = std::sqrt(variance_of(prior[f]) / static_cast<double>(prior[f].size()));
    r.chain_mean = mean_of(chain[f]);
    r.chain_se = batch_means_se(chain[f]);
    r.z = (r.chain_mean - r.prior_mean) / std::hypot(r.prior_se, r.chain_se);
    out.push_back(r);
  }
  return out;
}

}  // namespace fin
