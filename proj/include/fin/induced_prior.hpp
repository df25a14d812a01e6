#pragma once

// Monte Carlo of the prior that the latent model induces on regression
// coefficients of X: Lambda from the Dirichlet-Laplace prior, Psi from its
// inverse-gamma prior, omega^(q) ~ N(0, coef_var) for the degree-3 diagonal
// polynomial sum_h sum_q omega_h^(q) eta_h^q.

#include <array>
#include <cmath>
#include <vector>

#include "fin/diagnostics.hpp"
#include "fin/distributions.hpp"
#include "fin/higher_order.hpp"
#include "fin/model.hpp"

namespace fin {

struct InducedPriorSettings {
  int p = 20;
  int k = 5;
  double dl_a = 0.5;
  int n_draws = 10000;
  double coef_var = 1.0;
  double inv_gamma_shape = 0.5;
  double inv_gamma_rate = 0.5;
};

/// Pooled prior draws by interaction order. Per prior draw the record holds
/// every main effect, the pairs (j, j+1) and the triples (j, j+1, j+2)
/// (indices mod p), read as monomial coefficients.
struct InducedPriorSamples {
  std::vector<double> main;
  std::vector<double> pairwise;
  std::vector<double> third;
};

struct QuantileSummary {
  double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
  double iqr() const { return q75 - q25; }
};

inline QuantileSummary summarize_quantiles(std::span<const double> x) {
  return {quantile(x, 0.05), quantile(x, 0.25), quantile(x, 0.5), quantile(x, 0.75),
          quantile(x, 0.95)};
}

/// Draws Lambda (p x k) from the Dirichlet-Laplace prior.
template <RandomGenerator G>
Matrix sample_dl_loadings(Index p, Index k, double a, G& g) {
  Matrix Lambda(p, k);
  for (Index j = 0; j < p; ++j) {
    const Vector phi = sample_dirichlet(a, k, g);
    const double tau = sample_gamma(static_cast<double>(k) * a, 0.5, g);
    for (Index h = 0; h < k; ++h) {
      const double psi = sample_gamma(1.0, 0.5, g);
      Lambda(j, h) = tau * phi[h] * std::sqrt(psi) * sample_normal(g);
    }
  }
  return Lambda;
}

template <RandomGenerator G>
InducedPriorSamples simulate_induced_prior(const InducedPriorSettings& s, G& g) {
  require(s.p >= 3, "simulate_induced_prior: p must be at least 3");
  require(s.k >= 0, "simulate_induced_prior: k must be non-negative");
  require(s.n_draws >= 1, "simulate_induced_prior: need at least one draw");
  require(s.dl_a > 0.0 && s.coef_var > 0.0, "simulate_induced_prior: parameters must be positive");
  const auto draws = static_cast<std::size_t>(s.n_draws);
  const auto p = static_cast<std::size_t>(s.p);
  InducedPriorSamples out;
  if (s.k == 0) {
    out.main.assign(draws * p, 0.0);
    out.pairwise.assign(draws * p, 0.0);
    out.third.assign(draws * p, 0.0);
    return out;
  }
  out.main.reserve(draws * p);
  out.pairwise.reserve(draws * p);
  out.third.reserve(draws * p);

  const double sd = std::sqrt(s.coef_var);
  for (std::size_t d = 0; d < draws; ++d) {
    const Matrix Lambda = sample_dl_loadings(s.p, s.k, s.dl_a, g);
    Vector psi(s.p);
    for (Index j = 0; j < s.p; ++j)
      psi[j] = 1.0 / sample_gamma(s.inv_gamma_shape, s.inv_gamma_rate, g);
    const FactorPosteriorMoments m = factor_posterior_moments(Lambda, psi);
    std::vector<Vector> omega(3);
    for (auto& w : omega) w = sd * sample_standard_normal(s.k, g);

    for (int j = 0; j < s.p; ++j) {
      const int j1 = (j + 1) % s.p;
      const int j2 = (j + 2) % s.p;
      Monomial pair{j, j1};
      Monomial triple{j, j1, j2};
      std::sort(pair.begin(), pair.end());
      std::sort(triple.begin(), triple.end());
      out.main.push_back(monomial_coefficient(m, omega, Monomial{j}));
      out.pairwise.push_back(monomial_coefficient(m, omega, pair));
      out.third.push_back(monomial_coefficient(m, omega, triple));
    }
  }
  return out;
}

}  // namespace fin
