#pragma once

// Induced coefficients of the diagonal polynomial model
//   E[y | eta] = sum_h sum_{q=1..Q} omega_h^(q) eta_h^q.
// Since eta_h | X ~ N(mu_h, V_hh) with mu_h = sum_j a_hj x_j, each power
// expands into non-central normal moments
//   E[eta^q] = sum_f b_qf sigma^(q - m) mu^m,   m = q, q-2, ...
// and mu^m into multinomial terms in x.

#include <cmath>
#include <vector>

#include "fin/errors.hpp"
#include "fin/model.hpp"

namespace fin {

inline constexpr int kMaxPolynomialOrder = 4;

namespace detail {

inline double factorial(int n) {
  double out = 1.0;
  for (int i = 2; i <= n; ++i) out *= i;
  return out;
}

}  // namespace detail

/// Odd-power constant: (2q-1)! / ((2f-1)! (q-f)! 2^(q-f)), the weight of
/// sigma^(2q-2f) mu^(2f-1) in E[eta^(2q-1)].
inline double b_odd(int q, int f) {
  using detail::factorial;
  return factorial(2 * q - 1) / (factorial(2 * f - 1) * factorial(q - f) * std::ldexp(1.0, q - f));
}

/// Even-power constant: (2q)! / ((2f)! (q-f)! 2^(q-f)), the weight of
/// sigma^(2q-2f) mu^(2f) in E[eta^(2q)].
inline double b_even(int q, int f) {
  using detail::factorial;
  return factorial(2 * q) / (factorial(2 * f) * factorial(q - f) * std::ldexp(1.0, q - f));
}

/// Weight of V^((power - order)/2) mu^order in E[eta^power] for eta ~ N(mu, V).
inline double moment_weight(int power, int order) {
  if (order > power || (power - order) % 2 != 0) return 0.0;
  if (power % 2 == 1) return b_odd((power + 1) / 2, (order + 1) / 2);
  return b_even(power / 2, order / 2);
}

/// Multinomial coefficient order! / prod_j count_j! for a sorted multi-index.
inline double multinomial(const Monomial& index) {
  double out = detail::factorial(static_cast<int>(index.size()));
  std::size_t run = 1;
  for (std::size_t i = 1; i <= index.size(); ++i) {
    if (i < index.size() && index[i] == index[i - 1]) {
      ++run;
    } else {
      out /= detail::factorial(static_cast<int>(run));
      run = 1;
    }
  }
  return out;
}

/// Coefficient of the monomial prod_j x_j^{k_j} (given as a sorted index
/// list; empty for the intercept) in E[y | X].
inline double monomial_coefficient(const FactorPosteriorMoments& m,
                                   const std::vector<Vector>& omega_higher,
                                   const Monomial& index) {
  const int order = static_cast<int>(index.size());
  const int Q = static_cast<int>(omega_higher.size());
  const double multi = multinomial(index);
  double total = 0.0;
  for (Index h = 0; h < m.A.rows(); ++h) {
    double a_product = multi;
    for (int j : index) a_product *= m.A(h, j);
    if (a_product == 0.0) continue;
    double weight = 0.0;
    for (int power = std::max(order, 1); power <= Q; ++power) {
      const double w = moment_weight(power, order);
      if (w == 0.0) continue;
      weight += omega_higher[static_cast<std::size_t>(power - 1)][h] * w *
                std::pow(m.V(h, h), (power - order) / 2);
    }
    total += weight * a_product;
  }
  return total;
}

/// All multi-indices of the given order over p predictors, in lexicographic order.
inline std::vector<Monomial> enumerate_monomials(int p, int order) {
  std::vector<Monomial> out;
  Monomial current(static_cast<std::size_t>(order), 0);
  if (order == 0) return {Monomial{}};
  if (p <= 0) return out;
  for (;;) {
    out.push_back(current);
    int pos = order - 1;
    while (pos >= 0 && current[static_cast<std::size_t>(pos)] == p - 1) --pos;
    if (pos < 0) break;
    const int next = current[static_cast<std::size_t>(pos)] + 1;
    for (int i = pos; i < order; ++i) current[static_cast<std::size_t>(i)] = next;
  }
  return out;
}

/// Coefficients of every monomial of total degree `target_order` (0 gives the
/// intercept) in E[y | X] under the degree-Q diagonal polynomial model.
inline MonomialCoefficients induced_higher_order(const FactorPosteriorMoments& m,
                                                 const std::vector<Vector>& omega_higher, int Q,
                                                 int target_order) {
  require(Q >= 1 && Q <= kMaxPolynomialOrder, "induced_higher_order: Q must lie in [1, 4]");
  require(static_cast<int>(omega_higher.size()) == Q,
          "induced_higher_order: need one omega vector per power");
  require(target_order >= 0 && target_order <= Q,
          "induced_higher_order: target order must lie in [0, Q]");
  for (const auto& w : omega_higher)
    require(w.size() == m.A.rows(), "induced_higher_order: omega^(q) must have length k");
  MonomialCoefficients out;
  for (auto& index : enumerate_monomials(static_cast<int>(m.A.cols()), target_order)) {
    const double c = monomial_coefficient(m, omega_higher, index);
    out.emplace(std::move(index), c);
  }
  return out;
}

/// Evaluates sum over orders 0..Q of the induced polynomial at x.
inline double evaluate_induced_polynomial(const FactorPosteriorMoments& m,
                                          const std::vector<Vector>& omega_higher,
                                          const Vector& x) {
  const int Q = static_cast<int>(omega_higher.size());
  double total = 0.0;
  for (int order = 0; order <= Q; ++order) {
    for (const auto& [index, c] : induced_higher_order(m, omega_higher, Q, order)) {
      double term = c;
      for (int j : index) term *= x[j];
      total += term;
    }
  }
  return total;
}

}  // namespace fin
