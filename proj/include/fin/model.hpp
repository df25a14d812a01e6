#pragma once

// Deterministic model mathematics for the latent quadratic regression
//   y = eta' omega + eta' Omega eta (+ Z' alpha + eta' Delta Z) + e_y
//   X = Lambda eta + e,  e ~ N(0, Psi),  eta ~ N(0, I_k)
// and the quadratic regression of y on X that it induces.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fin/errors.hpp"
#include "fin/types.hpp"

namespace fin {

struct FactorLoadings {
  Matrix Lambda;                   ///< p x k
  std::optional<MaskMatrix> mask;  ///< true entries are held at exactly zero

  Index p() const { return Lambda.rows(); }
  Index k() const { return Lambda.cols(); }
};

struct NoiseVariances {
  Vector psi_diag;        ///< diagonal of Psi, length p
  double sigma2_y = 1.0;  ///< response noise variance
};

/// Regression coefficients in the latent space. Empty vectors/matrices mean
/// "absent" (no covariates, no polynomial terms).
struct RegressionCoefficients {
  Vector omega;                     ///< length k
  Matrix Omega;                     ///< k x k symmetric
  std::vector<Vector> omega_higher; ///< omega^(q), q = 1..Q, for the diagonal polynomial model
  Vector alpha;                     ///< length q
  Matrix Delta;                     ///< k x q

  bool has_covariates() const { return Delta.size() > 0; }
};

/// Moments of eta | X: mean A X and covariance V.
struct FactorPosteriorMoments {
  Matrix A;  ///< k x p
  Matrix V;  ///< k x k
};

/// Multi-index of a monomial: non-decreasing predictor indices, so x0^2 x3 is {0, 0, 3}.
using Monomial = std::vector<int>;
using MonomialCoefficients = std::map<Monomial, double>;

/// The regression of y on X implied by the latent model.
///
/// Omega_X uses the matrix convention: the fitted surface is
/// x' Omega_X x, so the coefficient of x_j x_l (j != l) as a monomial is
/// 2 [Omega_X]_{jl} while that of x_j^2 is [Omega_X]_{jj}.
struct InducedCoefficients {
  double intercept = 0.0;
  Vector beta_X;         ///< length p
  Matrix Omega_X;        ///< p x p symmetric
  Matrix covariate_int;  ///< p x q, empty without covariates
  std::map<int, MonomialCoefficients> higher_order;

  /// E[y | X = x, Z = 0].
  double conditional_mean(const Vector& x) const {
    return intercept + beta_X.dot(x) + x.dot(Omega_X * x);
  }
};

inline void apply_mask(Matrix& Lambda, const MaskMatrix& mask) {
  require(mask.rows() == Lambda.rows() && mask.cols() == Lambda.cols(),
          "loading mask dimensions do not match Lambda");
  Lambda = mask.select(Matrix::Zero(Lambda.rows(), Lambda.cols()), Lambda);
}

/// Block-sparsity mask: columns [0, groups.size()) are block columns where
/// predictors outside group g cannot load on column g; remaining columns are free.
inline MaskMatrix block_sparsity_mask(std::span<const int> group_of_predictor, Index n_groups,
                                      Index k) {
  require(n_groups <= k, "block_sparsity_mask: more groups than factors");
  MaskMatrix mask = MaskMatrix::Constant(static_cast<Index>(group_of_predictor.size()), k, false);
  for (Index j = 0; j < mask.rows(); ++j) {
    const int grp = group_of_predictor[static_cast<std::size_t>(j)];
    require(grp >= 0 && grp < n_groups, "block_sparsity_mask: group index out of range");
    for (Index g = 0; g < n_groups; ++g) mask(j, g) = (g != grp);
  }
  return mask;
}

/// V = (Lambda' Psi^{-1} Lambda + I)^{-1}, A = V Lambda' Psi^{-1}, from one
/// Cholesky factorization.
inline FactorPosteriorMoments factor_posterior_moments(const Matrix& Lambda,
                                                       const Vector& psi_diag) {
  require(psi_diag.size() == Lambda.rows(), "factor_posterior_moments: Psi has wrong length");
  require((psi_diag.array() > 0.0).all(), "factor_posterior_moments: Psi entries must be positive");
  const Index k = Lambda.cols();
  const Matrix Lt_psi_inv = Lambda.transpose() * psi_diag.cwiseInverse().asDiagonal();
  Matrix precision = Lt_psi_inv * Lambda;
  precision.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::numerical, "factor_posterior_moments: Cholesky failed");
  FactorPosteriorMoments out;
  out.V = llt.solve(Matrix::Identity(k, k));
  out.V = 0.5 * (out.V + out.V.transpose()).eval();
  out.A = llt.solve(Lt_psi_inv);
  return out;
}

inline FactorPosteriorMoments factor_posterior_moments(const FactorLoadings& loadings,
                                                       const NoiseVariances& noise) {
  return factor_posterior_moments(loadings.Lambda, noise.psi_diag);
}

/// Intercept tr(Omega V), main effects A' omega, interactions A' Omega A and,
/// with covariates, exposure-covariate interactions A' Delta.
inline InducedCoefficients induced_coefficients(const FactorPosteriorMoments& m,
                                                const RegressionCoefficients& coef) {
  const Index k = m.A.rows();
  require(coef.omega.size() == k, "induced_coefficients: omega must have length k");
  require(coef.Omega.rows() == k && coef.Omega.cols() == k,
          "induced_coefficients: Omega must be k x k");
  InducedCoefficients out;
  out.intercept = (coef.Omega * m.V).trace();
  out.beta_X = m.A.transpose() * coef.omega;
  out.Omega_X = m.A.transpose() * coef.Omega * m.A;
  out.Omega_X = 0.5 * (out.Omega_X + out.Omega_X.transpose()).eval();
  if (coef.has_covariates()) {
    require(coef.Delta.rows() == k, "induced_coefficients: Delta must have k rows");
    out.covariate_int = m.A.transpose() * coef.Delta;
  }
  return out;
}

/// Rule of thumb: smallest k whose leading values carry strictly more than
/// `threshold` of the total.
inline int select_k(std::span<const double> values, double threshold = 0.9) {
  require(!values.empty(), "select_k: no singular values given");
  require(threshold > 0.0 && threshold < 1.0, "select_k: threshold must lie in (0, 1)");
  for (std::size_t j = 0; j < values.size(); ++j) {
    require(values[j] >= 0.0 && std::isfinite(values[j]), "select_k: values must be finite and >= 0");
    if (j > 0) require(values[j] <= values[j - 1], "select_k: values must be sorted descending");
  }
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  require(total > 0.0, "select_k: values are all zero");
  double cumulative = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    cumulative += values[j];
    if (cumulative / total > threshold) return static_cast<int>(j + 1);
  }
  return static_cast<int>(values.size());
}

/// Eigenvalues of a symmetric matrix in descending order, clamped at zero.
inline Vector descending_eigenvalues(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric, Eigen::EigenvaluesOnly);
  Vector values = eig.eigenvalues().reverse();
  return values.cwiseMax(0.0);
}

struct KlBound {
  double kl = 0.0;     ///< KL(N(0, S0) || N(0, S1)) at the best rank-k approximation
  double bound = 0.0;  ///< sum of the discarded eigenvalues of Lambda0 Lambda0' over s0
};

/// Gaussian KL divergence between zero-mean normals with covariances s0 and s1.
inline double gaussian_kl(const Matrix& cov0, const Matrix& cov1) {
  Eigen::LLT<Matrix> l0(cov0), l1(cov1);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success)
    throw Error(ErrorKind::numerical, "gaussian_kl: covariance not positive definite");
  const double logdet0 = 2.0 * l0.matrixLLT().diagonal().array().log().sum();
  const double logdet1 = 2.0 * l1.matrixLLT().diagonal().array().log().sum();
  const double trace = l1.solve(cov0).trace();
  return 0.5 * (trace - static_cast<double>(cov0.rows()) + logdet1 - logdet0);
}

/// KL from the true factor covariance Lambda0 Lambda0' + s0 I to the one
/// built from its best rank-k approximation, together with the
/// discarded-eigenvalue bound. Throws if the bound is violated.
inline KlBound kl_bound_check(const Matrix& Lambda0, double s0, int k) {
  const Index p = Lambda0.rows();
  const Index k0 = Lambda0.cols();
  require(s0 > 0.0, "kl_bound_check: s0 must be positive");
  require(k >= 0 && k < k0, "kl_bound_check: need 0 <= k < k0");
  const Matrix gram = Lambda0 * Lambda0.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  // Eigen sorts ascending; the k largest live in the last k columns.
  const Vector values = eig.eigenvalues().cwiseMax(0.0);
  Matrix rank_k = Matrix::Zero(p, p);
  for (Index j = p - k; j < p; ++j)
    rank_k += values[j] * eig.eigenvectors().col(j) * eig.eigenvectors().col(j).transpose();
  KlBound out;
  Matrix cov0 = gram;
  cov0.diagonal().array() += s0;
  Matrix cov1 = rank_k;
  cov1.diagonal().array() += s0;
  out.kl = std::max(0.0, gaussian_kl(cov0, cov1));
  for (Index j = 0; j < p - k; ++j) out.bound += values[j];
  out.bound /= s0;
  if (out.kl > out.bound * (1.0 + 1e-10) + 1e-12)
    throw Error(ErrorKind::numerical, "kl_bound_check: KL exceeds the eigenvalue bound");
  return out;
}

}  // namespace fin
