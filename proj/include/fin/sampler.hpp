#pragma once

// MCMC for the FIN latent quadratic regression. One sweep updates, in order:
//   eta (MALA) -> omega -> Omega -> (alpha, Delta) -> sigma^2 -> Lambda rows
//   -> Dirichlet-Laplace scales (phi, tau, psi) -> Psi -> missing / below-LOD X.
// Every unit-wise block (rows of eta, rows of Lambda, DL scales, Psi,
// imputation) draws from its own RNG stream keyed by (seed, sweep, block,
// unit), so results do not depend on the thread count.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fin/diagnostics.hpp"
#include "fin/distributions.hpp"
#include "fin/errors.hpp"
#include "fin/model.hpp"
#include "fin/parallel.hpp"
#include "fin/rng.hpp"
#include "fin/types.hpp"

namespace fin {

enum class EntryStatus : std::uint8_t { observed, missing, below_lod };

/// Row-major n x p grid of entry statuses.
class StatusGrid {
 public:
  StatusGrid() = default;
  StatusGrid(Index rows, Index cols, EntryStatus fill = EntryStatus::observed)
      : rows_(rows), cols_(cols), cells_(static_cast<std::size_t>(rows * cols), fill) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  EntryStatus operator()(Index i, Index j) const { return cells_[offset(i, j)]; }
  EntryStatus& operator()(Index i, Index j) { return cells_[offset(i, j)]; }

  Index count(EntryStatus s) const {
    return static_cast<Index>(std::count(cells_.begin(), cells_.end(), s));
  }

 private:
  std::size_t offset(Index i, Index j) const { return static_cast<std::size_t>(i * cols_ + j); }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<EntryStatus> cells_;
};

struct Dataset {
  Vector y;           ///< length n
  Matrix X;           ///< n x p; only observed entries are meaningful
  StatusGrid status;  ///< n x p
  Vector lod;         ///< length p detection limits on the modeling scale; NaN when absent
  Matrix Z;           ///< n x q covariates, empty when absent

  Index n() const { return y.size(); }
  Index p() const { return X.cols(); }
  Index q() const { return Z.cols(); }
  bool has_covariates() const { return Z.cols() > 0; }

  static Dataset fully_observed(Vector y, Matrix X, Matrix Z = Matrix()) {
    Dataset d;
    d.status = StatusGrid(X.rows(), X.cols());
    d.lod = Vector::Constant(X.cols(), std::numeric_limits<double>::quiet_NaN());
    d.y = std::move(y);
    d.X = std::move(X);
    d.Z = Z.size() > 0 ? std::move(Z) : Matrix(d.y.size(), 0);
    return d;
  }

  void validate() const {
    if (n() < 2) throw Error(ErrorKind::data, "dataset needs at least two rows");
    if (X.rows() != n()) throw Error(ErrorKind::data, "X and y have different row counts");
    if (status.rows() != n() || status.cols() != p())
      throw Error(ErrorKind::data, "status grid does not match X");
    if (lod.size() != p()) throw Error(ErrorKind::data, "lod vector must have one entry per column");
    if (Z.rows() != n()) throw Error(ErrorKind::data, "Z and y have different row counts");
    if (!y.allFinite()) throw Error(ErrorKind::data, "response contains non-finite values");
    if (!Z.allFinite()) throw Error(ErrorKind::data, "covariates contain non-finite values");
    for (Index j = 0; j < p(); ++j) {
      for (Index i = 0; i < n(); ++i) {
        const EntryStatus s = status(i, j);
        if (s == EntryStatus::observed && !std::isfinite(X(i, j)))
          throw Error(ErrorKind::data, "non-finite observed value in column " + std::to_string(j));
        if (s == EntryStatus::below_lod && !std::isfinite(lod[j]))
          throw Error(ErrorKind::config,
                      "below-LOD entry in column " + std::to_string(j) + " without a detection limit");
      }
    }
  }
};

/// How the Dirichlet-Laplace local scales psi_jh are refreshed.
enum class LocalScaleUpdate {
  /// 1/psi_jh ~ InvGauss(phi_jh tau_j / |lambda_jh|, 1): the exact conditional.
  dirichlet_laplace,
  /// psi_jh ~ InvGauss(tau_j phi_jh, 1) as sometimes printed; ignores Lambda.
  printed,
};

/// Proposal covariance of the eta update.
enum class MalaMetric {
  /// N(eta + step/2 grad, step I).
  identity,
  /// N(eta + step/2 G^-1 grad, step G^-1) with the position-dependent
  /// Gauss-Newton metric G = Lambda' Psi^-1 Lambda + I + g g' / sigma^2,
  /// g the gradient of the regression mean in eta.
  gauss_newton,
};

struct Hyperparams {
  int k = 2;
  double dl_a = 0.5;
  double prior_var_coef = 100.0;  ///< prior variance of omega, Omega, alpha, Delta entries
  double inv_gamma_shape = 0.5;   ///< sigma^-2 and sigma_j^-2 ~ Gamma(shape, rate)
  double inv_gamma_rate = 0.5;
  double mala_step = 0.5;
  double mala_target_accept = 0.574;
  MalaMetric mala_metric = MalaMetric::gauss_newton;
  bool adapt_step = true;  ///< dual averaging during burn-in, frozen afterwards
  int n_iter = 5000;
  int n_burn = 4000;
  std::uint64_t seed = 1;
  int n_threads = 1;
  LocalScaleUpdate local_scale_update = LocalScaleUpdate::dirichlet_laplace;
  std::optional<MaskMatrix> loading_mask;
  bool keep_loadings = false;
  bool check_invariants = false;  ///< full invariant sweep after every iteration

  void validate(Index p) const {
    const auto fail = [](const std::string& what) { throw Error(ErrorKind::config, what); };
    if (k < 1) fail("k must be at least 1");
    if (!(dl_a > 0.0)) fail("dl_a must be positive");
    if (!(prior_var_coef > 0.0)) fail("prior_var_coef must be positive");
    if (!(inv_gamma_shape > 0.0) || !(inv_gamma_rate > 0.0)) fail("inverse-gamma parameters must be positive");
    if (!(mala_step > 0.0)) fail("mala_step must be positive");
    if (!(mala_target_accept > 0.0 && mala_target_accept < 1.0)) fail("mala_target_accept must lie in (0, 1)");
    if (n_iter < 1 || n_burn < 0 || n_burn >= n_iter) fail("need 0 <= n_burn < n_iter");
    if (n_threads < 1) fail("n_threads must be at least 1");
    if (loading_mask && (loading_mask->rows() != p || loading_mask->cols() != k))
      fail("loading mask must be p x k");
  }
};

struct ModelState {
  Matrix eta;        ///< n x k
  Matrix Lambda;     ///< p x k
  Vector omega;      ///< k
  Matrix Omega;      ///< k x k symmetric
  Vector alpha;      ///< q
  Matrix Delta;      ///< k x q
  Vector psi_diag;   ///< p noise variances of X
  double sigma2_y = 1.0;
  Matrix phi;        ///< p x k Dirichlet allocations
  Vector tau;        ///< p global scales
  Matrix psi_local;  ///< p x k exponential mixing scales
  Matrix X;          ///< n x p with current imputations

  RegressionCoefficients coefficients() const {
    RegressionCoefficients c;
    c.omega = omega;
    c.Omega = Omega;
    c.alpha = alpha;
    c.Delta = Delta;
    return c;
  }
};

/// Identifies an update block when deriving RNG streams.
enum class Block : std::uint64_t {
  init = 1, eta, omega, Omega, covariates, sigma2, loadings, local_scales, noise, impute,
  predict, prior, observe,
};

/// Source of per-unit streams for one sweep.
struct SweepRng {
  std::uint64_t seed = 0;
  std::uint64_t sweep = 0;

  RngStream stream(Block block, std::uint64_t unit = 0) const {
    return RngStream(seed, stream_key(sweep, static_cast<std::uint64_t>(block), unit));
  }
};

/// Floor applied to |lambda_jh| wherever the DL conditionals divide by it,
/// so the GIG b-parameter 2|lambda| never drops below 1e-12.
inline constexpr double kLoadingFloor = 5e-13;

namespace detail {

inline std::vector<std::vector<Index>> active_columns(const Hyperparams& hyper, Index p) {
  std::vector<std::vector<Index>> active(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j)
    for (Index h = 0; h < hyper.k; ++h)
      if (!hyper.loading_mask || !(*hyper.loading_mask)(j, h))
        active[static_cast<std::size_t>(j)].push_back(h);
  return active;
}

inline Matrix pick_columns(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(cols[c]);
  return out;
}

inline void ensure_finite(bool ok, const char* block, std::uint64_t sweep) {
  if (!ok)
    throw Error(ErrorKind::numerical, std::string("non-finite state in block '") + block +
                                          "' at iteration " + std::to_string(sweep));
}

}  // namespace detail

/// Per-row pieces of the regression mean of y.
struct RegressionParts {
  Vector linear;      ///< eta_i' omega
  Vector quadratic;   ///< eta_i' Omega eta_i
  Vector covariates;  ///< Z_i' alpha + eta_i' Delta Z_i

  Vector total() const { return linear + quadratic + covariates; }
};

inline RegressionParts regression_parts(const ModelState& s, const Dataset& data) {
  RegressionParts parts;
  parts.linear = s.eta * s.omega;
  parts.quadratic = ((s.eta * s.Omega).array() * s.eta.array()).rowwise().sum().matrix();
  parts.covariates = Vector::Zero(data.n());
  if (data.has_covariates()) {
    parts.covariates = data.Z * s.alpha;
    parts.covariates += ((s.eta * s.Delta).array() * data.Z.array()).rowwise().sum().matrix();
  }
  return parts;
}

struct EtaDensity {
  double log_density = 0.0;  ///< up to an additive constant
  Vector gradient;
};

/// Full conditional of one row of eta, with every other block held fixed:
///   -1/2 eta'(Lambda' Psi^-1 Lambda + I) eta + eta' Lambda' Psi^-1 x_i
///   - (y_i - eta'omega - eta'Omega eta - z_i'alpha - eta'Delta z_i)^2 / (2 sigma^2).
class EtaConditional {
 public:
  EtaConditional(const ModelState& s, const Dataset& data)
      : state_(s), data_(data) {
    const Matrix Lt_psi_inv = s.Lambda.transpose() * s.psi_diag.cwiseInverse().asDiagonal();
    precision_ = Lt_psi_inv * s.Lambda;
    precision_.diagonal().array() += 1.0;
    linear_ = Lt_psi_inv * s.X.transpose();
    if (data.has_covariates()) {
      offset_ = data.Z * s.alpha;
      delta_z_ = s.Delta * data.Z.transpose();
    } else {
      offset_ = Vector::Zero(data.n());
      delta_z_ = Matrix::Zero(s.Lambda.cols(), data.n());
    }
  }

  EtaDensity evaluate(Index i, const Vector& eta) const {
    const Vector omega_eta = state_.Omega * eta;
    const Vector slope = state_.omega + delta_z_.col(i);
    const double residual =
        data_.y[i] - eta.dot(slope) - eta.dot(omega_eta) - offset_[i];
    const double inv_s2 = 1.0 / state_.sigma2_y;
    const Vector prec_eta = precision_ * eta;
    EtaDensity out;
    out.log_density = -0.5 * eta.dot(prec_eta) + eta.dot(linear_.col(i)) -
                      0.5 * residual * residual * inv_s2;
    out.gradient = -prec_eta + linear_.col(i) + (residual * inv_s2) * (slope + 2.0 * omega_eta);
    return out;
  }

  /// Gauss-Newton curvature at eta: the factor-model precision plus the
  /// outer product of the regression-mean gradient over sigma^2.
  Matrix metric(Index i, const Vector& eta) const {
    const Vector g = state_.omega + delta_z_.col(i) + 2.0 * (state_.Omega * eta);
    Matrix G = precision_;
    G.selfadjointView<Eigen::Lower>().rankUpdate(g, 1.0 / state_.sigma2_y);
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    return G;
  }

 private:
  const ModelState& state_;
  const Dataset& data_;
  Matrix precision_;  // Lambda' Psi^-1 Lambda + I
  Matrix linear_;     // k x n, columns Lambda' Psi^-1 x_i
  Vector offset_;     // Z alpha
  Matrix delta_z_;    // k x n, columns Delta z_i
};

inline EtaDensity eta_log_density_and_grad(const ModelState& s, const Dataset& data, Index i) {
  return EtaConditional(s, data).evaluate(i, s.eta.row(i).transpose());
}

namespace detail {

// Langevin proposal N(eta + step/2 G^-1 grad, step G^-1) around one point.
struct LangevinKernel {
  Vector mean;
  Eigen::LLT<Matrix> chol;  // of G
  double half_log_det = 0.0;

  LangevinKernel(const Vector& eta, const Vector& gradient, const Matrix& G, double step) : chol(G) {
    if (chol.info() != Eigen::Success) throw Error(ErrorKind::numerical, "MALA metric is not positive definite");
    mean = eta + 0.5 * step * chol.solve(gradient);
    half_log_det = chol.matrixLLT().diagonal().array().log().sum();
  }

  template <RandomGenerator G>
  Vector draw(double step, G& g) const {
    return mean + std::sqrt(step) * chol.matrixU().solve(sample_standard_normal(mean.size(), g));
  }

  double log_density(const Vector& x, double step) const {
    const Vector d = chol.matrixU() * (x - mean);
    return half_log_det - d.squaredNorm() / (2.0 * step);
  }
};

}  // namespace detail

/// One MALA proposal per row of eta, accepted with the asymmetric
/// Metropolis-Hastings ratio. With MalaMetric::identity the proposal is
/// N(eta + step/2 grad, step I); with gauss_newton the gradient and noise are
/// preconditioned by the local metric, evaluated afresh at the proposal for
/// the reverse move. Returns per-row acceptance flags.
inline std::vector<char> mala_update_eta(ModelState& s, const Dataset& data, double step,
                                         const SweepRng& rng, int threads = 1,
                                         MalaMetric metric = MalaMetric::identity) {
  require(step > 0.0, "mala_update_eta: step must be positive");
  const EtaConditional target(s, data);
  const Index k = s.eta.cols();
  const Matrix identity = Matrix::Identity(k, k);
  std::vector<char> accepted(static_cast<std::size_t>(data.n()), 0);
  Matrix next = s.eta;
  parallel_for(static_cast<std::size_t>(data.n()), threads, [&](std::size_t row) {
    const auto i = static_cast<Index>(row);
    RngStream stream = rng.stream(Block::eta, row);
    const auto local_metric = [&](const Vector& eta) {
      return metric == MalaMetric::identity ? identity : target.metric(i, eta);
    };
    const Vector current = s.eta.row(i).transpose();
    const EtaDensity here = target.evaluate(i, current);
    const detail::LangevinKernel forward(current, here.gradient, local_metric(current), step);
    const Vector proposal = forward.draw(step, stream);
    const EtaDensity there = target.evaluate(i, proposal);
    const detail::LangevinKernel backward(proposal, there.gradient, local_metric(proposal), step);
    const double log_ratio = there.log_density - here.log_density +
                             backward.log_density(current, step) - forward.log_density(proposal, step);
    if (std::isfinite(log_ratio) && std::log(stream.uniform()) < log_ratio) {
      next.row(i) = proposal.transpose();
      accepted[row] = 1;
    }
  });
  s.eta = std::move(next);
  return accepted;
}

/// omega | rest: conjugate normal with precision eta'eta / sigma^2 + I / v.
template <RandomGenerator G>
void gibbs_omega(ModelState& s, const Dataset& data, const Hyperparams& hyper, G& g) {
  const RegressionParts parts = regression_parts(s, data);
  const Vector residual = data.y - parts.quadratic - parts.covariates;
  const double inv_s2 = 1.0 / s.sigma2_y;
  Matrix precision = s.eta.transpose() * s.eta * inv_s2;
  precision.diagonal().array() += 1.0 / hyper.prior_var_coef;
  s.omega = sample_mvn_precision(s.eta.transpose() * residual * inv_s2, precision, g, "omega update");
}

/// Columns eta_h * eta_l for h <= l, in row-major upper-triangle order.
inline Matrix interaction_design(const Matrix& eta) {
  const Index k = eta.cols();
  Matrix design(eta.rows(), k * (k + 1) / 2);
  Index c = 0;
  for (Index h = 0; h < k; ++h)
    for (Index l = h; l < k; ++l) design.col(c++) = eta.col(h).cwiseProduct(eta.col(l));
  return design;
}

/// Omega | rest: conjugate normal on the k(k+1)/2 monomial coefficients
/// c_hl (h <= l) of eta_h eta_l, each with prior N(0, v). The symmetric
/// matrix gets Omega_hh = c_hh and Omega_hl = Omega_lh = c_hl / 2, so
/// eta' Omega eta reproduces the sampled regression function exactly.
template <RandomGenerator G>
void gibbs_Omega(ModelState& s, const Dataset& data, const Hyperparams& hyper, G& g) {
  const Index k = s.eta.cols();
  const RegressionParts parts = regression_parts(s, data);
  const Vector residual = data.y - parts.linear - parts.covariates;
  const Matrix design = interaction_design(s.eta);
  const double inv_s2 = 1.0 / s.sigma2_y;
  Matrix precision = design.transpose() * design * inv_s2;
  precision.diagonal().array() += 1.0 / hyper.prior_var_coef;
  const Vector c = sample_mvn_precision(design.transpose() * residual * inv_s2, precision, g,
                                        "Omega update");
  Index idx = 0;
  for (Index h = 0; h < k; ++h) {
    for (Index l = h; l < k; ++l) {
      const double v = c[idx++];
      if (h == l) {
        s.Omega(h, h) = v;
      } else {
        s.Omega(h, l) = 0.5 * v;
        s.Omega(l, h) = 0.5 * v;
      }
    }
  }
}

/// (alpha, Delta) | rest: joint conjugate normal for the design
/// [z_i, eta_i1 z_i, ..., eta_ik z_i]. No-op without covariates.
template <RandomGenerator G>
void gibbs_alpha_delta(ModelState& s, const Dataset& data, const Hyperparams& hyper, G& g) {
  if (!data.has_covariates()) return;
  const Index q = data.q();
  const Index k = s.eta.cols();
  Matrix design(data.n(), q * (k + 1));
  design.leftCols(q) = data.Z;
  for (Index h = 0; h < k; ++h)
    design.middleCols(q * (h + 1), q) = data.Z.array().colwise() * s.eta.col(h).array();
  const RegressionParts parts = regression_parts(s, data);
  const Vector residual = data.y - parts.linear - parts.quadratic;
  const double inv_s2 = 1.0 / s.sigma2_y;
  Matrix precision = design.transpose() * design * inv_s2;
  precision.diagonal().array() += 1.0 / hyper.prior_var_coef;
  const Vector c = sample_mvn_precision(design.transpose() * residual * inv_s2, precision, g,
                                        "alpha/Delta update");
  s.alpha = c.head(q);
  for (Index h = 0; h < k; ++h) s.Delta.row(h) = c.segment(q * (h + 1), q).transpose();
}

/// sigma^-2 | rest ~ Gamma(shape + n/2, rate + SSR/2).
template <RandomGenerator G>
void gibbs_sigma2(ModelState& s, const Dataset& data, const Hyperparams& hyper, G& g) {
  const Vector residual = data.y - regression_parts(s, data).total();
  const double shape = hyper.inv_gamma_shape + 0.5 * static_cast<double>(data.n());
  const double rate = hyper.inv_gamma_rate + 0.5 * residual.squaredNorm();
  s.sigma2_y = 1.0 / sample_gamma(shape, rate, g);
}

/// Rows of Lambda, each from its conjugate normal with prior covariance
/// diag(tau_j^2 psi_jh phi_jh^2). Masked entries stay at zero; the draw is
/// taken on the unmasked sub-vector only.
inline void gibbs_lambda_rows(ModelState& s, const Hyperparams& hyper, const SweepRng& rng,
                              int threads = 1) {
  const Index p = s.Lambda.rows();
  const auto active = detail::active_columns(hyper, p);
  const Matrix gram = s.eta.transpose() * s.eta;
  const Matrix cross = s.eta.transpose() * s.X;  // k x p
  parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t row) {
    const auto j = static_cast<Index>(row);
    const auto& cols = active[row];
    s.Lambda.row(j).setZero();
    if (cols.empty()) return;
    RngStream stream = rng.stream(Block::loadings, row);
    const Index m = static_cast<Index>(cols.size());
    const double inv_psi = 1.0 / s.psi_diag[j];
    Matrix precision(m, m);
    Vector linear(m);
    for (Index a = 0; a < m; ++a) {
      for (Index b = 0; b < m; ++b) precision(a, b) = gram(cols[a], cols[b]) * inv_psi;
      const double scale = s.tau[j] * s.phi(j, cols[a]);
      const double prior_var = std::clamp(scale * scale * s.psi_local(j, cols[a]), 1e-100, 1e100);
      precision(a, a) += 1.0 / prior_var;
      linear[a] = cross(cols[a], j) * inv_psi;
    }
    const Vector draw = sample_mvn_precision(linear, precision, stream, "Lambda row update");
    for (Index a = 0; a < m; ++a) s.Lambda(j, cols[a]) = draw[a];
  });
}

/// Dirichlet-Laplace scales for every row j given Lambda, drawn as one block
/// from their joint conditional: phi_j | lambda_j (via T_jh ~ GIG(a-1, 1, 2|lambda_jh|),
/// phi = T / sum T), then tau_j | phi_j, lambda_j ~ GIG(k_j (a-1), 1, 2 sum |lambda|/phi),
/// then psi_jh | tau, phi, lambda. k_j counts unmasked loadings of row j.
inline void dl_local_updates(ModelState& s, const Hyperparams& hyper, const SweepRng& rng,
                             int threads = 1) {
  const Index p = s.Lambda.rows();
  const auto active = detail::active_columns(hyper, p);
  const double a = hyper.dl_a;
  parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t row) {
    const auto j = static_cast<Index>(row);
    const auto& cols = active[row];
    if (cols.empty()) return;
    RngStream stream = rng.stream(Block::local_scales, row);
    const auto abs_loading = [&](Index h) { return std::max(std::abs(s.Lambda(j, h)), kLoadingFloor); };

    double total = 0.0;
    for (Index h : cols) {
      const double t = sample_gig(a - 1.0, 1.0, 2.0 * abs_loading(h), stream);
      s.phi(j, h) = t;
      total += t;
    }
    double weighted = 0.0;
    for (Index h : cols) {
      s.phi(j, h) = std::max(s.phi(j, h) / total, std::numeric_limits<double>::min());
      weighted += abs_loading(h) / s.phi(j, h);
    }

    const double kj = static_cast<double>(cols.size());
    s.tau[j] = sample_gig(kj * (a - 1.0), 1.0, std::min(2.0 * weighted, 1e300), stream);

    for (Index h : cols) {
      const double scale = s.tau[j] * s.phi(j, h);
      if (hyper.local_scale_update == LocalScaleUpdate::dirichlet_laplace) {
        s.psi_local(j, h) = 1.0 / sample_inverse_gaussian(scale / abs_loading(h), 1.0, stream);
      } else {
        s.psi_local(j, h) = sample_inverse_gaussian(scale, 1.0, stream);
      }
    }
  });
}

/// sigma_j^-2 | rest ~ Gamma(shape + n/2, rate + sum_i (X_ij - lambda_j' eta_i)^2 / 2).
inline void gibbs_psi(ModelState& s, const Hyperparams& hyper, const SweepRng& rng,
                      int threads = 1) {
  const Index p = s.Lambda.rows();
  const double shape = hyper.inv_gamma_shape + 0.5 * static_cast<double>(s.X.rows());
  parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t row) {
    const auto j = static_cast<Index>(row);
    RngStream stream = rng.stream(Block::noise, row);
    const double ssr = (s.X.col(j) - s.eta * s.Lambda.row(j).transpose()).squaredNorm();
    s.psi_diag[j] = 1.0 / sample_gamma(shape, hyper.inv_gamma_rate + 0.5 * ssr, stream);
  });
}

/// Missing cells ~ N(lambda_j' eta_i, sigma_j^2); below-LOD cells from the
/// same normal truncated to (-inf, lod_j]. Observed cells are untouched.
inline void impute_missing_and_lod(ModelState& s, const Dataset& data, const SweepRng& rng,
                                   int threads = 1) {
  const Index p = data.p();
  parallel_for(static_cast<std::size_t>(data.n()), threads, [&](std::size_t row) {
    const auto i = static_cast<Index>(row);
    std::optional<RngStream> stream;
    for (Index j = 0; j < p; ++j) {
      const EntryStatus status = data.status(i, j);
      if (status == EntryStatus::observed) continue;
      if (!stream) stream.emplace(rng.stream(Block::impute, row));
      const double mean = s.Lambda.row(j).dot(s.eta.row(i));
      if (status == EntryStatus::missing) {
        s.X(i, j) = mean + std::sqrt(s.psi_diag[j]) * stream->normal();
      } else {
        s.X(i, j) = sample_truncated_normal(mean, s.psi_diag[j],
                                            -std::numeric_limits<double>::infinity(),
                                            data.lod[j], *stream);
      }
    }
  });
}

/// Throws if any structural invariant of the state is violated.
inline void check_state(const ModelState& s, const Dataset& data, const Hyperparams& hyper) {
  const auto fail = [](const std::string& what) {
    throw Error(ErrorKind::numerical, "state invariant violated: " + what);
  };
  const Index p = s.Lambda.rows();
  const auto active = detail::active_columns(hyper, p);
  for (Index j = 0; j < p; ++j) {
    const auto& cols = active[static_cast<std::size_t>(j)];
    if (!cols.empty()) {
      double total = 0.0;
      for (Index h : cols) total += s.phi(j, h);
      if (std::abs(total - 1.0) > 1e-10) fail("phi row off the simplex");
    }
    if (!(s.tau[j] > 0.0)) fail("tau not positive");
    if (!(s.psi_diag[j] > 0.0)) fail("Psi entry not positive");
    for (Index h = 0; h < s.Lambda.cols(); ++h) {
      if (hyper.loading_mask && (*hyper.loading_mask)(j, h) && s.Lambda(j, h) != 0.0)
        fail("masked loading is nonzero");
      if (!(s.psi_local(j, h) > 0.0)) fail("psi_local not positive");
    }
  }
  if (!(s.sigma2_y > 0.0)) fail("sigma^2 not positive");
  if ((s.Omega - s.Omega.transpose()).cwiseAbs().maxCoeff() > 1e-12) fail("Omega not symmetric");
  for (Index i = 0; i < data.n(); ++i)
    for (Index j = 0; j < p; ++j) {
      const EntryStatus st = data.status(i, j);
      if (st == EntryStatus::observed && s.X(i, j) != data.X(i, j)) fail("observed cell changed");
      if (st == EntryStatus::below_lod && !(s.X(i, j) <= data.lod[j])) fail("below-LOD cell above limit");
    }
  if (!s.eta.allFinite() || !s.Lambda.allFinite() || !s.X.allFinite()) fail("non-finite entries");
}

/// Starting point: principal components of the (crudely filled) exposures.
inline ModelState initial_state(const Dataset& data, const Hyperparams& hyper) {
  const Index n = data.n();
  const Index p = data.p();
  const Index k = hyper.k;
  RngStream rng(hyper.seed, stream_key(0, static_cast<std::uint64_t>(Block::init), 0));

  ModelState s;
  s.X = data.X;
  for (Index j = 0; j < p; ++j) {
    double sum = 0.0, sq = 0.0;
    Index count = 0;
    for (Index i = 0; i < n; ++i)
      if (data.status(i, j) == EntryStatus::observed) {
        sum += data.X(i, j);
        sq += data.X(i, j) * data.X(i, j);
        ++count;
      }
    const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    const double sd = count > 1 ? std::sqrt(std::max(sq / static_cast<double>(count) - mean * mean, 1e-8)) : 1.0;
    for (Index i = 0; i < n; ++i) {
      if (data.status(i, j) == EntryStatus::missing) s.X(i, j) = mean;
      if (data.status(i, j) == EntryStatus::below_lod) s.X(i, j) = data.lod[j] - 0.5 * sd;
    }
  }

  s.eta = Matrix::Zero(n, k);
  s.Lambda = Matrix::Zero(p, k);
  Eigen::BDCSVD<Matrix> svd(s.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index rank = std::min<Index>({k, n, p});
  const double root_n = std::sqrt(static_cast<double>(n));
  for (Index h = 0; h < rank; ++h) {
    s.eta.col(h) = root_n * svd.matrixU().col(h);
    s.Lambda.col(h) = svd.matrixV().col(h) * svd.singularValues()[h] / root_n;
  }
  for (Index h = rank; h < k; ++h)
    for (Index i = 0; i < n; ++i) s.eta(i, h) = rng.normal();
  if (hyper.loading_mask) apply_mask(s.Lambda, *hyper.loading_mask);

  s.psi_diag.resize(p);
  for (Index j = 0; j < p; ++j) {
    const double resid = (s.X.col(j) - s.eta * s.Lambda.row(j).transpose()).squaredNorm();
    const double total = (s.X.col(j).array() - s.X.col(j).mean()).matrix().squaredNorm();
    s.psi_diag[j] = std::max(resid, 0.05 * total) / static_cast<double>(n);
    if (!(s.psi_diag[j] > 0.0)) s.psi_diag[j] = 1.0;
  }

  s.omega = Vector::Zero(k);
  s.Omega = Matrix::Zero(k, k);
  s.alpha = Vector::Zero(data.q());
  s.Delta = Matrix::Zero(k, data.q());
  const double y_var = (data.y.array() - data.y.mean()).matrix().squaredNorm() / static_cast<double>(n);
  s.sigma2_y = y_var > 0.0 ? y_var : 1.0;

  s.phi = Matrix::Zero(p, k);
  const auto active = detail::active_columns(hyper, p);
  for (Index j = 0; j < p; ++j) {
    const auto& cols = active[static_cast<std::size_t>(j)];
    for (Index h : cols) s.phi(j, h) = 1.0 / static_cast<double>(cols.size());
    if (cols.empty()) s.phi.row(j).setConstant(1.0 / static_cast<double>(k));
  }
  s.tau = Vector::Ones(p);
  s.psi_local = Matrix::Ones(p, k);
  return s;
}

/// Draws every parameter and eta from the prior. X holds Lambda eta plus noise
/// in every cell and y is left to the caller (see simulate_observations).
template <RandomGenerator G>
ModelState draw_from_prior(const Dataset& shape, const Hyperparams& hyper, G& g) {
  const Index n = shape.n();
  const Index p = shape.p();
  const Index q = shape.q();
  const Index k = hyper.k;
  const double coef_sd = std::sqrt(hyper.prior_var_coef);
  ModelState s;
  s.eta = Matrix(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index h = 0; h < k; ++h) s.eta(i, h) = sample_normal(g);
  s.omega = coef_sd * sample_standard_normal(k, g);
  s.Omega = Matrix::Zero(k, k);
  for (Index h = 0; h < k; ++h)
    for (Index l = h; l < k; ++l) {
      const double c = coef_sd * sample_normal(g);
      if (h == l) {
        s.Omega(h, h) = c;
      } else {
        s.Omega(h, l) = s.Omega(l, h) = 0.5 * c;
      }
    }
  s.alpha = coef_sd * sample_standard_normal(q, g);
  s.Delta = Matrix(k, q);
  for (Index h = 0; h < k; ++h)
    for (Index c = 0; c < q; ++c) s.Delta(h, c) = coef_sd * sample_normal(g);
  s.sigma2_y = 1.0 / sample_gamma(hyper.inv_gamma_shape, hyper.inv_gamma_rate, g);

  const auto active = detail::active_columns(hyper, p);
  s.Lambda = Matrix::Zero(p, k);
  s.phi = Matrix::Zero(p, k);
  s.tau = Vector::Ones(p);
  s.psi_local = Matrix::Ones(p, k);
  s.psi_diag.resize(p);
  for (Index j = 0; j < p; ++j) {
    const auto& cols = active[static_cast<std::size_t>(j)];
    if (cols.empty()) {
      s.phi.row(j).setConstant(1.0 / static_cast<double>(k));
    } else {
      const Index kj = static_cast<Index>(cols.size());
      const Vector phi = sample_dirichlet(hyper.dl_a, kj, g);
      s.tau[j] = sample_gamma(static_cast<double>(kj) * hyper.dl_a, 0.5, g);
      for (Index a = 0; a < kj; ++a) {
        const Index h = cols[static_cast<std::size_t>(a)];
        s.phi(j, h) = phi[a];
        s.psi_local(j, h) = sample_gamma(1.0, 0.5, g);  // Exp(rate 1/2)
        const double scale = s.tau[j] * phi[a];
        s.Lambda(j, h) = scale * std::sqrt(s.psi_local(j, h)) * sample_normal(g);
      }
    }
    s.psi_diag[j] = 1.0 / sample_gamma(hyper.inv_gamma_shape, hyper.inv_gamma_rate, g);
  }
  s.X = s.eta * s.Lambda.transpose();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) s.X(i, j) += std::sqrt(s.psi_diag[j]) * sample_normal(g);
  return s;
}

/// Regenerates the observed data from the model given the state: y from the
/// response equation and every observed X cell from Lambda eta + noise.
/// Unobserved cells of state.X are left as they are.
template <RandomGenerator G>
void simulate_observations(ModelState& s, Dataset& data, G& g) {
  const Vector mean = regression_parts(s, data).total();
  const double sd = std::sqrt(s.sigma2_y);
  for (Index i = 0; i < data.n(); ++i) data.y[i] = mean[i] + sd * sample_normal(g);
  for (Index i = 0; i < data.n(); ++i)
    for (Index j = 0; j < data.p(); ++j) {
      if (data.status(i, j) != EntryStatus::observed) continue;
      const double v = s.Lambda.row(j).dot(s.eta.row(i)) + std::sqrt(s.psi_diag[j]) * sample_normal(g);
      data.X(i, j) = v;
      s.X(i, j) = v;
    }
}

struct SweepStats {
  double accept_rate = 0.0;
};

/// One full pass over every block with a fixed MALA step.
inline SweepStats sweep(ModelState& s, const Dataset& data, const Hyperparams& hyper,
                        std::uint64_t sweep_index, double step) {
  const SweepRng rng{hyper.seed, sweep_index};
  const int threads = hyper.n_threads;
  SweepStats stats;

  const auto accepted = mala_update_eta(s, data, step, rng, threads, hyper.mala_metric);
  stats.accept_rate = static_cast<double>(std::count(accepted.begin(), accepted.end(), 1)) /
                      static_cast<double>(accepted.size());
  detail::ensure_finite(s.eta.allFinite(), "eta", sweep_index);

  RngStream omega_rng = rng.stream(Block::omega);
  gibbs_omega(s, data, hyper, omega_rng);
  detail::ensure_finite(s.omega.allFinite(), "omega", sweep_index);

  RngStream Omega_rng = rng.stream(Block::Omega);
  gibbs_Omega(s, data, hyper, Omega_rng);
  detail::ensure_finite(s.Omega.allFinite(), "Omega", sweep_index);

  RngStream cov_rng = rng.stream(Block::covariates);
  gibbs_alpha_delta(s, data, hyper, cov_rng);
  detail::ensure_finite(s.alpha.allFinite() && s.Delta.allFinite(), "alpha/Delta", sweep_index);

  RngStream sigma_rng = rng.stream(Block::sigma2);
  gibbs_sigma2(s, data, hyper, sigma_rng);
  detail::ensure_finite(std::isfinite(s.sigma2_y), "sigma2", sweep_index);

  gibbs_lambda_rows(s, hyper, rng, threads);
  detail::ensure_finite(s.Lambda.allFinite(), "Lambda", sweep_index);

  dl_local_updates(s, hyper, rng, threads);
  detail::ensure_finite(s.phi.allFinite() && s.tau.allFinite() && s.psi_local.allFinite(),
                        "local scales", sweep_index);

  gibbs_psi(s, hyper, rng, threads);
  detail::ensure_finite(s.psi_diag.allFinite(), "Psi", sweep_index);

  impute_missing_and_lod(s, data, rng, threads);
  detail::ensure_finite(s.X.allFinite(), "imputation", sweep_index);

  if (hyper.check_invariants) check_state(s, data, hyper);
  return stats;
}

/// Dual averaging (Nesterov; Hoffman & Gelman) on log step size.
class StepSizeAdapter {
 public:
  StepSizeAdapter(double initial_step, double target)
      : mu_(std::log(10.0 * initial_step)), target_(target), log_step_(std::log(initial_step)) {}

  /// Feeds one acceptance statistic; returns the step to use next.
  double update(double accept_rate) {
    ++t_;
    const double t = static_cast<double>(t_);
    const double w = 1.0 / (t + kT0);
    h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept_rate);
    log_step_ = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double eta = std::pow(t, -kKappa);
    log_step_bar_ = eta * log_step_ + (1.0 - eta) * log_step_bar_;
    return std::exp(log_step_);
  }

  /// Averaged step, used once adaptation ends.
  double final_step() const { return t_ == 0 ? std::exp(log_step_) : std::exp(log_step_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;

  double mu_;
  double target_;
  double log_step_;
  double log_step_bar_ = 0.0;
  double h_bar_ = 0.0;
  long t_ = 0;
};

/// Held-out exposures (complete) and optional covariates for prediction.
struct PredictionInputs {
  Matrix X;
  Matrix Z;
};

struct ChainOutput {
  std::vector<InducedCoefficients> induced_draws;
  std::vector<Vector> alpha_draws;
  std::vector<double> sigma2_draws;
  std::vector<Matrix> loading_draws;  ///< only with keep_loadings; rotation-ambiguous
  double accept_rate_eta = 0.0;       ///< after burn-in
  double step_size = 0.0;             ///< frozen MALA step
  Matrix predictive_draws;            ///< n_test x n_kept draws of y_new
  Vector predictive_mean;             ///< posterior mean of E[y_new | x_new]
  Vector ess_main;                    ///< ESS of each induced main effect
  std::uint64_t seed = 0;

  Index n_kept() const { return static_cast<Index>(induced_draws.size()); }
};

inline Vector ess_of_main_effects(const std::vector<InducedCoefficients>& draws) {
  if (draws.size() < 10) return Vector();
  const Index p = draws.front().beta_X.size();
  Vector ess(p);
  std::vector<double> trace(draws.size());
  for (Index j = 0; j < p; ++j) {
    for (std::size_t t = 0; t < draws.size(); ++t) trace[t] = draws[t].beta_X[j];
    ess[j] = effective_sample_size(trace).ess;
  }
  return ess;
}

/// Runs one chain: n_iter sweeps, the first n_burn discarded (and used for
/// step adaptation), induced coefficients recorded at every kept sweep.
inline ChainOutput run_chain(const Dataset& data, const Hyperparams& hyper,
                             const PredictionInputs* test = nullptr) {
  data.validate();
  hyper.validate(data.p());
  if (test) {
    require(test->X.cols() == data.p() && test->X.allFinite(), "run_chain: test X must be complete with p columns");
    require(test->Z.cols() == data.q() && (data.q() == 0 || test->Z.rows() == test->X.rows()),
            "run_chain: test covariates must match the training covariates");
  }

  ModelState s = initial_state(data, hyper);
  StepSizeAdapter adapter(hyper.mala_step, hyper.mala_target_accept);
  double step = hyper.mala_step;
  ChainOutput out;
  out.seed = hyper.seed;
  const Index n_kept = hyper.n_iter - hyper.n_burn;
  out.induced_draws.reserve(static_cast<std::size_t>(n_kept));
  if (test) out.predictive_draws.resize(test->X.rows(), n_kept);
  if (test) out.predictive_mean = Vector::Zero(test->X.rows());
  double accepted_after_burn = 0.0;

  for (int it = 0; it < hyper.n_iter; ++it) {
    const auto sweep_index = static_cast<std::uint64_t>(it + 1);
    const SweepStats stats = sweep(s, data, hyper, sweep_index, step);
    if (it < hyper.n_burn) {
      if (hyper.adapt_step) {
        step = adapter.update(stats.accept_rate);
        if (it + 1 == hyper.n_burn) step = adapter.final_step();
      }
      continue;
    }
    accepted_after_burn += stats.accept_rate;

    const FactorPosteriorMoments moments = factor_posterior_moments(s.Lambda, s.psi_diag);
    InducedCoefficients induced = induced_coefficients(moments, s.coefficients());
    if (test) {
      const Index kept = it - hyper.n_burn;
      RngStream pred_rng = SweepRng{hyper.seed, sweep_index}.stream(Block::predict);
      const Eigen::LLT<Matrix> v_chol(moments.V);
      const Matrix L = v_chol.matrixL();
      const double sd = std::sqrt(s.sigma2_y);
      for (Index i = 0; i < test->X.rows(); ++i) {
        const Vector x = test->X.row(i).transpose();
        double offset = 0.0;
        Vector slope = s.omega;
        if (data.has_covariates()) {
          const Vector z = test->Z.row(i).transpose();
          offset = z.dot(s.alpha);
          slope += s.Delta * z;
          out.predictive_mean[i] += x.dot(induced.covariate_int * z);
        }
        const Vector eta = moments.A * x + L * sample_standard_normal(s.eta.cols(), pred_rng);
        out.predictive_draws(i, kept) =
            eta.dot(slope) + eta.dot(s.Omega * eta) + offset + sd * pred_rng.normal();
        out.predictive_mean[i] += induced.conditional_mean(x) + offset;
      }
    }
    out.induced_draws.push_back(std::move(induced));
    out.alpha_draws.push_back(s.alpha);
    out.sigma2_draws.push_back(s.sigma2_y);
    if (hyper.keep_loadings) out.loading_draws.push_back(s.Lambda);
  }
  out.accept_rate_eta = accepted_after_burn / static_cast<double>(n_kept);
  out.step_size = step;
  if (test) out.predictive_mean /= static_cast<double>(n_kept);
  out.ess_main = ess_of_main_effects(out.induced_draws);
  return out;
}

}  // namespace fin
