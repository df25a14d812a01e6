#pragma once

// Column standardization of (y, X) and the map of induced coefficients back
// to the original scale. With x~ = D^-1 (x - m) and y~ = (y - m_y) / s_y, a
// fit y~ = c + b' x~ + x~' W x~ becomes
//   y = m_y + s_y c - s_y b' D^-1 m + m' Om m + (s_y D^-1 b - 2 Om m)' x + x' Om x
// with Om = s_y D^-1 W D^-1.

#include <cmath>
#include <limits>

#include "fin/errors.hpp"
#include "fin/model.hpp"

namespace fin {

struct Standardization {
  Vector x_mean;
  Vector x_sd;
  double y_mean = 0.0;
  double y_sd = 1.0;

  static Standardization identity(Index p) {
    return {Vector::Zero(p), Vector::Ones(p), 0.0, 1.0};
  }

  double response(double y) const { return (y - y_mean) / y_sd; }
  double original_response(double y) const { return y_mean + y_sd * y; }
  double predictor(Index j, double x) const { return (x - x_mean[j]) / x_sd[j]; }

  Matrix predictors(const Matrix& X) const {
    return (X.rowwise() - x_mean.transpose()).array().rowwise() / x_sd.transpose().array();
  }

  /// Maps coefficients fitted on the standardized scale to the original one.
  /// Covariate interactions are scaled by s_y / s_x; covariates themselves
  /// are not transformed.
  InducedCoefficients to_original(const InducedCoefficients& c) const {
    const Vector inv_sd = x_sd.cwiseInverse();
    InducedCoefficients out;
    out.Omega_X = y_sd * inv_sd.asDiagonal() * c.Omega_X * inv_sd.asDiagonal();
    out.Omega_X = 0.5 * (out.Omega_X + out.Omega_X.transpose()).eval();
    const Vector scaled_beta = y_sd * inv_sd.cwiseProduct(c.beta_X);
    out.beta_X = scaled_beta - 2.0 * out.Omega_X * x_mean;
    out.intercept = y_mean + y_sd * c.intercept - scaled_beta.dot(x_mean) +
                    x_mean.dot(out.Omega_X * x_mean);
    if (c.covariate_int.size() > 0) out.covariate_int = y_sd * inv_sd.asDiagonal() * c.covariate_int;
    return out;
  }
};

/// Column means and (n - 1) standard deviations over the finite entries of
/// each column; NaN marks entries to skip. Throws on a column without spread.
inline Standardization fit_standardization(const Vector& y, const Matrix& X_with_nan) {
  const Index p = X_with_nan.cols();
  Standardization s;
  s.x_mean.resize(p);
  s.x_sd.resize(p);
  for (Index j = 0; j < p; ++j) {
    double sum = 0.0, sq = 0.0;
    Index count = 0;
    for (Index i = 0; i < X_with_nan.rows(); ++i) {
      const double v = X_with_nan(i, j);
      if (!std::isfinite(v)) continue;
      sum += v;
      sq += v * v;
      ++count;
    }
    if (count < 2)
      throw Error(ErrorKind::data, "column " + std::to_string(j) + " has fewer than two observed values");
    const double mean = sum / static_cast<double>(count);
    const double var = (sq - static_cast<double>(count) * mean * mean) / static_cast<double>(count - 1);
    if (!(var > 0.0))
      throw Error(ErrorKind::data, "column " + std::to_string(j) + " has zero observed variance");
    s.x_mean[j] = mean;
    s.x_sd[j] = std::sqrt(var);
  }
  const Index n = y.size();
  require(n >= 2, "fit_standardization: need at least two responses");
  s.y_mean = y.mean();
  const double y_var = (y.array() - s.y_mean).square().sum() / static_cast<double>(n - 1);
  if (!(y_var > 0.0)) throw Error(ErrorKind::data, "response has zero variance");
  s.y_sd = std::sqrt(y_var);
  return s;
}

}  // namespace fin
