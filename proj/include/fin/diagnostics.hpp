#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "fin/errors.hpp"

namespace fin {

inline double mean_of(std::span<const double> x) {
  require(!x.empty(), "mean_of: empty sequence");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance with denominator n - 1.
inline double variance_of(std::span<const double> x) {
  require(x.size() >= 2, "variance_of: need at least two values");
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

/// Linear-interpolation quantile (R type 7) of an unsorted sequence.
inline double quantile(std::span<const double> x, double prob) {
  require(!x.empty(), "quantile: empty sequence");
  require(prob >= 0.0 && prob <= 1.0, "quantile: probability must lie in [0, 1]");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Equal-tailed interval covering `level` of the mass.
struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double v) const { return lower <= v && v <= upper; }
};

inline Interval equal_tailed_interval(std::span<const double> x, double level) {
  require(level > 0.0 && level < 1.0, "equal_tailed_interval: level must lie in (0, 1)");
  const double tail = 0.5 * (1.0 - level);
  return {quantile(x, tail), quantile(x, 1.0 - tail)};
}

/// Autocorrelations rho_0..rho_max_lag (biased estimator, denominator n).
inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  const double m = mean_of(x);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = x[i] - m;
  double c0 = 0.0;
  for (double v : centered) c0 += v * v;
  std::vector<double> rho(std::min(max_lag, n - 1) + 1, 0.0);
  if (c0 <= 0.0) return rho;
  for (std::size_t lag = 0; lag < rho.size(); ++lag) {
    double c = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) c += centered[i] * centered[i + lag];
    rho[lag] = c / c0;
  }
  return rho;
}

struct EssResult {
  double ess = 0.0;
  bool degenerate = false;  ///< constant sequence; ess reported as the draw count
};

/// Effective sample size using Geyer's initial monotone sequence estimator:
/// sums of adjacent autocorrelation pairs are truncated at the first
/// non-positive pair and forced to be non-increasing.
inline EssResult effective_sample_size(std::span<const double> draws) {
  require(draws.size() >= 10, "effective_sample_size: need at least 10 draws");
  const std::size_t n = draws.size();
  const auto [lo, hi] = std::minmax_element(draws.begin(), draws.end());
  if (*lo == *hi) return {static_cast<double>(n), true};

  const double m = mean_of(draws);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = draws[i] - m;
  double c0 = 0.0;
  for (double v : centered) c0 += v * v;
  const auto rho = [&](std::size_t lag) {
    double c = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) c += centered[i] * centered[i + lag];
    return c / c0;
  };

  double tau = -1.0;  // tau = -1 + 2 sum_m Gamma_m, Gamma_m = rho_2m + rho_2m+1
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m2 = 0; m2 + 1 < n; m2 += 2) {
    double pair = (m2 == 0 ? 1.0 : rho(m2)) + rho(m2 + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    previous = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return {static_cast<double>(n) / tau, false};
}

/// Monte Carlo standard error of the mean from non-overlapping batch means.
inline double batch_means_se(std::span<const double> x, std::size_t n_batches = 50) {
  require(x.size() >= 2 * n_batches, "batch_means_se: sequence too short");
  const std::size_t size = x.size() / n_batches;
  std::vector<double> means(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b)
    means[b] = mean_of(x.subspan(b * size, size));
  return std::sqrt(variance_of(means) / static_cast<double>(n_batches));
}

}  // namespace fin
