#pragma once

#include "hmc_lab/core.hpp"
#include "hmc_lab/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hmc_lab {

struct ChainSummary {
  std::size_t n = 0;
  double acceptance_rate = 0.0;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> tau;  // integrated autocorrelation time per coordinate
  std::vector<double> ess;

  double min_ess() const { return ess.empty() ? 0.0 : *std::min_element(ess.begin(), ess.end()); }
};

/// Geyer's initial positive sequence: tau = -1 + 2 sum_k (rho_2k + rho_2k+1)
/// over the leading pairs with positive sum, floored at 1.
inline double integrated_autocorr_time(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 10) throw InsufficientDataError("autocorrelation needs at least 10 samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return 1.0;
  double sum = 0.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (!(pair > 0.0)) break;
    sum += pair;
  }
  return std::max(1.0, -1.0 + 2.0 * sum);
}

inline ChainSummary chain_diagnostics(const ChainRun& run) {
  const std::size_t n = run.size();
  if (n < 10) throw InsufficientDataError("chain_diagnostics: run has " + std::to_string(n) +
                                          " samples, at least 10 required");
  ChainSummary out;
  out.n = n;
  out.acceptance_rate = run.acceptance_rate();
  const Eigen::Index d = run.samples.front().size();
  std::vector<double> coord(n);
  for (Eigen::Index j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      coord[i] = run.samples[i][j];
      m += coord[i];
    }
    m /= static_cast<double>(n);
    double v = 0.0;
    for (double c : coord) v += (c - m) * (c - m);
    v /= static_cast<double>(n - 1);
    const double tau = integrated_autocorr_time(coord);
    out.mean.push_back(m);
    out.variance.push_back(v);
    out.tau.push_back(tau);
    out.ess.push_back(static_cast<double>(n) / tau);
  }
  return out;
}

}  // namespace hmc_lab
