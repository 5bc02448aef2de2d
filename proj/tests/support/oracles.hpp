#pragma once

// Test-only statistical oracles. Independent of the library's diagnostics.

#include "hmc_lab/potential.hpp"
#include "hmc_lab/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

namespace hmc_lab::testing {

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Asymptotic Kolmogorov survival function with Stephens' small-n correction.
inline double kolmogorov_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic;
  double pvalue;
};

/// One-sample KS test of `xs` against a continuous CDF.
inline KsResult ks_test(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max(d, std::max((i + 1) / n - f, f - i / n));
  }
  return {d, kolmogorov_pvalue(d, xs.size())};
}

/// Chi-square goodness of fit of `xs` to N(mean, sd^2) with `bins`
/// equiprobable cells.
inline double chi_square_normal_pvalue(const std::vector<double>& xs, double mean, double sd,
                                       int bins) {
  boost::math::normal_distribution<> nd(mean, sd);
  std::vector<double> edges;
  for (int i = 1; i < bins; ++i) edges.push_back(boost::math::quantile(nd, double(i) / bins));
  std::vector<double> counts(bins, 0.0);
  for (double x : xs) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    counts[static_cast<std::size_t>(it - edges.begin())] += 1.0;
  }
  const double expected = static_cast<double>(xs.size()) / bins;
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared_distribution<> chi(bins - 1);
  return boost::math::cdf(boost::math::complement(chi, stat));
}

/// Wraps a model and counts gradient evaluations.
struct CountingModel {
  PotentialModel model;
  std::shared_ptr<std::atomic<long>> grad_calls = std::make_shared<std::atomic<long>>(0);

  explicit CountingModel(PotentialModel inner) : model(inner) {
    auto counter = grad_calls;
    auto g = inner.grad;
    model.grad = [counter, g](const Vector& q) {
      ++*counter;
      return g(q);
    };
  }
};

inline std::vector<PotentialModel> all_families(int dim) {
  return {
      build_family({GaussianFamily{}, dim}),
      build_family({PowerFamily{1.0, 0.75}, dim}),
      build_family({HomogeneousPerturbedFamily{1.5, 0.5, 5.0}, dim}),
      build_family({DoubleWellFamily{1.0}, dim}),
  };
}

}  // namespace hmc_lab::testing
