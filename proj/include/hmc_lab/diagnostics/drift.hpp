#pragma once

// Foster-Lyapunov drift of V_a(q) = exp(a |q|) under the pre-acceptance
// proposal kernel, and the mass of the rejection region intersected with
// the V_a sublevel set.

#include "hmc_lab/core.hpp"
#include "hmc_lab/diagnostics/horizon.hpp"
#include "hmc_lab/integrator.hpp"
#include "hmc_lab/parallel.hpp"
#include "hmc_lab/potential.hpp"
#include "hmc_lab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace hmc_lab {

inline std::vector<double> default_a_grid() { return {0.01, 0.05, 0.1, 0.5, 1.0}; }

inline constexpr const char* kDriftKernelNote =
    "ratios use the proposal kernel (before the accept/reject step)";

struct DriftPoint {
  double radius = 0.0;
  double ratio = 0.0;      // estimate of E V_a(q_T) / V_a(q0)
  double stderr_ = 0.0;
  double log_ratio = 0.0;
  int n_pairs = 0;         // antithetic momentum pairs used
  int n_errors = 0;
  bool ok = true;          // false when the estimate overflowed
};

struct DriftReport {
  double a = 0.0;
  std::vector<double> radii;
  std::vector<DriftPoint> points;
  double lambda_hat = 0.0;
  double b_hat = 0.0;

  const DriftPoint& largest() const { return points.back(); }
};

struct DriftScan {
  LeapfrogConfig cfg;
  std::uint64_t seed = 0;
  int n_momenta = 0;
  std::vector<DriftReport> reports;  // one per a, in grid order
  std::size_t best = 0;              // smallest ratio at the largest radius
  std::string note = kDriftKernelNote;

  const DriftReport& best_report() const { return reports.at(best); }
  bool drift_detected() const { return best_report().largest().ratio < 1.0; }
};

namespace detail {

struct PairSample {
  double plus = 0.0;   // |q_T| - |q0| for momentum p
  double minus = 0.0;  // and for -p
};

// Antithetic (p, -p) displacement samples at radius r.
inline std::vector<PairSample> drift_samples(const PotentialModel& model, const LeapfrogConfig& cfg,
                                             double r, int n_pairs, std::uint64_t root,
                                             Parallelism par, int& n_errors) {
  const int d = model.dim;
  const ChunkPlan plan{static_cast<std::size_t>(n_pairs), kMonteCarloChunk};
  struct Part {
    std::vector<PairSample> samples;
    int errors = 0;
  };
  auto parts = map_chunks(plan.count(), par, [&](std::size_t c) {
    Part part;
    Stream rng = split(root, c);
    for (std::size_t i = plan.begin(c); i < plan.end(c); ++i) {
      const Vector q0 = r * rng.unit_vector(d);
      const Vector p = rng.normal_vector(d);
      try {
        const double r0 = q0.norm();
        const double a = leapfrog_final(model, {q0, p}, cfg).q.norm() - r0;
        const double b = leapfrog_final(model, {q0, -p}, cfg).q.norm() - r0;
        if (!std::isfinite(a) || !std::isfinite(b)) throw NumericError("non-finite position");
        part.samples.push_back({a, b});
      } catch (const NumericError&) {
        ++part.errors;
      }
    }
    return part;
  });
  std::vector<PairSample> out;
  n_errors = 0;
  for (auto& part : parts) {
    out.insert(out.end(), part.samples.begin(), part.samples.end());
    n_errors += part.errors;
  }
  return out;
}

// Mean and standard error of (exp(a l+) + exp(a l-)) / 2 in log domain.
inline DriftPoint drift_point(double a, double r, const std::vector<PairSample>& xs, int errors) {
  DriftPoint pt;
  pt.radius = r;
  pt.n_pairs = static_cast<int>(xs.size());
  pt.n_errors = errors;
  if (xs.empty()) {
    pt.ok = false;
    pt.ratio = pt.stderr_ = pt.log_ratio = std::numeric_limits<double>::quiet_NaN();
    return pt;
  }
  double shift = -std::numeric_limits<double>::infinity();
  for (const auto& x : xs) shift = std::max({shift, a * x.plus, a * x.minus});
  const double n = static_cast<double>(xs.size());
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& x : xs) {
    const double y = 0.5 * (std::exp(a * x.plus - shift) + std::exp(a * x.minus - shift));
    sum += y;
    sum_sq += y * y;
  }
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
  pt.log_ratio = shift + std::log(mean);
  pt.ratio = std::exp(pt.log_ratio);
  pt.stderr_ = std::exp(shift) * std::sqrt(var / n);
  pt.ok = std::isfinite(pt.ratio) && std::isfinite(pt.stderr_);
  return pt;
}

// Least squares for ratio(r) ~ lambda + b exp(-a r), both clamped >= 0.
inline void fit_drift_bound(DriftReport& rep) {
  std::vector<double> x, y;
  for (const auto& pt : rep.points) {
    if (!pt.ok) continue;
    x.push_back(std::exp(-rep.a * pt.radius));
    y.push_back(pt.ratio);
  }
  if (y.empty()) {
    rep.lambda_hat = rep.b_hat = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const double n = static_cast<double>(y.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  double b = sxx > 0.0 ? sxy / sxx : 0.0;
  double lambda = my - b * mx;
  if (b < 0.0) {
    b = 0.0;
    lambda = my;
  }
  if (lambda < 0.0) {
    double s_xx = 0.0, s_xy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      s_xx += x[i] * x[i];
      s_xy += x[i] * y[i];
    }
    lambda = 0.0;
    b = s_xx > 0.0 ? std::max(0.0, s_xy / s_xx) : 0.0;
  }
  rep.lambda_hat = lambda;
  rep.b_hat = b;
}

inline void check_drift_inputs(const LeapfrogConfig& cfg, const std::vector<double>& a_grid,
                               const std::vector<double>& radii, int n_momenta) {
  cfg.validate();
  if (a_grid.empty()) throw ConfigError("drift.a_grid must be nonempty");
  for (double a : a_grid)
    if (!(a > 0.0)) throw ConfigError("drift.a_grid entries must be > 0");
  check_increasing(radii, "drift");
  if (n_momenta < 2) throw ConfigError("drift.n_momenta must be >= 2");
}

}  // namespace detail

/// Momenta are drawn in antithetic pairs (p, -p), so n_momenta / 2 pairs are
/// used per radius. The same draws serve every a in the grid.
inline DriftScan drift_estimate(const PotentialModel& model, const LeapfrogConfig& cfg,
                                const std::vector<double>& a_grid,
                                const std::vector<double>& radii, int n_momenta,
                                std::uint64_t seed, Parallelism par = {}) {
  detail::check_drift_inputs(cfg, a_grid, radii, n_momenta);
  DriftScan scan;
  scan.cfg = cfg;
  scan.seed = seed;
  scan.n_momenta = n_momenta;
  for (double a : a_grid) scan.reports.push_back({a, radii, {}, 0.0, 0.0});

  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    int errors = 0;
    const auto xs = detail::drift_samples(model, cfg, radii[ri], n_momenta / 2,
                                          derive_seed(seed, ri), par, errors);
    for (auto& rep : scan.reports) rep.points.push_back(detail::drift_point(rep.a, radii[ri], xs, errors));
  }
  for (auto& rep : scan.reports) detail::fit_drift_bound(rep);

  double best_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scan.reports.size(); ++i) {
    const auto& pt = scan.reports[i].largest();
    if (pt.ok && pt.ratio < best_ratio) {
      best_ratio = pt.ratio;
      scan.best = i;
    }
  }
  return scan;
}

struct RejectionMassPoint {
  double radius = 0.0;
  double mass = 0.0;
  double stderr_ = 0.0;
  int n = 0;
  int n_errors = 0;
};

/// Fraction of proposals with dH > 0 that land in {V_a(q_T) <= V_a(q0)}.
/// V_a is increasing in |q| for a > 0, so the sublevel set is |q_T| <= |q0|.
inline std::vector<RejectionMassPoint> rejection_mass(const PotentialModel& model,
                                                      const LeapfrogConfig& cfg, double a,
                                                      const std::vector<double>& radii,
                                                      int n_momenta, std::uint64_t seed,
                                                      Parallelism par = {}) {
  detail::check_drift_inputs(cfg, {a}, radii, n_momenta);
  const int d = model.dim;
  const ChunkPlan plan{static_cast<std::size_t>(n_momenta), detail::kMonteCarloChunk};
  std::vector<RejectionMassPoint> out;
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const double r = radii[ri];
    const std::uint64_t root = derive_seed(seed, ri);
    struct Part {
      int hits = 0, n = 0, errors = 0;
    };
    auto parts = map_chunks(plan.count(), par, [&](std::size_t c) {
      Part part;
      Stream rng = split(root, c);
      for (std::size_t i = plan.begin(c); i < plan.end(c); ++i) {
        const PhaseState s0{r * rng.unit_vector(d), rng.normal_vector(d)};
        try {
          const PhaseState sT = leapfrog_final(model, s0, cfg);
          const double dh = hamiltonian(model, sT) - hamiltonian(model, s0);
          ++part.n;
          part.hits += (dh > 0.0 && sT.q.norm() <= s0.q.norm()) ? 1 : 0;
        } catch (const NumericError&) {
          ++part.errors;
        }
      }
      return part;
    });
    RejectionMassPoint pt;
    pt.radius = r;
    int hits = 0;
    for (const auto& part : parts) {
      hits += part.hits;
      pt.n += part.n;
      pt.n_errors += part.errors;
    }
    if (pt.n > 0) {
      pt.mass = static_cast<double>(hits) / pt.n;
      pt.stderr_ = std::sqrt(pt.mass * (1.0 - pt.mass) / pt.n);
    } else {
      pt.mass = pt.stderr_ = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace hmc_lab
