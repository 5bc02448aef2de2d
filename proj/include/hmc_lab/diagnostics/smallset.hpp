#pragma once

// Proposal growth constants and a numerical small-set check.
//
// The T-step position map is written Phi(q, p) = Th p + g(q, p) with
//   g(q, p) = q - (T h^2 / 2) grad U(q) - h^2 sum_{i=1}^{T-1} (T - i) grad U(q_i).
// On |q| <= R the probe estimates |g| <= C0 + C1 |p| and the Lipschitz
// constant of g in p. When Th > C1 every y in B(0, M) has a preimage
// p in B(0, M~), M~ = (M + C0) / (Th - C1), which gives the minorization
// constant eps = L^-d inf_{B(0, M~)} phi for the standard normal density phi.

#include "hmc_lab/core.hpp"
#include "hmc_lab/integrator.hpp"
#include "hmc_lab/potential.hpp"
#include "hmc_lab/rng.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace hmc_lab {

struct GrowthProbe {
  double R = 0.0;
  double p_radius = 0.0;   // momenta probed in B(0, p_radius)
  double L_hat = 0.0;      // Lipschitz constant of g in p
  double C0_hat = 0.0;
  double C1_hat = 0.0;
  double b = 0.0;          // Th
  bool condition_ok = false;

  double margin() const { return b - C1_hat; }
};

struct SmallSetProbe {
  double R = 0.0;
  double M = 0.0;
  double M_tilde = 0.0;
  double L_hat = 0.0;        // Lipschitz constant of p -> Phi(q, p)
  double density_inf = 0.0;  // inf of the standard normal density on B(0, M~)
  double coverage_fraction = 0.0;
  double epsilon_hat = 0.0;
  int n_targets = 0;
  int n_starts = 0;
  int n_hits = 0;
  GrowthProbe growth;
};

namespace detail {

// g(q, p) from the recorded leapfrog positions. For a flat potential the
// gradient sums vanish and g = q exactly.
inline Vector growth_remainder(const PotentialModel& model, const Vector& q, const Vector& p,
                               const LeapfrogConfig& cfg) {
  const double h = cfg.h;
  const int T = cfg.T;
  Vector acc = (static_cast<double>(T) * h * h / 2.0) * model.grad(q);
  if (T > 1) {
    const Trajectory traj = leapfrog_run(model, {q, p}, {h, T - 1});
    for (int i = 1; i <= T - 1; ++i)
      acc += (h * h * static_cast<double>(T - i)) * model.grad(traj.states[i].q);
  }
  return q - acc;
}

inline Vector position_map(const PotentialModel& model, const Vector& q, const Vector& p,
                           const LeapfrogConfig& cfg) {
  return leapfrog_final(model, {q, p}, cfg).q;
}

// Start points: the 2d axis points at radius R, then random interior points.
inline std::vector<Vector> probe_starts(int d, double R, int n_random, Stream& rng) {
  std::vector<Vector> out;
  for (int i = 0; i < d; ++i) {
    for (double s : {1.0, -1.0}) {
      Vector q = Vector::Zero(d);
      q[i] = s * R;
      out.push_back(q);
    }
  }
  for (int i = 0; i < n_random; ++i) out.push_back(0.999 * rng.in_ball(d, R));
  return out;
}

inline double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) return 0.0;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

// Largest sampled difference quotient of f in p, from local perturbations
// and from pairs of momenta sharing a start point.
template <typename F>
double lipschitz_in_p(F&& f, const std::vector<Vector>& starts, double p_radius, int per_start,
                      Stream& rng) {
  double L = 0.0;
  for (const Vector& q : starts) {
    const Eigen::Index d = q.size();
    Vector prev_p, prev_f;
    for (int i = 0; i < per_start; ++i) {
      const Vector p = rng.in_ball(d, p_radius);
      const Vector fp = f(q, p);
      const double step = 1e-4 * (1.0 + p.norm());
      const Vector p2 = p + step * rng.unit_vector(d);
      const double den = (p2 - p).norm();
      if (den > 0.0) L = std::max(L, (f(q, p2) - fp).norm() / den);
      if (prev_p.size() > 0) {
        const double far = (p - prev_p).norm();
        if (far > 0.0) L = std::max(L, (fp - prev_f).norm() / far);
      }
      prev_p = p;
      prev_f = fp;
    }
  }
  return L;
}

}  // namespace detail

/// n_samples (q, p) evaluations over |q| <= R and momenta in 16 shells
/// covering B(0, p_radius).
inline GrowthProbe proposal_growth_probe(const PotentialModel& model, const LeapfrogConfig& cfg,
                                         double R, int n_samples, std::uint64_t seed,
                                         double p_radius = 0.0) {
  cfg.validate();
  if (!(R > 0.0)) throw ConfigError("smallset.R must be > 0");
  if (n_samples < 64) throw ConfigError("smallset.n_samples must be >= 64");
  const int d = model.dim;
  const double b = static_cast<double>(cfg.T) * cfg.h;
  if (!(p_radius > 0.0)) p_radius = 4.0 * (1.0 + R) / b;

  Stream rng = split(derive_seed(seed, 0x6A0), 0);
  const std::vector<Vector> starts = detail::probe_starts(d, R, 6, rng);
  constexpr int n_shells = 16;
  const int per_cell = std::max(1, n_samples / (n_shells * static_cast<int>(starts.size())));

  std::vector<double> shell_x(n_shells), shell_max(n_shells, 0.0);
  std::vector<std::pair<double, double>> samples;  // (|p|, |g|)
  for (const Vector& q : starts) samples.push_back({0.0, detail::growth_remainder(model, q, Vector::Zero(d), cfg).norm()});
  for (int s = 0; s < n_shells; ++s) {
    const double lo = p_radius * s / n_shells, hi = p_radius * (s + 1) / n_shells;
    shell_x[s] = hi;
    for (const Vector& q : starts) {
      for (int i = 0; i < per_cell; ++i) {
        const double rad = i == 0 ? hi : lo + (hi - lo) * rng.uniform();
        const Vector p = rad * rng.unit_vector(d);
        const double gn = detail::growth_remainder(model, q, p, cfg).norm();
        if (!std::isfinite(gn)) throw NumericError("growth probe: non-finite g");
        shell_max[s] = std::max(shell_max[s], gn);
        samples.push_back({p.norm(), gn});
      }
    }
  }

  GrowthProbe out;
  out.R = R;
  out.p_radius = p_radius;
  out.b = b;
  out.C1_hat = std::max(0.0, detail::lsq_slope(shell_x, shell_max));
  for (const auto& [pn, gn] : samples) out.C0_hat = std::max(out.C0_hat, gn - out.C1_hat * pn);
  out.L_hat = detail::lipschitz_in_p(
      [&](const Vector& q, const Vector& p) { return detail::growth_remainder(model, q, p, cfg); },
      starts, p_radius, std::max(2, per_cell), rng);
  out.condition_ok = b > out.C1_hat;
  return out;
}

/// L^-d (2 pi)^(-d/2) exp(-M~^2 / 2).
inline double minorization_epsilon(double L, int d, double M_tilde) {
  const double phi_inf = std::pow(2.0 * std::numbers::pi, -0.5 * d) * std::exp(-0.5 * M_tilde * M_tilde);
  return std::pow(L, -static_cast<double>(d)) * phi_inf;
}

struct RootResult {
  Vector p;
  double residual = 0.0;
  bool converged = false;
};

/// Gauss-Newton with a central-difference Jacobian and backtracking for
/// Phi(q, p) = y; success at |residual| <= 1e-8 (1 + |y|).
inline RootResult solve_position_map(const PotentialModel& model, const LeapfrogConfig& cfg,
                                     const Vector& q, const Vector& y, Vector p) {
  const Eigen::Index d = q.size();
  const double tol = 1e-8 * (1.0 + y.norm());
  RootResult out;
  try {
    Vector F = detail::position_map(model, q, p, cfg) - y;
    for (int it = 0; it < 100 && F.norm() > tol; ++it) {
      Matrix J(d, d);
      const double step = 1e-6 * (1.0 + p.norm());
      for (Eigen::Index j = 0; j < d; ++j) {
        Vector e = Vector::Zero(d);
        e[j] = step;
        J.col(j) = (detail::position_map(model, q, p + e, cfg) -
                    detail::position_map(model, q, p - e, cfg)) / (2.0 * step);
      }
      const Vector delta = J.colPivHouseholderQr().solve(-F);
      if (!delta.allFinite()) break;
      double t = 1.0;
      bool improved = false;
      for (int k = 0; k < 40; ++k, t *= 0.5) {
        const Vector trial = p + t * delta;
        const Vector Ft = detail::position_map(model, q, trial, cfg) - y;
        if (Ft.allFinite() && Ft.norm() < F.norm()) {
          p = trial;
          F = Ft;
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
    out.residual = F.norm();
    out.converged = out.residual <= tol;
  } catch (const NumericError&) {
    out.residual = std::numeric_limits<double>::infinity();
  }
  out.p = std::move(p);
  return out;
}

/// Checks B(0, M) against Phi(q, B(0, M~)) for start points with |q| <= R.
/// Targets: grid_n evenly spaced points in 1-D, otherwise the origin plus
/// grid_n - 1 uniform draws in the ball. lipschitz_scale multiplies the
/// measured L (used to test the L^-d scaling).
inline SmallSetProbe smallset_probe(const PotentialModel& model, const LeapfrogConfig& cfg,
                                    double R, double M, int grid_n, std::uint64_t seed,
                                    int n_growth_samples = 4096, double lipschitz_scale = 1.0) {
  if (!(M > 0.0)) throw ConfigError("smallset.M must be > 0");
  if (grid_n < 2) throw ConfigError("smallset.grid_n must be >= 2");
  const int d = model.dim;

  GrowthProbe growth = proposal_growth_probe(model, cfg, R, n_growth_samples, seed);
  if (!growth.condition_ok)
    throw ConfigError("smallset: growth condition Th > C1 fails (Th = " + format_double(growth.b) +
                      ", C1 = " + format_double(growth.C1_hat) + ")");
  double M_tilde = (M + growth.C0_hat) / (growth.b - growth.C1_hat);
  // The envelope is only trusted on the probed momentum ball.
  for (int k = 0; k < 4 && M_tilde > growth.p_radius; ++k) {
    growth = proposal_growth_probe(model, cfg, R, n_growth_samples, seed, 2.0 * M_tilde);
    if (!growth.condition_ok) throw ConfigError("smallset: growth condition Th > C1 fails");
    M_tilde = (M + growth.C0_hat) / (growth.b - growth.C1_hat);
  }

  SmallSetProbe out;
  out.R = R;
  out.M = M;
  out.M_tilde = M_tilde;
  out.growth = growth;

  Stream rng = split(derive_seed(seed, 0x5E7), 0);
  std::vector<Vector> starts = detail::probe_starts(d, R, d == 1 ? 1 : 4, rng);
  if (d == 1) {
    // Replace the random interior point by the centre for a symmetric grid.
    starts.back()[0] = 0.0;
  }
  out.n_starts = static_cast<int>(starts.size());

  std::vector<Vector> targets;
  if (d == 1) {
    for (int i = 0; i < grid_n; ++i) {
      Vector y(1);
      y[0] = -M + 2.0 * M * i / (grid_n - 1);
      targets.push_back(y);
    }
  } else {
    targets.push_back(Vector::Zero(d));
    for (int i = 1; i < grid_n; ++i) targets.push_back(rng.in_ball(d, M));
  }
  out.n_targets = static_cast<int>(targets.size());

  const double b = growth.b;
  for (const Vector& q : starts) {
    for (const Vector& y : targets) {
      const RootResult root = solve_position_map(model, cfg, q, y, (y - q) / b);
      if (root.converged && root.p.norm() <= M_tilde * (1.0 + 1e-9)) ++out.n_hits;
    }
  }
  const int total = out.n_starts * out.n_targets;
  out.coverage_fraction = static_cast<double>(out.n_hits) / total;

  out.L_hat = lipschitz_scale * detail::lipschitz_in_p(
                                    [&](const Vector& q, const Vector& p) {
                                      return detail::position_map(model, q, p, cfg);
                                    },
                                    starts, M_tilde, 64, rng);
  out.density_inf = std::pow(2.0 * std::numbers::pi, -0.5 * d) * std::exp(-0.5 * M_tilde * M_tilde);
  // Without full coverage the bound is not certified; report zero.
  out.epsilon_hat = out.n_hits == total ? minorization_epsilon(out.L_hat, d, M_tilde) : 0.0;
  return out;
}

}  // namespace hmc_lab
