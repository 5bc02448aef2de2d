#pragma once

// Negative-energy horizon T~ = max{k <= t_max : H_k - H_0 < 0} and the
// tail-acceptance profile (fraction of momenta |p0| <= |q0|^gamma whose
// T-step proposal does not raise H).

#include "hmc_lab/core.hpp"
#include "hmc_lab/integrator.hpp"
#include "hmc_lab/parallel.hpp"
#include "hmc_lab/potential.hpp"
#include "hmc_lab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hmc_lab {

struct HorizonTrace {
  int t_tilde = 0;
  std::vector<double> dh_from_start;  // H_k - H_0, k = 0..t_max
};

inline HorizonTrace horizon_trace(const PotentialModel& model, const Vector& q0, const Vector& p0,
                                  double h, int t_max) {
  if (t_max < 1) throw ConfigError("horizon: t_max must be >= 1");
  const Trajectory traj = leapfrog_run(model, {q0, p0}, {h, t_max});
  HorizonTrace out;
  out.dh_from_start.reserve(traj.energy.size());
  for (std::size_t k = 0; k < traj.energy.size(); ++k) {
    const double dh = traj.energy[k] - traj.energy[0];
    if (!std::isfinite(dh))
      throw NumericError("horizon: non-finite energy at step " + std::to_string(k),
                         static_cast<long>(k));
    out.dh_from_start.push_back(dh);
    if (k > 0 && dh < 0.0) out.t_tilde = static_cast<int>(k);
  }
  return out;
}

inline int negative_energy_horizon(const PotentialModel& model, const Vector& q0, const Vector& p0,
                                   double h, int t_max) {
  return horizon_trace(model, q0, p0, h, t_max).t_tilde;
}

/// Unit momentum orthogonal to q0 (the first coordinate rotation of q0's
/// direction); in 1-D, +1.
inline Vector orthogonal_unit(const Vector& q0) {
  Vector p = Vector::Zero(q0.size());
  if (q0.size() == 1) {
    p[0] = 1.0;
    return p;
  }
  const double n = q0.norm();
  if (n == 0.0) {
    p[1] = 1.0;
    return p;
  }
  p[0] = -q0[1] / n;
  p[1] = q0[0] / n;
  if (p.norm() == 0.0) p[0] = 1.0;
  return p.normalized();
}

struct TailPoint {
  double radius = 0.0;
  int n_momenta = 0;
  int n_ok = 0;       // samples with dH <= 0
  int n_errors = 0;   // integrator failures, excluded from the fraction
  double fraction = 0.0;
  double worst_dh = -std::numeric_limits<double>::infinity();
  std::vector<int> horizons;  // T~ per sample when requested
};

struct TailAcceptanceProfile {
  double gamma = 0.0;
  LeapfrogConfig cfg;
  std::vector<double> radii;
  std::vector<TailPoint> points;
  std::uint64_t seed = 0;
  std::string note;

  /// Smallest grid radius from which every larger radius has fraction 1.
  std::optional<double> empirical_radius() const {
    std::optional<double> r;
    for (std::size_t i = points.size(); i-- > 0;) {
      if (points[i].fraction < 1.0 || points[i].n_errors > 0) break;
      r = points[i].radius;
    }
    return r;
  }
};

namespace detail {

inline void check_gamma(const PotentialModel& model, double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("tail.gamma must be >= 0");
  if (model.homogeneity && !(gamma < *model.homogeneity - 1.0))
    throw ConfigError("tail.gamma must lie in [0, m-1) = [0, " +
                      format_double(*model.homogeneity - 1.0) + ")");
}

inline void check_increasing(const std::vector<double>& radii, const char* what) {
  if (radii.empty()) throw ConfigError(std::string(what) + ": radii must be nonempty");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ConfigError(std::string(what) + ": radii must be > 0");
    if (i > 0 && !(radii[i] > radii[i - 1]))
      throw ConfigError(std::string(what) + ": radii must be increasing");
  }
}

inline constexpr std::size_t kMonteCarloChunk = 256;

}  // namespace detail

inline TailAcceptanceProfile tail_acceptance(const PotentialModel& model, const LeapfrogConfig& cfg,
                                             const std::vector<double>& radii, double gamma,
                                             int n_momenta, std::uint64_t seed,
                                             Parallelism par = {}, bool record_horizon = false) {
  cfg.validate();
  detail::check_gamma(model, gamma);
  detail::check_increasing(radii, "tail_acceptance");
  if (n_momenta < 100) throw ConfigError("tail.n_momenta must be >= 100");

  TailAcceptanceProfile out;
  out.gamma = gamma;
  out.cfg = cfg;
  out.radii = radii;
  out.seed = seed;
  if (gamma == 0.0)
    out.note = "gamma = 0 accepted: the statement allows [0, m-1), the lemmas use (0, m-1)";

  const int d = model.dim;
  const ChunkPlan plan{static_cast<std::size_t>(n_momenta), detail::kMonteCarloChunk};
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const double r = radii[ri];
    const double p_radius = std::pow(r, gamma);
    const std::uint64_t root = derive_seed(seed, ri);
    auto parts = map_chunks(plan.count(), par, [&](std::size_t c) {
      TailPoint part;
      Stream rng = split(root, c);
      for (std::size_t i = plan.begin(c); i < plan.end(c); ++i) {
        const Vector q0 = r * rng.unit_vector(d);
        const Vector p0 = rng.in_ball(d, p_radius);
        ++part.n_momenta;
        try {
          if (record_horizon) {
            const HorizonTrace tr = horizon_trace(model, q0, p0, cfg.h, cfg.T);
            part.horizons.push_back(tr.t_tilde);
            const double dh = tr.dh_from_start.back();
            part.n_ok += dh <= 0.0 ? 1 : 0;
            part.worst_dh = std::max(part.worst_dh, dh);
          } else {
            const PhaseState s0{q0, p0};
            const double dh = hamiltonian(model, leapfrog_final(model, s0, cfg)) -
                              hamiltonian(model, s0);
            part.n_ok += dh <= 0.0 ? 1 : 0;
            part.worst_dh = std::max(part.worst_dh, dh);
          }
        } catch (const NumericError&) {
          ++part.n_errors;
        }
      }
      return part;
    });
    TailPoint pt;
    pt.radius = r;
    for (const auto& part : parts) {
      pt.n_momenta += part.n_momenta;
      pt.n_ok += part.n_ok;
      pt.n_errors += part.n_errors;
      pt.worst_dh = std::max(pt.worst_dh, part.worst_dh);
      pt.horizons.insert(pt.horizons.end(), part.horizons.begin(), part.horizons.end());
    }
    const int valid = pt.n_momenta - pt.n_errors;
    pt.fraction = valid > 0 ? static_cast<double>(pt.n_ok) / valid : 0.0;
    out.points.push_back(std::move(pt));
  }
  return out;
}

}  // namespace hmc_lab
