#pragma once

// Numerical probes for the gradient-growth assumption A1(beta) and the
// homogeneous-growth assumption A2(m).
//
// A finite sample cannot certify a supremum, so each upper-bound condition
// is judged by the absence of a growth trend: the largest per-radius ratio
// over the top half of the radius grid may not exceed 1.5x the ratio at the
// median radius. Lower bounds use the mirrored rule.

#include "hmc_lab/core.hpp"
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

enum class Assumption { a1, a2 };

inline const char* assumption_name(Assumption a) { return a == Assumption::a1 ? "A1" : "A2"; }

struct ConditionResult {
  std::string id;
  bool pass = false;
  double constant = 0.0;          // fitted constant (nonnegative)
  Vector witness;                 // point with the worst ratio
  double witness_ratio = 0.0;
  std::vector<double> per_radius; // max (upper) or min (lower) ratio per radius
  std::optional<double> holds_from_radius;
  std::string note;
};

struct SampleSpec {
  std::vector<double> radii;
  int n_samples = 64;
  std::uint64_t seed = 0;
};

struct AssumptionReport {
  Assumption assumption = Assumption::a1;
  double parameter = 0.0;  // beta or m
  std::vector<ConditionResult> conditions;
  SampleSpec sample_spec;

  bool passed() const {
    return std::all_of(conditions.begin(), conditions.end(),
                       [](const ConditionResult& c) { return c.pass; });
  }

  const ConditionResult& condition(const std::string& id) const {
    for (const auto& c : conditions)
      if (c.id == id) return c;
    throw ConfigError("no condition " + id);
  }
};

inline std::vector<double> default_radii() { return {1.0, 10.0, 100.0, 1e3, 1e4}; }

namespace detail {

inline void check_radii(const std::vector<double>& radii, int n_samples) {
  if (radii.empty()) throw ConfigError("radii must be nonempty");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ConfigError("radii must be > 0");
    if (i > 0 && !(radii[i] > radii[i - 1])) throw ConfigError("radii must be increasing");
  }
  if (n_samples < 2) throw ConfigError("n_samples must be >= 2");
}

inline ConditionResult named(const char* id) {
  ConditionResult c;
  c.id = id;
  return c;
}

inline std::size_t median_index(std::size_t n) { return (n - 1) / 2; }

// Tracks the per-radius extreme ratio and the global worst witness.
struct RatioTracker {
  bool upper = true;  // true: track maxima, false: minima
  std::vector<double> per_radius;
  std::vector<Vector> per_radius_point;

  void begin_radius() {
    per_radius.push_back(upper ? -std::numeric_limits<double>::infinity()
                               : std::numeric_limits<double>::infinity());
    per_radius_point.emplace_back();
  }

  void add(double ratio, const Vector& q) {
    double& cur = per_radius.back();
    if ((upper && ratio > cur) || (!upper && ratio < cur) || per_radius_point.back().size() == 0) {
      cur = ratio;
      per_radius_point.back() = q;
    }
  }
};

// Upper-bound trend rule. Fills pass, constant and witness.
inline void judge_upper(const RatioTracker& t, ConditionResult& out) {
  const auto& r = t.per_radius;
  const std::size_t mid = median_index(r.size());
  const double reference = r[mid];
  out.per_radius = r;
  out.pass = true;
  std::size_t worst = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i] > r[worst]) worst = i;
  for (std::size_t i = mid + 1; i < r.size(); ++i) {
    if (!(r[i] <= 1.5 * reference)) {
      out.pass = false;
      if (out.witness.size() == 0 || r[i] > out.witness_ratio) {
        out.witness = t.per_radius_point[i];
        out.witness_ratio = r[i];
      }
    }
  }
  if (out.pass) {
    out.witness = t.per_radius_point[worst];
    out.witness_ratio = r[worst];
  }
  out.constant = std::max(0.0, r[worst]);
  if (!std::isfinite(out.constant)) out.pass = false;
}

// Lower-bound trend rule: positive, and no decay beyond 1/1.5 of the median.
inline void judge_lower(const RatioTracker& t, ConditionResult& out, std::size_t first) {
  const auto& r = t.per_radius;
  out.per_radius = r;
  out.pass = true;
  const std::size_t mid = std::max(first, median_index(r.size()));
  const double reference = r[std::min(mid, r.size() - 1)];
  double floor_value = std::numeric_limits<double>::infinity();
  std::size_t worst = first;
  for (std::size_t i = first; i < r.size(); ++i) {
    if (r[i] < floor_value) {
      floor_value = r[i];
      worst = i;
    }
    const bool decays = i > mid && r[i] < reference / 1.5;
    if (!(r[i] > 0.0) || decays) out.pass = false;
  }
  out.witness = t.per_radius_point[worst];
  out.witness_ratio = r[worst];
  out.constant = std::max(0.0, floor_value);
  // Smallest grid radius from which the ratio stays positive.
  for (std::size_t i = r.size(); i-- > 0;) {
    if (!(r[i] > 0.0)) break;
    out.holds_from_radius = static_cast<double>(i);
  }
}

}  // namespace detail

/// A1(beta): (i) grad U is Lipschitz, (ii) |grad U(q)| <= M1 (1 + |q|^beta).
inline AssumptionReport check_a1(const PotentialModel& model, double beta,
                                 const std::vector<double>& radii, int n_samples,
                                 std::uint64_t seed) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("a1.beta must lie in [0, 1]");
  detail::check_radii(radii, n_samples);
  const int d = model.dim;
  Stream rng = split(derive_seed(seed, 0xA1), 0);

  detail::RatioTracker lip{true, {}, {}}, growth{true, {}, {}};
  for (double r : radii) {
    lip.begin_radius();
    growth.begin_radius();
    for (int i = 0; i < n_samples; ++i) {
      const Vector q = r * rng.unit_vector(d);
      const Vector g = model.grad(q);
      if (!g.allFinite()) throw NumericError("check_a1: non-finite gradient");
      growth.add(g.norm() / (1.0 + std::pow(r, beta)), q);
      // Pair at a log-uniform distance between 1e-3 r and r.
      const double dist = r * std::pow(10.0, -3.0 * rng.uniform());
      const Vector q2 = q + dist * rng.unit_vector(d);
      const double den = (q - q2).norm();
      if (den > 0.0) lip.add((g - model.grad(q2)).norm() / den, q);
    }
  }

  AssumptionReport rep;
  rep.assumption = Assumption::a1;
  rep.parameter = beta;
  rep.sample_spec = {radii, n_samples, seed};
  ConditionResult ci = detail::named("i"), cii = detail::named("ii");
  detail::judge_upper(lip, ci);
  detail::judge_upper(growth, cii);
  ci.note = "L1 = max |grad U(q) - grad U(q')| / |q - q'| over sampled pairs";
  cii.note = "M1 = max |grad U(q)| / (1 + |q|^beta)";
  rep.conditions = {ci, cii};
  return rep;
}

/// A2(m): (i) |D^k U(q)| <= A1 (|q|+1)^(m-k), k = 2, 3; (ii)
/// D^2 U(q){grad U(q)^2} >= A2 |q|^(3m-4) for large |q|; (iii)
/// <grad U(q), q> >= A3 |q|^m - A4.
inline AssumptionReport check_a2(const PotentialModel& model, double m,
                                 const std::vector<double>& radii, int n_samples,
                                 std::uint64_t seed, bool allow_fd_fallback = true) {
  if (!(m > 1.0 && m <= 2.0)) throw ConfigError("a2.m must lie in (1, 2]");
  detail::check_radii(radii, n_samples);
  if (!allow_fd_fallback && (!model.has_hessian() || !model.has_third()))
    throw CapabilityError("check_a2: model lacks hess_dir/third_dir evaluators");
  const int d = model.dim;
  Stream rng = split(derive_seed(seed, 0xA2), 0);

  detail::RatioTracker d2{true, {}, {}}, d3{true, {}, {}}, curv{false, {}, {}},
      inner{false, {}, {}};
  double a4_raw = 0.0;
  std::vector<std::pair<double, double>> inner_samples;  // (|q|^m, <grad U, q>)
  for (double r : radii) {
    d2.begin_radius();
    d3.begin_radius();
    curv.begin_radius();
    inner.begin_radius();
    for (int i = 0; i < n_samples; ++i) {
      const Vector q = r * rng.unit_vector(d);
      const Vector v = rng.unit_vector(d), w = rng.unit_vector(d);
      const Vector g = model.grad(q);
      d2.add(hess_dir_or_fd(model, q, v).norm() / std::pow(r + 1.0, m - 2.0), q);
      d3.add(third_dir_or_fd(model, q, v, w).norm() / std::pow(r + 1.0, m - 3.0), q);
      curv.add(hess_dir_or_fd(model, q, g).dot(g) / std::pow(r, 3.0 * m - 4.0), q);
      const double ip = g.dot(q);
      inner.add(ip / std::pow(r, m), q);
      inner_samples.emplace_back(std::pow(r, m), ip);
    }
  }

  AssumptionReport rep;
  rep.assumption = Assumption::a2;
  rep.parameter = m;
  rep.sample_spec = {radii, n_samples, seed};

  ConditionResult c2 = detail::named("i.k2"), c3 = detail::named("i.k3"), cii = detail::named("ii"),
                  ciii = detail::named("iii"), c4 = detail::named("iii.A4");
  detail::judge_upper(d2, c2);
  detail::judge_upper(d3, c3);
  c2.note = "A1 (k=2) = max |D^2 U(q) v| / (|q|+1)^(m-2) over unit v";
  c3.note = "A1 (k=3) = max |D^3 U(q)[v,w]| / (|q|+1)^(m-3) over unit v, w";

  // (ii) is only required beyond some radius; it is judged on radii at
  // least half the largest one.
  std::size_t first = 0;
  while (first + 1 < radii.size() && radii[first] < radii.back() / 2.0) ++first;
  detail::judge_lower(curv, cii, first);
  if (cii.holds_from_radius) cii.holds_from_radius = radii[static_cast<std::size_t>(*cii.holds_from_radius)];
  cii.note = "A2 = min D^2 U(q){grad U(q)^2} / |q|^(3m-4) over |q| >= max radius / 2";

  // (iii): lower trend over the whole grid; A4 absorbs the remaining slack.
  detail::judge_lower(inner, ciii, 0);
  if (ciii.holds_from_radius) ciii.holds_from_radius = radii[static_cast<std::size_t>(*ciii.holds_from_radius)];
  const double a3 = ciii.constant;
  for (const auto& [rm, ip] : inner_samples) a4_raw = std::max(a4_raw, a3 * rm - ip);
  ciii.note = "A3 = min <grad U(q), q> / |q|^m";
  c4.pass = ciii.pass;
  c4.constant = std::max(0.0, a4_raw);
  c4.witness = ciii.witness;
  c4.note = "A4 = max(0, max A3 |q|^m - <grad U(q), q>)";

  rep.conditions = {c2, c3, cii, ciii, c4};
  return rep;
}

}  // namespace hmc_lab
