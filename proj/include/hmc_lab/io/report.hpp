#pragma once

// JSON serialization of every report type (ADL to_json hooks for
// nlohmann::json). Non-finite doubles become null.

#include "hmc_lab/diagnostics.hpp"
#include "hmc_lab/kernel.hpp"

#include "json.hpp"

#include <vector>

namespace hmc_lab {

inline nlohmann::json vector_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline void to_json(nlohmann::json& j, const LeapfrogConfig& c) { j = {{"h", c.h}, {"T", c.T}}; }

inline void to_json(nlohmann::json& j, const ScheduleEntry& e) {
  j = {{"weight", e.weight}, {"h", e.h}, {"T", e.T}};
}

inline void to_json(nlohmann::json& j, const KernelSpec& spec) {
  if (const auto* c = std::get_if<LeapfrogConfig>(&spec)) {
    j = *c;
    return;
  }
  j = {{"schedule", std::get<RandomizedSchedule>(spec).entries}};
}

inline void to_json(nlohmann::json& j, const EnergyDecomposition& e) {
  j = {{"terms", e.terms},       {"total", e.total},         {"direct", e.direct},
       {"residual", e.residual}, {"tolerance", e.tolerance}, {"quad_nodes", e.quad_nodes}};
}

inline void to_json(nlohmann::json& j, const TailPoint& p) {
  j = {{"radius", p.radius},     {"n_momenta", p.n_momenta}, {"n_ok", p.n_ok},
       {"n_errors", p.n_errors}, {"fraction", p.fraction},   {"worst_dh", p.worst_dh}};
  if (!p.horizons.empty()) j["horizons"] = p.horizons;
}

inline void to_json(nlohmann::json& j, const TailAcceptanceProfile& t) {
  j = {{"gamma", t.gamma}, {"kernel", t.cfg}, {"radii", t.radii}, {"points", t.points},
       {"seed", t.seed}};
  if (const auto r = t.empirical_radius()) j["empirical_radius"] = *r;
  else j["empirical_radius"] = nullptr;
  if (!t.note.empty()) j["note"] = t.note;
}

inline void to_json(nlohmann::json& j, const DriftPoint& p) {
  j = {{"radius", p.radius},   {"ratio", p.ratio},       {"stderr", p.stderr_},
       {"log_ratio", p.log_ratio}, {"n_pairs", p.n_pairs}, {"n_errors", p.n_errors},
       {"ok", p.ok}};
}

inline void to_json(nlohmann::json& j, const DriftReport& r) {
  j = {{"a", r.a}, {"radii", r.radii}, {"points", r.points}, {"lambda_hat", r.lambda_hat},
       {"b_hat", r.b_hat}};
}

inline void to_json(nlohmann::json& j, const DriftScan& s) {
  j = {{"kernel", s.cfg},
       {"seed", s.seed},
       {"n_momenta", s.n_momenta},
       {"note", s.note},
       {"reports", s.reports},
       {"best_a", s.best_report().a},
       {"drift_detected", s.drift_detected()}};
}

inline void to_json(nlohmann::json& j, const RejectionMassPoint& p) {
  j = {{"radius", p.radius}, {"mass", p.mass}, {"stderr", p.stderr_}, {"n", p.n},
       {"n_errors", p.n_errors}};
}

inline void to_json(nlohmann::json& j, const GrowthProbe& g) {
  j = {{"R", g.R},          {"p_radius", g.p_radius}, {"L_hat", g.L_hat},
       {"C0_hat", g.C0_hat}, {"C1_hat", g.C1_hat},    {"b", g.b},
       {"margin", g.margin()}, {"condition_ok", g.condition_ok}};
}

inline void to_json(nlohmann::json& j, const SmallSetProbe& s) {
  j = {{"R", s.R},
       {"M", s.M},
       {"M_tilde", s.M_tilde},
       {"L_hat", s.L_hat},
       {"density_inf", s.density_inf},
       {"coverage_fraction", s.coverage_fraction},
       {"epsilon_hat", s.epsilon_hat},
       {"n_targets", s.n_targets},
       {"n_starts", s.n_starts},
       {"n_hits", s.n_hits},
       {"growth", s.growth}};
}

inline void to_json(nlohmann::json& j, const TvDecayCurve& c) {
  j = {{"iterations", c.iterations},
       {"tv_hat", c.tv_hat},
       {"fit_indices", c.fit_indices},
       {"noise_floor", c.noise_floor},
       {"r2", c.r2},
       {"bins", c.bins},
       {"replications", c.replications},
       {"n_chains", c.n_chains},
       {"half_width", c.half_width},
       {"seed", c.seed},
       {"start", c.start == TvStart::point ? "point" : "stationary"},
       {"halted_chains", c.halted_chains}};
  if (c.rho_hat) j["rho_hat"] = *c.rho_hat;
  else j["rho_hat"] = nullptr;
  if (!c.reason.empty()) j["reason"] = c.reason;
}

inline void to_json(nlohmann::json& j, const ChainSummary& s) {
  j = {{"n", s.n},       {"acceptance_rate", s.acceptance_rate}, {"mean", s.mean},
       {"variance", s.variance}, {"tau", s.tau}, {"ess", s.ess}};
}

inline void to_json(nlohmann::json& j, const ConditionResult& c) {
  j = {{"id", c.id},
       {"pass", c.pass},
       {"constant", c.constant},
       {"witness", vector_json(c.witness)},
       {"witness_ratio", c.witness_ratio},
       {"per_radius", c.per_radius},
       {"note", c.note}};
  if (c.holds_from_radius) j["holds_from_radius"] = *c.holds_from_radius;
}

inline void to_json(nlohmann::json& j, const AssumptionReport& r) {
  j = {{"assumption", assumption_name(r.assumption)},
       {"parameter", r.parameter},
       {"passed", r.passed()},
       {"conditions", r.conditions},
       {"sample_spec",
        {{"radii", r.sample_spec.radii},
         {"n_samples", r.sample_spec.n_samples},
         {"seed", r.sample_spec.seed}}}};
}

}  // namespace hmc_lab
