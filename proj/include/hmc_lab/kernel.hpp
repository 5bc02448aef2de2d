#pragma once

// HMC Markov kernel on positions: full momentum refresh, T leapfrog steps,
// Metropolis accept/reject on H. Momenta are not carried between
// iterations (the sign flip on acceptance does not affect the position
// chain). T = 1 is MALA.

#include "hmc_lab/core.hpp"
#include "hmc_lab/integrator.hpp"
#include "hmc_lab/parallel.hpp"
#include "hmc_lab/potential.hpp"
#include "hmc_lab/rng.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hmc_lab {

struct HmcParams {
  LeapfrogConfig cfg;
  std::uint64_t seed = 0;
};

struct ScheduleEntry {
  double weight = 1.0;
  double h = 0.1;
  int T = 1;
};

/// Mixture sum_i a_i P_{h_i, T_i}; one (h_i, T_i) pair is drawn per iteration.
struct RandomizedSchedule {
  std::vector<ScheduleEntry> entries;

  /// The indexed form: entry i (0-based) runs T = i + 1 steps of size h[i].
  static RandomizedSchedule indexed(const std::vector<double>& weights,
                                    const std::vector<double>& step_sizes) {
    if (weights.size() != step_sizes.size())
      throw ConfigError("schedule: weights and step sizes differ in length");
    RandomizedSchedule s;
    for (std::size_t i = 0; i < weights.size(); ++i)
      s.entries.push_back({weights[i], step_sizes[i], static_cast<int>(i + 1)});
    return s;
  }

  std::vector<std::string> errors() const {
    std::vector<std::string> out;
    if (entries.empty()) {
      out.push_back("kernel.schedule must be nonempty");
      return out;
    }
    double total = 0.0;
    bool any_positive = false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      const std::string where = "kernel.schedule[" + std::to_string(i) + "]";
      if (!(e.weight >= 0.0)) out.push_back(where + ".weight must be >= 0");
      if (!(e.h > 0.0)) out.push_back(where + ".h must be > 0");
      if (e.T < 1) out.push_back(where + ".T must be >= 1");
      total += e.weight;
      any_positive = any_positive || e.weight > 0.0;
    }
    if (std::abs(total - 1.0) > 1e-12)
      out.push_back("kernel.schedule weights must sum to 1 (sum a_i = 1), got " +
                    format_double(total));
    if (!any_positive) out.push_back("kernel.schedule needs at least one positive weight");
    return out;
  }

  void validate() const {
    const auto errs = errors();
    if (!errs.empty()) throw ConfigError(errs.front());
  }

  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto& e : entries) w.push_back(e.weight);
    return w;
  }
};

using KernelSpec = std::variant<LeapfrogConfig, RandomizedSchedule>;

/// min(1, exp(h0 - h1)); 0 when h1 is not finite.
inline double accept_prob(double h0, double h1) {
  if (!std::isfinite(h0)) throw NumericError("accept_prob: non-finite start energy");
  if (!std::isfinite(h1)) return 0.0;
  return std::exp(std::min(0.0, h0 - h1));
}

struct Proposal {
  Vector q_prop;
  PhaseState start;
  PhaseState end;
};

/// Draws p ~ N(0, I) and integrates T leapfrog steps from (q, p).
inline Proposal proposal_sample(const PotentialModel& model, const Vector& q,
                                const LeapfrogConfig& cfg, Stream& rng) {
  PhaseState s0{q, rng.normal_vector(q.size())};
  PhaseState sT = leapfrog_final(model, s0, cfg);
  Vector qp = sT.q;
  return {std::move(qp), std::move(s0), std::move(sT)};
}

struct StepResult {
  Vector q;
  bool accepted = false;
  double dh = 0.0;        // H(proposal) - H(start); +inf for non-finite proposals
  bool flagged = false;   // proposal energy was not finite (hard reject)
  std::size_t index = 0;  // schedule entry used
};

/// One HMC transition. Consumes d normals then exactly one uniform.
inline StepResult hmc_step(const PotentialModel& model, const Vector& q, const LeapfrogConfig& cfg,
                           Stream& rng) {
  Proposal prop = proposal_sample(model, q, cfg, rng);
  const double h0 = energy(model, prop.start);
  if (!std::isfinite(h0)) throw NumericError("hmc_step: non-finite energy at current state");
  const double h1 = energy(model, prop.end);
  StepResult r;
  r.flagged = !std::isfinite(h1);
  r.dh = r.flagged ? std::numeric_limits<double>::infinity() : h1 - h0;
  const double alpha = accept_prob(h0, h1);
  const double u = rng.uniform();
  r.accepted = u < alpha;
  r.q = r.accepted ? std::move(prop.q_prop) : q;
  return r;
}

/// One mixture transition. With a single entry no index draw is made, so
/// the stream matches hmc_step exactly.
inline StepResult randomized_step(const PotentialModel& model, const Vector& q,
                                  const RandomizedSchedule& schedule, Stream& rng) {
  std::size_t i = 0;
  if (schedule.entries.size() > 1) i = rng.categorical(schedule.weights());
  const auto& e = schedule.entries[i];
  StepResult r = hmc_step(model, q, {e.h, e.T}, rng);
  r.index = i;
  return r;
}

inline StepResult kernel_step(const PotentialModel& model, const Vector& q, const KernelSpec& spec,
                              Stream& rng) {
  if (const auto* cfg = std::get_if<LeapfrogConfig>(&spec)) return hmc_step(model, q, *cfg, rng);
  return randomized_step(model, q, std::get<RandomizedSchedule>(spec), rng);
}

inline void validate(const KernelSpec& spec) {
  if (const auto* cfg = std::get_if<LeapfrogConfig>(&spec)) cfg->validate();
  else std::get<RandomizedSchedule>(spec).validate();
}

struct ChainRun {
  std::vector<Vector> samples;       // Q_1..Q_n
  std::vector<char> accepted;
  std::vector<double> proposal_dh;
  std::vector<std::size_t> schedule_index;
  KernelSpec kernel;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  long flagged_events = 0;
  std::optional<std::string> error;  // set when the run halted early

  std::size_t size() const { return samples.size(); }

  double acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    std::size_t n = 0;
    for (char a : accepted) n += a ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(accepted.size());
  }
};

/// n sequential transitions from q0. On an integrator failure the run halts
/// and the partial chain is returned with `error` set.
inline ChainRun run_chain(const PotentialModel& model, const Vector& q0, const KernelSpec& spec,
                          std::size_t n, Stream& rng) {
  if (n < 1) throw ConfigError("run_chain: n must be >= 1");
  validate(spec);
  ChainRun run;
  run.kernel = spec;
  run.seed = rng.seed();
  run.stream = rng.stream_id();
  run.samples.reserve(n);
  run.accepted.reserve(n);
  run.proposal_dh.reserve(n);
  run.schedule_index.reserve(n);
  Vector q = q0;
  for (std::size_t i = 0; i < n; ++i) {
    StepResult r;
    try {
      r = kernel_step(model, q, spec, rng);
    } catch (const NumericError& e) {
      run.error = "iteration " + std::to_string(i) + ": " + e.what();
      break;
    }
    q = r.q;
    run.samples.push_back(q);
    run.accepted.push_back(r.accepted ? 1 : 0);
    run.proposal_dh.push_back(r.dh);
    run.schedule_index.push_back(r.index);
    run.flagged_events += r.flagged ? 1 : 0;
  }
  return run;
}

inline ChainRun run_chain(const PotentialModel& model, const Vector& q0, const HmcParams& params,
                          std::size_t n) {
  Stream rng = split(params.seed, 0);
  return run_chain(model, q0, KernelSpec{params.cfg}, n, rng);
}

/// Independent chains; chain k uses stream split(seed, k).
inline std::vector<ChainRun> run_chains(const PotentialModel& model,
                                        const std::vector<Vector>& starts, const KernelSpec& spec,
                                        std::size_t n, std::uint64_t seed, Parallelism par) {
  return map_chunks(starts.size(), par, [&](std::size_t k) {
    Stream rng = split(seed, k);
    return run_chain(model, starts[k], spec, n, rng);
  });
}

}  // namespace hmc_lab
