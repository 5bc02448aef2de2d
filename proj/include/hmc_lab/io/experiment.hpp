#pragma once

// Declarative experiment configs: strict schema validation and the runner
// that writes summary.json plus experiment CSVs under output_dir.

#include "hmc_lab/diagnostics.hpp"
#include "hmc_lab/io/csv.hpp"
#include "hmc_lab/io/report.hpp"
#include "hmc_lab/io/toml_lite.hpp"
#include "hmc_lab/kernel.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hmc_lab {

/// Every schema violation found in a config, reported together.
class ValidationError : public ConfigError {
public:
  explicit ValidationError(std::vector<std::string> errors)
      : ConfigError(join(errors)), errors_(std::move(errors)) {}

  const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
  static std::string join(const std::vector<std::string>& errs) {
    std::string out;
    for (const auto& e : errs) out += (out.empty() ? "" : "; ") + e;
    return out;
  }

  std::vector<std::string> errors_;
};

enum class ExitCode : int { ok = 0, validation = 2, numeric = 3, assertion = 4 };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string experiment;
  std::optional<FamilyConfig> family;  // empty for the flat potential
  int dim = 1;
  KernelSpec kernel;
  nlohmann::json params;  // per-experiment table with defaults filled in
  nlohmann::json echo;    // normalized config, written back into summary.json

  PotentialModel model() const { return family ? build_family(*family) : make_flat(dim); }
};

namespace schema {

enum class Kind { uint, integer, number, boolean, string, numbers, integers };

struct Field {
  std::string name;
  Kind kind;
  nlohmann::json fallback;  // null means required
};

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::uint: return "a non-negative integer";
    case Kind::integer: return "an integer";
    case Kind::number: return "a number";
    case Kind::boolean: return "a boolean";
    case Kind::string: return "a string";
    case Kind::numbers: return "an array of numbers";
    case Kind::integers: return "an array of integers";
  }
  return "";
}

inline bool matches(const nlohmann::json& v, Kind k) {
  switch (k) {
    case Kind::uint: return v.is_number_unsigned();
    case Kind::integer:
      return v.is_number_integer() && v.get<long long>() >= -2147483647LL &&
             v.get<long long>() <= 2147483647LL;
    case Kind::number: return v.is_number();
    case Kind::boolean: return v.is_boolean();
    case Kind::string: return v.is_string();
    case Kind::numbers:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& x) { return x.is_number(); });
    case Kind::integers:
      return v.is_array() &&
             std::all_of(v.begin(), v.end(), [](const auto& x) { return x.is_number_integer(); });
  }
  return false;
}

/// Checks `table` against `fields`, filling defaults. Unknown keys, missing
/// required keys and type mismatches are appended to `errors`.
inline nlohmann::json apply(const nlohmann::json& table, const std::string& path,
                            const std::vector<Field>& fields, std::vector<std::string>& errors) {
  nlohmann::json out = nlohmann::json::object();
  std::set<std::string> known;
  for (const auto& f : fields) known.insert(f.name);
  for (const auto& [k, v] : table.items())
    if (!known.count(k)) errors.push_back("unknown key '" + path + "." + k + "'");
  for (const auto& f : fields) {
    const std::string where = path + "." + f.name;
    if (!table.contains(f.name)) {
      if (f.fallback.is_null()) errors.push_back("missing required key '" + where + "'");
      else out[f.name] = f.fallback;
      continue;
    }
    const auto& v = table.at(f.name);
    if (!matches(v, f.kind)) {
      errors.push_back(where + " must be " + kind_name(f.kind));
      continue;
    }
    if (f.kind == Kind::number && !v.is_number_float()) out[f.name] = v.get<double>();
    else if (f.kind == Kind::numbers) out[f.name] = v.get<std::vector<double>>();
    else out[f.name] = v;
  }
  return out;
}

inline nlohmann::json range(int lo, int hi) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = lo; i <= hi; ++i) a.push_back(i);
  return a;
}

struct ExperimentSchema {
  std::string name;
  std::string description;
  std::vector<Field> fields;
  bool accepts_schedule = false;
  bool needs_T = true;
};

inline const std::vector<ExperimentSchema>& experiments() {
  using nlohmann::json;
  static const std::vector<ExperimentSchema> list = {
      {"sample", "run one chain and write every state",
       {{"n", Kind::uint, 1000}, {"burn_in", Kind::uint, 0}, {"q0", Kind::numbers, json::array()},
        {"require", Kind::boolean, false}},
       true, true},
      {"trace-energy", "one leapfrog trajectory with energies",
       {{"q0", Kind::numbers, json()}, {"p0", Kind::numbers, json::array()},
        {"require", Kind::boolean, false}},
       false, true},
      {"horizon", "negative-energy horizon T~ across initial radii",
       {{"radii", Kind::numbers, json::array({10.0, 1e2, 1e3, 1e4})},
        {"t_max", Kind::integer, 15},
        {"p_norm", Kind::number, 1.0},
        {"require", Kind::boolean, false}},
       false, false},
      {"tail-accept", "fraction of proposals with dH <= 0 at |q| = r, |p| <= r^gamma",
       {{"radii", Kind::numbers, json::array({1e2, 1e3, 1e4})},
        {"gamma", Kind::number, 0.25},
        {"n_momenta", Kind::integer, 1000},
        {"require", Kind::boolean, false}},
       false, true},
      {"drift", "Monte Carlo estimate of K V_a / V_a over an a grid",
       {{"a_grid", Kind::numbers, default_a_grid()},
        {"radii", Kind::numbers, json::array({10.0, 1e2, 1e3})},
        {"n_momenta", Kind::integer, 1000},
        {"require", Kind::boolean, false}},
       false, true},
      {"rejection-mass", "rejected proposals landing in the V_a sublevel set",
       {{"a", Kind::number, 0.1},
        {"radii", Kind::numbers, json::array({10.0, 1e2, 1e3, 1e4})},
        {"n_momenta", Kind::integer, 10000},
        {"max_ratio", Kind::number, 0.1},
        {"require", Kind::boolean, false}},
       false, true},
      {"smallset", "position-map coverage and minorization constant on a ball",
       {{"R", Kind::number, json()},
        {"M", Kind::number, json()},
        {"grid_n", Kind::integer, 64},
        {"n_growth_samples", Kind::integer, 4096},
        {"require", Kind::boolean, false}},
       false, true},
      {"tv-decay", "binned total variation to the target over iterations",
       {{"q0", Kind::numbers, json()},
        {"iterations", Kind::integers, range(0, 30)},
        {"n_chains", Kind::integer, 1000},
        {"start", Kind::string, "point"},
        {"bins", Kind::integer, 0},
        {"replications", Kind::integer, 200},
        {"require", Kind::boolean, false}},
       true, true},
      {"check-assumptions", "numerical probes of the A1 / A2 growth conditions",
       {{"assumption", Kind::string, json()},
        {"parameter", Kind::number, json()},
        {"radii", Kind::numbers, default_radii()},
        {"n_samples", Kind::integer, 64},
        {"allow_fd_fallback", Kind::boolean, true},
        {"require", Kind::boolean, false}},
       false, false},
      {"decompose-energy", "six-term one-step energy decomposition on random states",
       {{"n_states", Kind::integer, 100},
        {"scale", Kind::number, 1.0},
        {"q0", Kind::numbers, json::array()},
        {"p0", Kind::numbers, json::array()},
        {"quad_nodes", Kind::integer, 32},
        {"tolerance", Kind::number, 1e-9},
        {"require", Kind::boolean, false}},
       false, false},
  };
  return list;
}

inline const ExperimentSchema* find(const std::string& name) {
  for (const auto& e : experiments())
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace schema

namespace detail {

inline nlohmann::json json_null() { return nullptr; }

inline std::optional<FamilyConfig> parse_potential(const nlohmann::json& t, int& dim,
                                                   nlohmann::json& echo,
                                                   std::vector<std::string>& errors) {
  using schema::Field;
  using schema::Kind;
  if (!t.is_object()) {
    errors.push_back("potential must be a table");
    return std::nullopt;
  }
  if (!t.contains("variant") || !t["variant"].is_string()) {
    errors.push_back("missing required key 'potential.variant' (a string)");
    return std::nullopt;
  }
  const std::string variant = t["variant"].get<std::string>();
  const int default_dim = variant == "power" ? 2 : 1;
  std::vector<Field> fields = {{"variant", Kind::string, json_null()},
                               {"dim", Kind::integer, default_dim}};
  if (variant == "gaussian") fields.push_back({"precision", Kind::numbers, nlohmann::json::array()});
  else if (variant == "power") {
    fields.push_back({"delta", Kind::number, 1.0});
    fields.push_back({"kappa", Kind::number, 0.75});
  } else if (variant == "homogeneous_perturbed") {
    fields.push_back({"m", Kind::number, 1.5});
    fields.push_back({"perturbation", Kind::number, 0.5});
    fields.push_back({"blend_radius", Kind::number, 5.0});
  } else if (variant == "double_well") {
    fields.push_back({"scale", Kind::number, 1.0});
  } else if (variant != "flat") {
    errors.push_back("potential.variant must be one of gaussian, power, homogeneous_perturbed, "
                     "double_well, flat (got '" + variant + "')");
    return std::nullopt;
  }
  const std::size_t before = errors.size();
  echo = schema::apply(t, "potential", fields, errors);
  if (errors.size() != before) return std::nullopt;

  dim = echo["dim"].get<int>();
  FamilyConfig cfg;
  cfg.dim = dim;
  if (variant == "gaussian") cfg.variant = GaussianFamily{echo["precision"].get<std::vector<double>>()};
  else if (variant == "power") cfg.variant = PowerFamily{echo["delta"], echo["kappa"]};
  else if (variant == "homogeneous_perturbed")
    cfg.variant = HomogeneousPerturbedFamily{echo["m"], echo["perturbation"], echo["blend_radius"]};
  else if (variant == "double_well") cfg.variant = DoubleWellFamily{echo["scale"]};
  else {
    if (dim < 1) errors.push_back("potential.dim must be >= 1");
    return std::nullopt;
  }
  for (auto& e : validate(cfg)) errors.push_back(std::move(e));
  return cfg;
}

/// [kernel] as h/T, as [[kernel.schedule]] entries, or as the indexed
/// weights/step_sizes form.
inline std::optional<KernelSpec> parse_kernel(const nlohmann::json& t,
                                              const schema::ExperimentSchema& exp,
                                              nlohmann::json& echo,
                                              std::vector<std::string>& errors) {
  using schema::Field;
  using schema::Kind;
  if (!t.is_object()) {
    errors.push_back("kernel must be a table");
    return std::nullopt;
  }
  const bool scheduled = t.contains("schedule") || t.contains("weights") || t.contains("step_sizes");
  if (scheduled && !exp.accepts_schedule) {
    errors.push_back("kernel.schedule is not supported by experiment '" + exp.name +
                     "' (only sample and tv-decay)");
    return std::nullopt;
  }
  const std::size_t before = errors.size();
  if (!scheduled) {
    nlohmann::json T_default = exp.needs_T ? json_null() : nlohmann::json(1);
    echo = schema::apply(t, "kernel", {{"h", Kind::number, json_null()}, {"T", Kind::integer, T_default}},
                         errors);
    if (errors.size() != before) return std::nullopt;
    LeapfrogConfig cfg{echo["h"].get<double>(), echo["T"].get<int>()};
    if (!(cfg.h > 0.0) || !std::isfinite(cfg.h)) errors.push_back("kernel.h must be > 0");
    if (cfg.T < 1) errors.push_back("kernel.T must be >= 1");
    return KernelSpec{cfg};
  }

  RandomizedSchedule s;
  if (t.contains("schedule")) {
    for (const auto& [k, v] : t.items())
      if (k != "schedule") errors.push_back("unknown key 'kernel." + k + "'");
    const auto& arr = t["schedule"];
    if (!arr.is_array() || arr.empty()) {
      errors.push_back("kernel.schedule must be a nonempty array of tables");
      return std::nullopt;
    }
    echo = {{"schedule", nlohmann::json::array()}};
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "kernel.schedule[" + std::to_string(i) + "]";
      if (!arr[i].is_object()) {
        errors.push_back(where + " must be a table");
        continue;
      }
      const auto e = schema::apply(arr[i], where,
                                   {{"weight", Kind::number, json_null()},
                                    {"h", Kind::number, json_null()},
                                    {"T", Kind::integer, json_null()}},
                                   errors);
      if (e.size() == 3) s.entries.push_back({e["weight"], e["h"], e["T"]});
      echo["schedule"].push_back(e);
    }
  } else {
    echo = schema::apply(t, "kernel",
                         {{"weights", Kind::numbers, json_null()},
                          {"step_sizes", Kind::numbers, json_null()}},
                         errors);
    if (errors.size() != before) return std::nullopt;
    const auto w = echo["weights"].get<std::vector<double>>();
    const auto h = echo["step_sizes"].get<std::vector<double>>();
    if (w.size() != h.size()) {
      errors.push_back("kernel.weights and kernel.step_sizes must have the same length");
      return std::nullopt;
    }
    s = RandomizedSchedule::indexed(w, h);
  }
  if (errors.size() != before) return std::nullopt;
  for (auto& e : s.errors()) errors.push_back(std::move(e));
  return KernelSpec{s};
}

inline void check_radii(const nlohmann::json& p, const std::string& path,
                        std::vector<std::string>& errors) {
  if (!p.contains("radii")) return;
  const auto r = p["radii"].get<std::vector<double>>();
  if (r.empty()) errors.push_back(path + ".radii must be nonempty");
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(r[i] > 0.0) || !std::isfinite(r[i])) {
      errors.push_back(path + ".radii must be positive and finite");
      break;
    }
    if (i > 0 && !(r[i] > r[i - 1])) {
      errors.push_back(path + ".radii must be strictly increasing");
      break;
    }
  }
}

inline void check_vector(const nlohmann::json& p, const char* key, const std::string& path, int dim,
                         bool allow_empty, std::vector<std::string>& errors) {
  if (!p.contains(key) || !p[key].is_array()) return;
  const std::size_t n = p[key].size();
  if (n == 0 && allow_empty) return;
  if (static_cast<int>(n) != dim)
    errors.push_back(path + "." + key + " must have " + std::to_string(dim) + " entries (potential.dim)");
}

inline void check_min(const nlohmann::json& p, const char* key, const std::string& path, long lo,
                      std::vector<std::string>& errors) {
  if (p.contains(key) && p[key].is_number_integer() && p[key].get<long long>() < lo)
    errors.push_back(path + "." + key + " must be >= " + std::to_string(lo));
}

/// Range rules for the per-experiment tables that can be checked without
/// running anything.
inline void check_params(const std::string& exp, const nlohmann::json& p, int dim,
                         const std::optional<FamilyConfig>& family,
                         std::vector<std::string>& errors) {
  const std::string path = exp;
  check_radii(p, path, errors);
  if (exp == "sample") {
    check_min(p, "n", path, 1, errors);
    check_vector(p, "q0", path, dim, true, errors);
  } else if (exp == "trace-energy") {
    check_vector(p, "q0", path, dim, false, errors);
    check_vector(p, "p0", path, dim, true, errors);
  } else if (exp == "horizon") {
    check_min(p, "t_max", path, 1, errors);
    if (p.contains("p_norm") && !(p["p_norm"].get<double>() >= 0.0))
      errors.push_back(path + ".p_norm must be >= 0");
  } else if (exp == "tail-accept") {
    check_min(p, "n_momenta", path, 100, errors);
    if (p.contains("gamma")) {
      const double g = p["gamma"];
      std::optional<double> m;
      if (family) m = build_family(*family).homogeneity;
      if (!m) errors.push_back("tail-accept needs a potential with a homogeneity exponent m");
      else if (!(g >= 0.0 && g < *m - 1.0))
        errors.push_back("tail.gamma must lie in [0, m-1) = [0, " + format_double(*m - 1.0) + ")");
    }
  } else if (exp == "drift" || exp == "rejection-mass") {
    check_min(p, "n_momenta", path, 2, errors);
    if (p.contains("a_grid")) {
      const auto a = p["a_grid"].get<std::vector<double>>();
      if (a.empty()) errors.push_back(path + ".a_grid must be nonempty");
      for (double x : a)
        if (!(x > 0.0)) {
          errors.push_back(path + ".a_grid entries must be > 0");
          break;
        }
    }
    if (p.contains("a") && !(p["a"].get<double>() > 0.0)) errors.push_back(path + ".a must be > 0");
  } else if (exp == "smallset") {
    if (p.contains("R") && !(p["R"].get<double>() > 0.0)) errors.push_back(path + ".R must be > 0");
    if (p.contains("M") && !(p["M"].get<double>() > 0.0)) errors.push_back(path + ".M must be > 0");
    check_min(p, "grid_n", path, 2, errors);
    check_min(p, "n_growth_samples", path, 64, errors);
  } else if (exp == "tv-decay") {
    if (dim != 1 && dim != 2) errors.push_back("tv-decay supports potential.dim 1 or 2 only");
    check_vector(p, "q0", path, dim, false, errors);
    check_min(p, "n_chains", path, 1000, errors);
    check_min(p, "bins", path, 0, errors);
    check_min(p, "replications", path, 1, errors);
    if (p.contains("iterations")) {
      if (p["iterations"].empty()) errors.push_back(path + ".iterations must be nonempty");
      for (const auto& it : p["iterations"])
        if (it.get<long long>() < 0) {
          errors.push_back(path + ".iterations must be >= 0");
          break;
        }
    }
    if (p.contains("start") && p["start"] != "point" && p["start"] != "stationary")
      errors.push_back(path + ".start must be \"point\" or \"stationary\"");
  } else if (exp == "check-assumptions") {
    check_min(p, "n_samples", path, 1, errors);
    if (p.contains("assumption") && p["assumption"] != "A1" && p["assumption"] != "A2")
      errors.push_back(path + ".assumption must be \"A1\" or \"A2\"");
    if (p.contains("assumption") && p.contains("parameter")) {
      const double x = p["parameter"];
      if (p["assumption"] == "A1" && !(x >= 0.0 && x <= 1.0))
        errors.push_back(path + ".parameter (beta) must lie in [0, 1] for A1");
      if (p["assumption"] == "A2" && !(x > 1.0 && x <= 2.0))
        errors.push_back(path + ".parameter (m) must lie in (1, 2] for A2");
    }
  } else if (exp == "decompose-energy") {
    check_min(p, "n_states", path, 1, errors);
    check_min(p, "quad_nodes", path, 8, errors);
    check_vector(p, "q0", path, dim, true, errors);
    check_vector(p, "p0", path, dim, true, errors);
    if (p.contains("q0") && p.contains("p0") && p["q0"].empty() != p["p0"].empty())
      errors.push_back(path + ".q0 and " + path + ".p0 must be given together");
    if (!family) errors.push_back("decompose-energy needs an analytic Hessian (not the flat potential)");
  }
}

}  // namespace detail

/// Full validation of a parsed config document. Throws ValidationError
/// listing every problem found.
inline ExperimentConfig validate_config(const nlohmann::json& doc) {
  std::vector<std::string> errors;
  ExperimentConfig cfg;
  if (!doc.is_object()) throw ValidationError({"config must be a table"});

  static const std::set<std::string> top = {"seed", "output_dir", "experiment", "potential",
                                            "kernel"};
  std::string exp_name;
  if (!doc.contains("experiment")) errors.push_back("missing required key 'experiment'");
  else if (!doc["experiment"].is_string()) errors.push_back("experiment must be a string");
  else exp_name = doc["experiment"].get<std::string>();
  const schema::ExperimentSchema* exp = exp_name.empty() ? nullptr : schema::find(exp_name);
  if (!exp_name.empty() && !exp) errors.push_back("unknown experiment '" + exp_name + "'");

  for (const auto& [k, v] : doc.items()) {
    if (top.count(k)) continue;
    if (exp && k == exp->name) continue;
    errors.push_back("unknown key '" + k + "'");
  }

  if (!doc.contains("seed")) errors.push_back("missing required key 'seed' (a 64-bit unsigned integer)");
  else if (!doc["seed"].is_number_unsigned())
    errors.push_back("seed must be a 64-bit unsigned integer");
  else cfg.seed = doc["seed"].get<std::uint64_t>();

  if (!doc.contains("output_dir")) errors.push_back("missing required key 'output_dir'");
  else if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty())
    errors.push_back("output_dir must be a nonempty string");
  else cfg.output_dir = doc["output_dir"].get<std::string>();

  nlohmann::json potential_echo, kernel_echo, params;
  if (!doc.contains("potential")) errors.push_back("missing required key 'potential'");
  else cfg.family = detail::parse_potential(doc["potential"], cfg.dim, potential_echo, errors);

  if (exp) {
    if (!doc.contains("kernel")) errors.push_back("missing required key 'kernel'");
    else if (auto k = detail::parse_kernel(doc["kernel"], *exp, kernel_echo, errors)) cfg.kernel = *k;

    const nlohmann::json table = doc.contains(exp->name) ? doc[exp->name] : nlohmann::json::object();
    if (!table.is_object()) errors.push_back(exp->name + " must be a table");
    else {
      params = schema::apply(table, exp->name, exp->fields, errors);
      detail::check_params(exp->name, params, cfg.dim, cfg.family, errors);
    }
  }

  if (!errors.empty()) throw ValidationError(std::move(errors));
  cfg.experiment = exp->name;
  cfg.params = params;
  cfg.echo = {{"seed", cfg.seed},
              {"output_dir", cfg.output_dir},
              {"experiment", cfg.experiment},
              {"potential", potential_echo},
              {"kernel", kernel_echo},
              {cfg.experiment, params}};
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  return validate_config(toml::parse_file(path));
}

// ---------------------------------------------------------------------------
// Runner

struct RunOutcome {
  ExitCode code = ExitCode::ok;
  nlohmann::json summary;
  std::vector<std::string> files;  // relative to output_dir
};

namespace detail {

struct RunContext {
  const ExperimentConfig& cfg;
  const PotentialModel& model;
  Parallelism par;
  std::filesystem::path dir;
  std::vector<std::string> files;

  csv::Writer writer(const std::string& name, const std::vector<std::string>& header) {
    files.push_back(name);
    return csv::Writer((dir / name).string(), header);
  }

  const LeapfrogConfig& leapfrog() const { return std::get<LeapfrogConfig>(cfg.kernel); }
  const nlohmann::json& p() const { return cfg.params; }
};

struct ExperimentResult {
  nlohmann::json results;
  bool check_ok = true;      // the experiment's mandated invariant
  std::string check;         // what the invariant is
};

inline Vector vector_param(const nlohmann::json& v, int dim) {
  Vector out = Vector::Zero(dim);
  const auto xs = v.get<std::vector<double>>();
  for (std::size_t i = 0; i < xs.size(); ++i) out[static_cast<Eigen::Index>(i)] = xs[i];
  return out;
}

/// "10", "1000" for integral radii; %.17g otherwise.
inline std::string radius_tag(double r) {
  if (r == std::floor(r) && std::abs(r) < 1e15) return std::to_string(static_cast<long long>(r));
  return format_double(r);
}

inline ExperimentResult run_sample(RunContext& ctx) {
  const auto& p = ctx.p();
  const int d = ctx.model.dim;
  const std::size_t burn = p["burn_in"], n = p["n"];
  Stream rng = split(ctx.cfg.seed, 0);
  const ChainRun run = run_chain(ctx.model, vector_param(p["q0"], d), ctx.cfg.kernel, burn + n, rng);

  auto header = std::vector<std::string>{"iter", "accepted", "dh"};
  for (auto& h : csv::indexed("q", d)) header.push_back(h);
  auto w = ctx.writer("chain.csv", header);
  ChainRun kept = run;
  kept.samples.clear();
  kept.accepted.clear();
  kept.proposal_dh.clear();
  for (std::size_t i = burn; i < run.size(); ++i) {
    std::vector<std::string> row{csv::cell(i - burn), csv::cell(static_cast<bool>(run.accepted[i])),
                                 csv::cell(run.proposal_dh[i])};
    csv::append(row, run.samples[i]);
    w.row_fields(row);
    kept.samples.push_back(run.samples[i]);
    kept.accepted.push_back(run.accepted[i]);
    kept.proposal_dh.push_back(run.proposal_dh[i]);
  }
  if (run.error) throw NumericError("sample: " + *run.error);

  ExperimentResult r;
  r.results = {{"n", kept.size()},
               {"acceptance_rate", kept.acceptance_rate()},
               {"flagged_events", run.flagged_events}};
  try {
    r.results["chain"] = chain_diagnostics(kept);
  } catch (const InsufficientDataError& e) {
    r.results["chain"] = nullptr;
    r.results["chain_note"] = e.what();
  }
  r.check = "chain completed without integrator failures";
  return r;
}

inline ExperimentResult run_trace_energy(RunContext& ctx) {
  const auto& p = ctx.p();
  const int d = ctx.model.dim;
  const Vector q0 = vector_param(p["q0"], d);
  const Vector p0 = p["p0"].empty() ? orthogonal_unit(q0) : vector_param(p["p0"], d);
  const Trajectory traj = leapfrog_run(ctx.model, {q0, p0}, ctx.leapfrog());

  auto header = std::vector<std::string>{"k"};
  for (auto& h : csv::indexed("q", d)) header.push_back(h);
  for (auto& h : csv::indexed("p", d)) header.push_back(h);
  header.push_back("H");
  header.push_back("dH");
  auto w = ctx.writer("trajectory.csv", header);
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    std::vector<std::string> row{csv::cell(k)};
    csv::append(row, traj.states[k].q);
    csv::append(row, traj.states[k].p);
    row.push_back(csv::cell(traj.energy[k]));
    row.push_back(csv::cell(traj.energy[k] - traj.energy[0]));
    w.row_fields(row);
  }
  ExperimentResult r;
  const double dh = traj.energy.back() - traj.energy.front();
  r.results = {{"steps", traj.steps()}, {"H0", traj.energy.front()}, {"dH", dh}};
  r.check_ok = std::isfinite(dh);
  r.check = "final energy error is finite";
  return r;
}

inline ExperimentResult run_horizon(RunContext& ctx) {
  const auto& p = ctx.p();
  const int d = ctx.model.dim;
  const auto radii = p["radii"].get<std::vector<double>>();
  const int t_max = p["t_max"];
  const double p_norm = p["p_norm"];
  const double h = ctx.leapfrog().h;

  auto table = ctx.writer("horizon.csv", {"radius", "T_tilde"});
  nlohmann::json rows = nlohmann::json::array();
  std::vector<int> horizons;
  for (double r : radii) {
    Vector q0 = Vector::Zero(d);
    q0[0] = r;
    const HorizonTrace tr = horizon_trace(ctx.model, q0, p_norm * orthogonal_unit(q0), h, t_max);
    table.row(r, tr.t_tilde);
    auto w = ctx.writer("energy_trace_r" + radius_tag(r) + ".csv", {"k", "H_k_minus_H_0"});
    for (std::size_t k = 0; k < tr.dh_from_start.size(); ++k) w.row(k, tr.dh_from_start[k]);
    horizons.push_back(tr.t_tilde);
    rows.push_back({{"radius", r}, {"T_tilde", tr.t_tilde}});
  }
  ExperimentResult res;
  res.check_ok = std::is_sorted(horizons.begin(), horizons.end());
  res.check = "T_tilde nondecreasing in the radius";
  res.results = {{"h", h}, {"t_max", t_max}, {"p_norm", p_norm}, {"points", rows},
                 {"nondecreasing", res.check_ok}};
  return res;
}

inline ExperimentResult run_tail(RunContext& ctx) {
  const auto& p = ctx.p();
  const auto prof = tail_acceptance(ctx.model, ctx.leapfrog(), p["radii"].get<std::vector<double>>(),
                                    p["gamma"], p["n_momenta"], ctx.cfg.seed, ctx.par);
  auto w = ctx.writer("tail_accept.csv",
                      {"radius", "n_momenta", "n_ok", "n_errors", "fraction", "worst_dh"});
  for (const auto& pt : prof.points)
    w.row(pt.radius, pt.n_momenta, pt.n_ok, pt.n_errors, pt.fraction, pt.worst_dh);
  ExperimentResult r;
  r.results = prof;
  const auto& last = prof.points.back();
  r.check_ok = last.fraction == 1.0 && last.n_errors == 0;
  r.check = "every proposal at the largest radius has dH <= 0";
  return r;
}

inline ExperimentResult run_drift(RunContext& ctx) {
  const auto& p = ctx.p();
  const auto scan = drift_estimate(ctx.model, ctx.leapfrog(), p["a_grid"].get<std::vector<double>>(),
                                   p["radii"].get<std::vector<double>>(), p["n_momenta"],
                                   ctx.cfg.seed, ctx.par);
  auto w = ctx.writer("drift.csv", {"a", "radius", "ratio", "stderr", "log_ratio", "n_pairs",
                                    "n_errors", "ok"});
  for (const auto& rep : scan.reports)
    for (const auto& pt : rep.points)
      w.row(rep.a, pt.radius, pt.ratio, pt.stderr_, pt.log_ratio, pt.n_pairs, pt.n_errors, pt.ok);
  auto fit = ctx.writer("drift_fit.csv", {"a", "lambda_hat", "b_hat"});
  for (const auto& rep : scan.reports) fit.row(rep.a, rep.lambda_hat, rep.b_hat);
  ExperimentResult r;
  r.results = scan;
  r.check_ok = scan.drift_detected();
  r.check = "some a has ratio + 3 stderr < 1 at the largest radius";
  return r;
}

inline ExperimentResult run_rejection(RunContext& ctx) {
  const auto& p = ctx.p();
  const auto pts = rejection_mass(ctx.model, ctx.leapfrog(), p["a"],
                                  p["radii"].get<std::vector<double>>(), p["n_momenta"],
                                  ctx.cfg.seed, ctx.par);
  auto w = ctx.writer("rejection_mass.csv", {"radius", "mass", "stderr", "n", "n_errors"});
  for (const auto& pt : pts) w.row(pt.radius, pt.mass, pt.stderr_, pt.n, pt.n_errors);
  ExperimentResult r;
  const double ratio = pts.front().mass > 0.0 ? pts.back().mass / pts.front().mass : 0.0;
  const double max_ratio = p["max_ratio"];
  r.results = {{"a", p["a"]}, {"points", pts}, {"decay_ratio", ratio}};
  r.check_ok = pts.back().mass <= max_ratio * pts.front().mass;
  r.check = "mass at the largest radius <= max_ratio * mass at the smallest";
  return r;
}

inline ExperimentResult run_smallset(RunContext& ctx) {
  const auto& p = ctx.p();
  const auto probe = smallset_probe(ctx.model, ctx.leapfrog(), p["R"], p["M"], p["grid_n"],
                                    ctx.cfg.seed, p["n_growth_samples"]);
  auto w = ctx.writer("smallset.csv", {"R", "M", "M_tilde", "L_hat", "density_inf",
                                       "coverage_fraction", "epsilon_hat", "n_targets", "n_hits",
                                       "C0_hat", "C1_hat", "b"});
  w.row(probe.R, probe.M, probe.M_tilde, probe.L_hat, probe.density_inf, probe.coverage_fraction,
        probe.epsilon_hat, probe.n_targets, probe.n_hits, probe.growth.C0_hat, probe.growth.C1_hat,
        probe.growth.b);
  ExperimentResult r;
  r.results = probe;
  r.check_ok = probe.coverage_fraction == 1.0 && probe.epsilon_hat > 0.0;
  r.check = "full coverage and epsilon_hat > 0";
  return r;
}

inline ExperimentResult run_tv(RunContext& ctx) {
  const auto& p = ctx.p();
  TvOptions opt;
  opt.bins = p["bins"];
  opt.replications = p["replications"];
  opt.start = p["start"] == "stationary" ? TvStart::stationary : TvStart::point;
  const auto curve = tv_decay(ctx.model, ctx.cfg.kernel, vector_param(p["q0"], ctx.model.dim),
                              p["iterations"].get<std::vector<int>>(), p["n_chains"], ctx.cfg.seed,
                              opt, ctx.par);
  auto w = ctx.writer("tv_decay.csv", {"iteration", "tv_hat", "in_fit"});
  for (std::size_t i = 0; i < curve.iterations.size(); ++i) {
    const bool fit = std::find(curve.fit_indices.begin(), curve.fit_indices.end(),
                               static_cast<int>(i)) != curve.fit_indices.end();
    w.row(curve.iterations[i], curve.tv_hat[i], fit);
  }
  ExperimentResult r;
  r.results = curve;
  if (opt.start == TvStart::point) {
    r.check_ok = curve.rho_hat && *curve.rho_hat < 1.0 && curve.r2 >= 0.9;
    r.check = "rho_hat < 1 with R^2 >= 0.9";
  } else {
    r.check_ok = !curve.rho_hat;
    r.check = "no rate reported from a stationary start";
  }
  return r;
}

inline ExperimentResult run_assumptions(RunContext& ctx) {
  const auto& p = ctx.p();
  const auto radii = p["radii"].get<std::vector<double>>();
  const AssumptionReport rep =
      p["assumption"] == "A1"
          ? check_a1(ctx.model, p["parameter"], radii, p["n_samples"], ctx.cfg.seed)
          : check_a2(ctx.model, p["parameter"], radii, p["n_samples"], ctx.cfg.seed,
                     p["allow_fd_fallback"]);
  auto w = ctx.writer("assumptions.csv", {"condition", "radius", "ratio", "pass"});
  for (const auto& c : rep.conditions)
    for (std::size_t i = 0; i < c.per_radius.size() && i < radii.size(); ++i)
      w.row(c.id, radii[i], c.per_radius[i], c.pass);
  ExperimentResult r;
  r.results = rep;
  r.check_ok = rep.passed();
  r.check = "every condition passes";
  return r;
}

inline ExperimentResult run_decompose(RunContext& ctx) {
  const auto& p = ctx.p();
  const int d = ctx.model.dim;
  std::vector<PhaseState> states;
  if (!p["q0"].empty()) {
    states.push_back({vector_param(p["q0"], d), vector_param(p["p0"], d)});
  } else {
    Stream rng = split(derive_seed(ctx.cfg.seed, 0xDE), 0);
    const double scale = p["scale"];
    for (int i = 0; i < p["n_states"].get<int>(); ++i) {
      Vector q = scale * rng.normal_vector(d);
      Vector mom = rng.normal_vector(d);
      states.push_back({q, mom});
    }
  }
  const double h = ctx.leapfrog().h;
  auto header = std::vector<std::string>{"state"};
  for (auto& s : csv::indexed("q", d)) header.push_back(s);
  for (auto& s : csv::indexed("p", d)) header.push_back(s);
  for (auto& s : csv::indexed("term", 6)) header.push_back(s);
  for (const char* s : {"total", "direct", "residual"}) header.push_back(s);
  auto w = ctx.writer("energy_decomposition.csv", header);

  double worst = 0.0;
  bool all_ok = true;
  nlohmann::json first;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto e = energy_decomposition(ctx.model, states[i], h, p["quad_nodes"], p["tolerance"]);
    std::vector<std::string> row{csv::cell(i)};
    csv::append(row, states[i].q);
    csv::append(row, states[i].p);
    for (double t : e.terms) row.push_back(csv::cell(t));
    for (double x : {e.total, e.direct, e.residual}) row.push_back(csv::cell(x));
    w.row_fields(row);
    worst = std::max(worst, e.residual);
    all_ok = all_ok && e.within_tolerance();
    if (i == 0) first = e;
  }
  ExperimentResult r;
  r.results = {{"h", h}, {"n_states", states.size()}, {"max_residual", worst}, {"first", first}};
  r.check_ok = all_ok;
  r.check = "every residual within tolerance";
  return r;
}

inline ExperimentResult dispatch(RunContext& ctx) {
  static const std::map<std::string, std::function<ExperimentResult(RunContext&)>> table = {
      {"sample", run_sample},         {"trace-energy", run_trace_energy},
      {"horizon", run_horizon},       {"tail-accept", run_tail},
      {"drift", run_drift},           {"rejection-mass", run_rejection},
      {"smallset", run_smallset},     {"tv-decay", run_tv},
      {"check-assumptions", run_assumptions}, {"decompose-energy", run_decompose}};
  return table.at(ctx.cfg.experiment)(ctx);
}

}  // namespace detail

/// Runs the configured experiment and writes its CSVs and summary.json into
/// cfg.output_dir. Numeric failures map to exit 3; a failed invariant with
/// require = true maps to exit 4.
inline RunOutcome run_experiment(const ExperimentConfig& cfg, Parallelism par = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  RunOutcome out;
  nlohmann::json& s = out.summary;
  s = {{"version", version},
       {"experiment", cfg.experiment},
       {"inputs", cfg.echo},
       {"workers", par.workers}};
  const PotentialModel model = cfg.model();
  detail::RunContext ctx{cfg, model, par, dir, {}};
  try {
    const auto res = detail::dispatch(ctx);
    s["results"] = res.results;
    s["check"] = {{"description", res.check}, {"passed", res.check_ok},
                  {"required", cfg.params["require"]}};
    if (res.results.contains("acceptance_rate")) s["acceptance_rate"] = res.results["acceptance_rate"];
    const bool required = cfg.params["require"].get<bool>();
    out.code = (!res.check_ok && required) ? ExitCode::assertion : ExitCode::ok;
    s["status"] = out.code == ExitCode::ok ? "ok" : "check_failed";
  } catch (const NumericError& e) {
    out.code = ExitCode::numeric;
    s["status"] = "numeric_error";
    s["error"] = e.what();
    s["error_step"] = e.step();
  } catch (const ConfigError& e) {
    out.code = ExitCode::validation;
    s["status"] = "config_error";
    s["error"] = e.what();
  }
  out.files = ctx.files;
  s["outputs"] = out.files;
  s["exit_code"] = static_cast<int>(out.code);
  s["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ofstream f(dir / "summary.json", std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + (dir / "summary.json").string() + "'");
  f << s.dump(2) << '\n';
  return out;
}

}  // namespace hmc_lab
