#include "hmc_lab/io/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hmc_lab;

namespace {

std::vector<std::string> errors_of(const std::string& text) {
  try {
    validate_config(toml::parse(text));
  } catch (const ValidationError& e) {
    return e.errors();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& xs, const std::string& needle) {
  for (const auto& x : xs)
    if (x.find(needle) != std::string::npos) return true;
  return false;
}

const char* kHorizon = R"(
seed = 3
output_dir = "OUT"
experiment = "horizon"
potential = { variant = "power", delta = 1.0, kappa = 0.75, dim = 2 }

[kernel]
h = 0.9
)";

std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Toml, ScalarsTablesAndArrays) {
  const auto j = toml::parse(R"(
# comment
a = 1
b = -2
c = 1.5e3
d = "x # not a comment"
e = 'lit'
f = [1, 2.5,
     3]   # trailing
g = { x = 1, y.z = true }
big = 18446744073709551615
[t.u]
v = inf
[[arr]]
k = 1
[[arr]]
k = 2
)");
  EXPECT_TRUE(j["a"].is_number_unsigned());
  EXPECT_EQ(j["b"].get<int>(), -2);
  EXPECT_DOUBLE_EQ(j["c"].get<double>(), 1500.0);
  EXPECT_EQ(j["d"], "x # not a comment");
  EXPECT_EQ(j["e"], "lit");
  EXPECT_EQ(j["f"].size(), 3u);
  EXPECT_EQ(j["g"]["y"]["z"], true);
  EXPECT_EQ(j["big"].get<std::uint64_t>(), 18446744073709551615ull);
  EXPECT_TRUE(std::isinf(j["t"]["u"]["v"].get<double>()));
  ASSERT_EQ(j["arr"].size(), 2u);
  EXPECT_EQ(j["arr"][1]["k"], 2);
}

TEST(Toml, ErrorsCarryLineAndColumn) {
  try {
    toml::parse("a = 1\nb = = 2\n");
    FAIL();
  } catch (const toml::ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("line 2, column"), std::string::npos);
  }
  EXPECT_THROW(toml::parse("a = 1\na = 2\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("[t]\n[t]\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("a = \"open\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("a = 1 b\n"), toml::ParseError);
  EXPECT_THROW(toml::parse("a = 99999999999999999999\n"), toml::ParseError);
}

TEST(Config, ValidHorizonFillsDefaults) {
  const auto cfg = validate_config(toml::parse(kHorizon));
  EXPECT_EQ(cfg.experiment, "horizon");
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.dim, 2);
  EXPECT_EQ(cfg.params["radii"].size(), 4u);
  EXPECT_EQ(cfg.params["t_max"], 15);
  EXPECT_EQ(cfg.echo["potential"]["kappa"], 0.75);
}

TEST(Config, KappaOutOfRange) {
  const auto errs = errors_of(R"(
seed = 1
output_dir = "o"
experiment = "horizon"
potential = { variant = "power", kappa = 1.5 }
[kernel]
h = 0.9
)");
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0], "power.kappa must lie in (0.5, 1]");
}

TEST(Config, MissingSeedIsNamed) {
  const auto errs = errors_of(R"(
output_dir = "o"
experiment = "horizon"
potential = { variant = "power" }
[kernel]
h = 0.9
)");
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_TRUE(any_contains(errs, "'seed'"));
}

TEST(Config, WeightsMustSumToOne) {
  const auto errs = errors_of(R"(
seed = 1
output_dir = "o"
experiment = "sample"
potential = { variant = "gaussian" }
[kernel]
weights = [0.5, 0.4]
step_sizes = [0.1, 0.2]
)");
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_TRUE(any_contains(errs, "sum a_i = 1"));
}

TEST(Config, EveryErrorReportedAtOnce) {
  const auto errs = errors_of(R"(
output_dir = "o"
experiment = "sample"
typo = 1
potential = { variant = "power", kappa = 2.0, colour = "red" }
[kernel]
h = -1
T = 0
[sample]
n = 0
nn = 3
)");
  EXPECT_TRUE(any_contains(errs, "unknown key 'typo'"));
  EXPECT_TRUE(any_contains(errs, "unknown key 'potential.colour'"));
  EXPECT_TRUE(any_contains(errs, "unknown key 'sample.nn'"));
  EXPECT_TRUE(any_contains(errs, "'seed'"));
  EXPECT_TRUE(any_contains(errs, "kernel.h"));
  EXPECT_TRUE(any_contains(errs, "kernel.T"));
  EXPECT_TRUE(any_contains(errs, "sample.n must be >= 1"));
}

TEST(Config, ScheduleFormsAndRestrictions) {
  const auto cfg = validate_config(toml::parse(R"(
seed = 1
output_dir = "o"
experiment = "tv-decay"
potential = { variant = "gaussian" }
[[kernel.schedule]]
weight = 0.25
h = 0.5
T = 5
[[kernel.schedule]]
weight = 0.75
h = 0.2
T = 2
[tv-decay]
q0 = [10]
)"));
  ASSERT_TRUE(std::holds_alternative<RandomizedSchedule>(cfg.kernel));
  EXPECT_EQ(std::get<RandomizedSchedule>(cfg.kernel).entries.size(), 2u);

  const auto errs = errors_of(R"(
seed = 1
output_dir = "o"
experiment = "tail-accept"
potential = { variant = "power" }
[kernel]
weights = [1.0]
step_sizes = [0.1]
)");
  EXPECT_TRUE(any_contains(errs, "not supported by experiment 'tail-accept'"));
}

TEST(Config, TypeAndShapeErrors) {
  auto errs = errors_of(R"(
seed = -1
output_dir = "o"
experiment = "trace-energy"
potential = { variant = "gaussian", dim = 2 }
[kernel]
h = 0.1
T = "ten"
[trace-energy]
q0 = [1, 2, 3]
)");
  EXPECT_TRUE(any_contains(errs, "seed must be a 64-bit unsigned integer"));
  EXPECT_TRUE(any_contains(errs, "kernel.T must be an integer"));
  EXPECT_TRUE(any_contains(errs, "trace-energy.q0 must have 2 entries"));

  errs = errors_of(R"(
seed = 1
output_dir = "o"
experiment = "nope"
potential = { variant = "banana" }
)");
  EXPECT_TRUE(any_contains(errs, "unknown experiment 'nope'"));
  EXPECT_TRUE(any_contains(errs, "potential.variant must be one of"));
}

TEST(Config, TailGammaRange) {
  const auto errs = errors_of(R"(
seed = 1
output_dir = "o"
experiment = "tail-accept"
potential = { variant = "power", kappa = 0.75 }
[kernel]
h = 0.9
T = 10
[tail-accept]
gamma = 0.6
)");
  EXPECT_TRUE(any_contains(errs, "tail.gamma must lie in [0, m-1)"));
}

TEST(Report, JsonMapsNonFiniteToNull) {
  TvDecayCurve c;
  c.iterations = {0, 1};
  c.tv_hat = {1.0, std::numeric_limits<double>::quiet_NaN()};
  c.reason = "too few points";
  const auto j = nlohmann::json::parse(nlohmann::json(c).dump());
  EXPECT_TRUE(j["tv_hat"][1].is_null());
  EXPECT_TRUE(j["rho_hat"].is_null());
  EXPECT_EQ(j["reason"], "too few points");
  EXPECT_EQ(j["start"], "point");
}

TEST(Run, HorizonWritesTraceFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "hmc_lab_test_io_horizon";
  std::filesystem::remove_all(dir);
  auto cfg = validate_config(toml::parse(kHorizon));
  cfg.output_dir = dir.string();
  const auto out = run_experiment(cfg);
  EXPECT_EQ(out.code, ExitCode::ok);
  const std::string table = read(dir / "horizon.csv");
  EXPECT_EQ(table.rfind("radius,T_tilde\n10,", 0), 0u);
  for (const char* r : {"10", "100", "1000", "10000"})
    EXPECT_TRUE(std::filesystem::exists(dir / (std::string("energy_trace_r") + r + ".csv")));
  const auto summary = nlohmann::json::parse(read(dir / "summary.json"));
  EXPECT_EQ(summary["status"], "ok");
  EXPECT_EQ(summary["inputs"]["seed"], 3);
  EXPECT_EQ(summary["outputs"].size(), 5u);
  std::filesystem::remove_all(dir);
}

TEST(Run, FailedRequireGivesExitFour) {
  const auto dir = std::filesystem::temp_directory_path() / "hmc_lab_test_io_require";
  std::filesystem::remove_all(dir);
  auto cfg = validate_config(toml::parse(R"(
seed = 1
output_dir = "o"
experiment = "check-assumptions"
potential = { variant = "double_well", dim = 2 }
[kernel]
h = 0.1
[check-assumptions]
assumption = "A1"
parameter = 1.0
require = true
)"));
  cfg.output_dir = dir.string();
  EXPECT_EQ(run_experiment(cfg).code, ExitCode::assertion);
  std::filesystem::remove_all(dir);
}

TEST(Run, NumericFailureGivesExitThree) {
  const auto dir = std::filesystem::temp_directory_path() / "hmc_lab_test_io_numeric";
  std::filesystem::remove_all(dir);
  // The double well overflows along a trajectory started far out with a large step.
  auto cfg = validate_config(toml::parse(R"(
seed = 1
output_dir = "o"
experiment = "trace-energy"
potential = { variant = "double_well" }
[kernel]
h = 1.0
T = 50
[trace-energy]
q0 = [1e3]
)"));
  cfg.output_dir = dir.string();
  const auto out = run_experiment(cfg);
  EXPECT_EQ(out.code, ExitCode::numeric);
  EXPECT_EQ(out.summary["status"], "numeric_error");
  std::filesystem::remove_all(dir);
}
