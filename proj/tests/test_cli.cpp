// End-to-end runs of the hmc-lab executable.

#include "json.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "hmc_lab_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const auto p = workdir() / (name + ".toml");
  std::ofstream(p) << text;
  return p;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" HMC_LAB_CLI "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Concatenated CSV bytes of a run directory, in file name order.
std::string csv_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += f.filename().string() + "\n" + read(f);
  return out;
}

std::string config(const std::string& experiment, const std::string& body) {
  return "seed = 11\noutput_dir = \"unused\"\nexperiment = \"" + experiment + "\"\n" + body;
}

}  // namespace

TEST(Cli, ListAndValidate) {
  EXPECT_EQ(run("list-experiments"), 0);
  const auto good = write_config("good", config("sample", R"(
potential = { variant = "gaussian" }
[kernel]
h = 0.5
T = 5
)"));
  EXPECT_EQ(run("validate " + good.string()), 0);
  const auto bad = write_config("bad", config("sample", R"(
potential = { variant = "power", kappa = 1.5 }
[kernel]
h = 0.5
T = 5
)"));
  EXPECT_EQ(run("validate " + bad.string()), 2);
  EXPECT_EQ(run("run " + bad.string()), 2);
  const auto broken = write_config("broken", "seed = = 1\n");
  EXPECT_EQ(run("validate " + broken.string()), 2);
  EXPECT_EQ(run("run /nonexistent/config.toml"), 2);
}

TEST(Cli, HorizonRadiusGrid) {
  const auto cfg = write_config("horizon", config("horizon", R"(
potential = { variant = "power", delta = 1.0, kappa = 0.75, dim = 2 }
[kernel]
h = 0.9
[horizon]
radii = [10, 100, 1000, 10000]
require = true
)"));
  const auto out = workdir() / "horizon_out";
  ASSERT_EQ(run("run " + cfg.string() + " -o " + out.string()), 0);
  const auto rows = lines(read(out / "horizon.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "radius,T_tilde");
  int prev = -1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const int t = std::stoi(rows[i].substr(rows[i].find(',') + 1));
    EXPECT_GE(t, prev);
    prev = t;
  }
  EXPECT_EQ(lines(read(out / "energy_trace_r10000.csv"))[0], "k,H_k_minus_H_0");
}

TEST(Cli, SingleStepAcceptanceRate) {
  const auto cfg = write_config("one", config("sample", R"(
potential = { variant = "gaussian" }
[kernel]
h = 0.5
T = 5
[sample]
n = 1
q0 = [3.0]
)"));
  const auto out = workdir() / "one_out";
  ASSERT_EQ(run("run " + cfg.string() + " -o " + out.string()), 0);
  const auto s = nlohmann::json::parse(read(out / "summary.json"));
  const double a = s["acceptance_rate"];
  EXPECT_TRUE(a == 0.0 || a == 1.0);
  EXPECT_EQ(lines(read(out / "chain.csv")).size(), 2u);
}

TEST(Cli, RequireFailureExitsFour) {
  const auto cfg = write_config("dw", config("check-assumptions", R"(
potential = { variant = "double_well", dim = 2 }
[kernel]
h = 0.1
[check-assumptions]
assumption = "A1"
parameter = 1.0
require = true
)"));
  EXPECT_EQ(run("run " + cfg.string() + " -o " + (workdir() / "dw_out").string()), 4);
}

TEST(Cli, NumericFailureExitsThree) {
  const auto cfg = write_config("blowup", config("trace-energy", R"(
potential = { variant = "double_well" }
[kernel]
h = 1.0
T = 50
[trace-energy]
q0 = [1000.0]
)"));
  const auto out = workdir() / "blowup_out";
  EXPECT_EQ(run("run " + cfg.string() + " -o " + out.string()), 3);
  EXPECT_TRUE(fs::exists(out / "summary.json"));
}

TEST(Cli, ByteIdenticalAcrossRunsAndWorkers) {
  const auto cfg = write_config("tail", config("tail-accept", R"(
potential = { variant = "power", kappa = 0.75 }
[kernel]
h = 0.9
T = 10
[tail-accept]
radii = [100, 1000]
n_momenta = 600
)"));
  const auto a = workdir() / "tail_a", b = workdir() / "tail_b", c = workdir() / "tail_c";
  ASSERT_EQ(run("run " + cfg.string() + " -w 1 -o " + a.string()), 0);
  ASSERT_EQ(run("run " + cfg.string() + " -w 1 -o " + b.string()), 0);
  ASSERT_EQ(run("run " + cfg.string() + " -o " + c.string(), "HMC_LAB_WORKERS=8"), 0);
  const std::string ref = csv_bytes(a);
  EXPECT_FALSE(ref.empty());
  EXPECT_EQ(ref, csv_bytes(b));
  EXPECT_EQ(ref, csv_bytes(c));
  const auto s = nlohmann::json::parse(read(c / "summary.json"));
  EXPECT_EQ(s["workers"], 8);
}
