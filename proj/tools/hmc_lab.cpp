// hmc-lab: run, validate and list config-driven experiments.

#include "hmc_lab/io/experiment.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

namespace {

using hmc_lab::ExitCode;

int code(ExitCode c) { return static_cast<int>(c); }

unsigned workers_from_env(unsigned fallback) {
  const char* env = std::getenv("HMC_LAB_WORKERS");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0) {
    std::cerr << "warning: ignoring invalid HMC_LAB_WORKERS='" << env << "'\n";
    return fallback;
  }
  return static_cast<unsigned>(v);
}

int report_config_error(const hmc_lab::ConfigError& e) {
  if (const auto* v = dynamic_cast<const hmc_lab::ValidationError*>(&e)) {
    for (const auto& msg : v->errors()) std::cerr << "error: " << msg << '\n';
  } else {
    std::cerr << "error: " << e.what() << '\n';
  }
  return code(ExitCode::validation);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian Monte Carlo experiment runner"};
  app.set_version_flag("--version", hmc_lab::version);
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  unsigned workers = hmc_lab::Parallelism::hardware().workers;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("-w,--workers", workers, "worker threads (HMC_LAB_WORKERS overrides)")
      ->check(CLI::PositiveNumber);
  run->add_option("-o,--output-dir", output_dir, "override output_dir from the config");

  auto* validate = app.add_subcommand("validate", "check a config file and report every error");
  validate->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);

  auto* list = app.add_subcommand("list-experiments", "print the available experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : code(ExitCode::validation);
  }

  if (list->parsed()) {
    for (const auto& e : hmc_lab::schema::experiments())
      std::cout << e.name << "  " << e.description << '\n';
    return 0;
  }

  hmc_lab::ExperimentConfig cfg;
  try {
    cfg = hmc_lab::load_config(config_path);
  } catch (const hmc_lab::ConfigError& e) {
    return report_config_error(e);
  }

  if (validate->parsed()) {
    std::cout << "ok: " << cfg.experiment << " (seed " << cfg.seed << ")\n";
    return 0;
  }

  if (!output_dir.empty()) {
    cfg.output_dir = output_dir;
    cfg.echo["output_dir"] = output_dir;
  }
  const hmc_lab::Parallelism par{workers_from_env(workers)};
  try {
    const auto out = hmc_lab::run_experiment(cfg, par);
    const auto& s = out.summary;
    std::cout << cfg.experiment << ": " << s["status"].get<std::string>() << " -> "
              << cfg.output_dir << '\n';
    if (s.contains("error")) std::cerr << "error: " << s["error"].get<std::string>() << '\n';
    if (out.code == ExitCode::assertion)
      std::cerr << "check failed: " << s["check"]["description"].get<std::string>() << '\n';
    return code(out.code);
  } catch (const hmc_lab::ConfigError& e) {
    return report_config_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
