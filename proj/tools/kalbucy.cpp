#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "kalbucy/errors.hpp"
#include "kalbucy/harness/config.hpp"
#include "kalbucy/harness/csv.hpp"
#include "kalbucy/harness/experiments.hpp"
#include "kalbucy/log.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int run_command(const std::string& path, std::optional<long long> seed,
                std::optional<std::string> out_dir, std::optional<int> workers, bool quiet) {
  using namespace kalbucy;
  if (quiet) set_log_threshold(LogLevel::warning);
  harness::ExperimentConfig cfg = harness::load_experiment_config(path);
  if (seed) {
    if (*seed < 0) throw harness::ConfigError("--seed must be non-negative", 0);
    cfg.run.seed = static_cast<std::uint64_t>(*seed);
  }
  if (out_dir) cfg.run.output = *out_dir;
  const int n_workers = workers ? *workers : cfg.run.workers;
  if (n_workers < 1) throw harness::ConfigError("--workers must be at least 1", 0);

  const harness::CsvTable table = harness::run_experiment(cfg, n_workers);
  std::filesystem::create_directories(cfg.run.output);
  const std::string file = (std::filesystem::path(cfg.run.output) / (cfg.name + ".csv")).string();
  harness::write_csv_file(table, file);
  if (!quiet) std::cout << file << '\n';
  return kExitOk;
}

int validate_command(const std::string& path) {
  const auto cfg = kalbucy::harness::load_experiment_config(path);
  std::cout << path << ": ok (" << kalbucy::harness::to_string(cfg.kind) << ", name "
            << cfg.name << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel ensemble Kalman-Bucy filter experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KALBUCY_VERSION);

  std::string run_config;
  std::optional<long long> seed;
  std::optional<std::string> out_dir;
  std::optional<int> workers;
  bool quiet = false;
  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", run_config, "Experiment config file")->required();
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--workers", workers, "Worker threads");
  run->add_flag("--quiet", quiet, "Only print warnings and errors");

  std::string validate_config;
  CLI::App* validate = app.add_subcommand("validate", "Check a config file without running it");
  validate->add_option("config", validate_config, "Experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) return run_command(run_config, seed, out_dir, workers, quiet);
    if (validate->parsed()) return validate_command(validate_config);
  } catch (const kalbucy::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const kalbucy::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
