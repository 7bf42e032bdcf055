#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kalbucy/enkbf.hpp"
#include "kalbucy/localization.hpp"
#include "kalbucy/models.hpp"
#include "kalbucy/parameter_estimation.hpp"

namespace kalbucy::harness {

// Invalid configuration text or values. line() is 1-based, 0 when the
// problem is not tied to a line (e.g. a missing section).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line);
  [[nodiscard]] int line() const { return line_; }

 private:
  int line_;
};

// Line-oriented "[section]" / "key = value" text; '#' starts a comment.
class RawConfig {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static RawConfig parse(const std::string& text);
  static RawConfig load(const std::string& path);

  [[nodiscard]] bool has_section(const std::string& section) const;
  [[nodiscard]] int section_line(const std::string& section) const;
  [[nodiscard]] const Entry* find(const std::string& section, const std::string& key) const;
  [[nodiscard]] const std::map<std::string, std::map<std::string, Entry>>& sections() const {
    return sections_;
  }
  // Sections and keys in sorted order, one "section.key=value" per line;
  // comments and spacing do not affect it.
  [[nodiscard]] std::string canonical() const;

 private:
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::map<std::string, int> section_lines_;
};

enum class ExperimentKind { variance_decay, mse_cost, nc_complexity, param_est, single_run };
std::string to_string(ExperimentKind kind);

enum class ModelKind { grid, scalar, lorenz96 };

struct ModelConfig {
  ModelKind kind = ModelKind::grid;
  GridModelSettings grid;
  ScalarModelSettings scalar;
  Lorenz96Settings lorenz96;
  std::vector<double> theta;  // true parameter; empty for linear models without theta
  double aux_d = 1.4;
};

enum class LocalizationMode { off, on, both };

struct FilterConfig {
  std::vector<Variant> variants{Variant::vanilla};
  LocalizationMode localization = LocalizationMode::off;
  TaperSpec taper;
  int start_level = 1;
  int level_min = 4;  // variance_decay
  int level_max = 8;
  int level = 6;      // single_run
  int particles = 100;
  std::vector<double> epsilons;
  // Explicit plan (param_est); target_level < 0 means unset.
  int target_level = -1;
  std::vector<int> plan_particles;
  int reference_offset = 3;        // grid NC reference level L + offset
  int reference_particles = 10000;
};

struct RunConfig {
  int horizon = 1;
  int repeats = 1;
  std::uint64_t seed = 1;
  std::string output = "results";
  int workers = 1;
};

struct ParamConfig {
  std::vector<double> theta0;
  int iterations = 1;
  StepSchedules schedules;
  int seeds = 1;
  // Methods as (variant, localized) pairs, e.g. F1, L-F1, F2, L-F2.
  std::vector<std::pair<Variant, bool>> methods;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::single_run;
  std::string name = "experiment";
  ModelConfig model;
  FilterConfig filter;
  RunConfig run;
  ParamConfig param;
  std::uint64_t config_hash = 0;

  [[nodiscard]] FilterModel build_model() const;
  // Localization flags to sweep, in output order.
  [[nodiscard]] std::vector<bool> localization_flags() const;
};

ExperimentConfig parse_experiment_config(const RawConfig& raw);
ExperimentConfig load_experiment_config(const std::string& path);

std::string method_name(Variant variant, bool localized);
std::pair<Variant, bool> parse_method(const std::string& name);

}  // namespace kalbucy::harness
