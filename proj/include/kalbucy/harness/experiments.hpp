#pragma once

#include <span>
#include <string>
#include <vector>

#include "kalbucy/harness/config.hpp"
#include "kalbucy/harness/csv.hpp"
#include "kalbucy/multilevel.hpp"
#include "kalbucy/random.hpp"

namespace kalbucy::harness {

// Least-squares slope of y against x.
double fit_slope(std::span<const double> x, std::span<const double> y);

// Stream for one cell of an experiment; see RngStreamKey.
RandomStream experiment_stream(const ExperimentConfig& cfg, std::int64_t repeat,
                               std::int64_t level, std::int64_t block, StreamPurpose purpose);

struct VarianceDecayResult {
  struct Cell {
    int level = 0;
    Variant variant = Variant::vanilla;
    bool localized = false;
    double variance = 0.0;
    double cost = 0.0;  // particle-steps over all repeats
  };
  struct Slope {
    Variant variant = Variant::vanilla;
    bool localized = false;
    double slope = 0.0;  // log2 variance per level
  };
  std::vector<Cell> cells;
  std::vector<Slope> slopes;
  CsvTable table{{"level"}};
};

struct MseCostResult {
  struct Cell {
    double epsilon = 0.0;
    Variant variant = Variant::vanilla;
    bool localized = false;
    int start_level = 0;
    int target_level = 0;
    double mse = 0.0;
    double cost = 0.0;  // particle-steps of one estimate
    double max_telescoping_residual = 0.0;
  };
  struct Slope {
    Variant variant = Variant::vanilla;
    bool localized = false;
    double nominal = 0.0;   // log cost against log epsilon
    double realized = 0.0;  // log cost against log sqrt(mse)
  };
  std::vector<Cell> cells;
  std::vector<Slope> slopes;
  std::string reference;
  CsvTable table{{"epsilon"}};
};

struct ParamEstResult {
  struct Trace {
    Variant variant = Variant::vanilla;
    bool localized = false;
    int seed = 0;
    RmlResult rml;
  };
  std::vector<Trace> traces;
  CsvTable table{{"record"}};
};

struct SingleRunResult {
  FilterRun run;
  MatrixXd reference_means;  // empty for nonlinear models
  double log_nc = 0.0;
  CsvTable table{{"step"}};
};

VarianceDecayResult run_variance_decay(const ExperimentConfig& cfg, int workers);
// MSE of the multilevel mean at time T against the Kalman-Bucy mean at the
// plan's target level.
MseCostResult run_mse_cost(const ExperimentConfig& cfg, int workers);
// MSE of the multilevel log-normalizing constant against the innovations
// likelihood (one-dimensional linear models) or a fine single-level run.
MseCostResult run_nc_complexity(const ExperimentConfig& cfg, int workers);
ParamEstResult run_param_est(const ExperimentConfig& cfg, int workers);
SingleRunResult run_single(const ExperimentConfig& cfg);

CsvTable run_experiment(const ExperimentConfig& cfg, int workers);

}  // namespace kalbucy::harness
