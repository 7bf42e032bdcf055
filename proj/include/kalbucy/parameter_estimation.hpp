#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kalbucy/enkbf.hpp"
#include "kalbucy/multilevel.hpp"
#include "kalbucy/normalizing_constant.hpp"

namespace kalbucy {

// a_t = a0 (t+1)^-alpha, b_t = b0 (t+1)^-gamma.
struct StepSchedules {
  double a0 = 0.5;
  double alpha = 0.602;
  double b0 = 0.1;
  double gamma = 0.101;

  // Throws std::invalid_argument unless a0, b0 > 0, alpha in (0.5, 1],
  // gamma > 0 and 2 (alpha - gamma) > 1.
  void validate() const;
  [[nodiscard]] double gain(int t) const;
  [[nodiscard]] double perturbation(int t) const;
};

// Independent +1/-1 signs with probability 1/2 each.
std::vector<double> spsa_perturbation(int dim_theta, RandomStream& rng);

// theta(k) + a (u_plus - u_minus) / (2 b psi(k)) for every coordinate.
std::vector<double> spsa_update(std::span<const double> theta, std::span<const double> psi,
                                double a, double b, double u_plus, double u_minus);

struct SpsaState {
  std::vector<double> theta;
  int iteration = 0;
  MatrixXd ensemble;  // dim_x x N_tot particles carried between windows
};

// Draws the carried ensemble from the model prior.
SpsaState initial_spsa_state(const FilterModel& model, std::vector<double> theta0,
                             const LevelPlan& plan, const RandomStream& stream);

struct SpsaStepRecord {
  int iteration = 0;  // t of the state before the step
  std::vector<double> theta_before;
  std::vector<double> theta_after;
  std::vector<double> psi;
  double u_plus = 0.0;
  double u_minus = 0.0;
  double a = 0.0;
  double b = 0.0;
  bool accepted = true;
  double cost = 0.0;  // particle-steps for both evaluations and the propagation
};

// One RML-SPSA iteration on the unit window:
//   psi ~ +-1, theta+- = theta +- b_{t+1} psi,
//   U+- = log_nc_ratio at theta+- started from the carried ensemble,
//   theta <- spsa_update(...), then the carried ensemble is advanced over
//   the window at the plan's target level under the new theta.
// Both U evaluations use stream.derive("nc") (common random numbers). A
// non-finite U rejects the update and logs a warning; the ensemble is still
// propagated under the unchanged theta.
SpsaState spsa_step(const SpsaState& state, const ObservationPath& window,
                    const FilterModel& model, const StepSchedules& schedules,
                    const LevelPlan& plan, Variant variant, const TaperMatrix* taper,
                    const RandomStream& stream, SpsaStepRecord* record = nullptr);

// Observation window t covers [t, t+1].
using WindowSource = std::function<ObservationPath(int t)>;

struct RmlResult {
  std::vector<std::vector<double>> thetas;  // theta_0, ..., theta_M
  std::vector<SpsaStepRecord> steps;
  double total_cost = 0.0;
};

// Iteration t uses stream.derive("iteration", t); the initial ensemble uses
// stream.derive("ensemble0").
RmlResult rml_run(const FilterModel& model, const WindowSource& windows,
                  std::vector<double> theta0, const StepSchedules& schedules,
                  const LevelPlan& plan, int iterations, Variant variant,
                  const TaperMatrix* taper, const RandomStream& stream);

// Mean and sample variance of coordinate `coord` of theta over the final
// quarter of the trace (at least one entry).
struct RunningSummary {
  double mean = 0.0;
  double variance = 0.0;
  int count = 0;
};
RunningSummary final_quarter_summary(const std::vector<std::vector<double>>& thetas,
                                     int coord = 0);

}  // namespace kalbucy
