#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kalbucy/enkbf.hpp"
#include "kalbucy/localization.hpp"
#include "kalbucy/models.hpp"
#include "kalbucy/random.hpp"

namespace kalbucy {

// Levels l_*, ..., L with N_l particles at level l (Delta_l = 2^-l).
class LevelPlan {
 public:
  LevelPlan(int start_level, int target_level, std::vector<int> particles);

  [[nodiscard]] int start_level() const { return start_; }
  [[nodiscard]] int target_level() const { return target_; }
  [[nodiscard]] const std::vector<int>& particles() const { return particles_; }
  // N_l for l in [l_*, L].
  [[nodiscard]] int particles_at(int level) const;
  [[nodiscard]] int total_particles() const;
  [[nodiscard]] int level_count() const { return target_ - start_ + 1; }

  // Particle-steps per unit time: N_{l_*} / Delta_{l_*} for the base level
  // plus N_l (1/Delta_l + 1/Delta_{l-1}) for every coupled pair.
  [[nodiscard]] double cost_per_unit_time() const;

 private:
  int start_;
  int target_;
  std::vector<int> particles_;
};

// L = max(l_* + 1, ceil(log2(1/eps))), N_l = ceil(eps^-2 Delta_l (L - l_* + 1)),
// clamped below at 2.
LevelPlan allocate_levels(double epsilon, int start_level);

// Brownian increments for two fine steps and the coarse step they span.
struct CoupledIncrements {
  MatrixXd first;
  MatrixXd second;
  MatrixXd coarse;  // first + second
};

CoupledIncrements draw_coupled_increments(RandomStream& rng, Eigen::Index rows,
                                          Eigen::Index cols, double fine_dt);

struct CoupledPairResult {
  VectorXd fine_estimate;    // ensemble mean at T, level l
  VectorXd coarse_estimate;  // ensemble mean at T, level l - 1
  double cost = 0.0;         // particle-steps, both systems
  MatrixXd fine_means;       // dim_x x (K_l + 1), when requested
  MatrixXd coarse_means;     // dim_x x (K_{l-1} + 1), when requested
};

struct CoupledRunOptions {
  bool record_means = false;
  // Shared starting particles; drawn from the model prior when absent.
  const MatrixXd* initial = nullptr;
};

// Runs the fine (Delta_l) and coarse (Delta_{l-1}) ensembles side by side.
// Both start from the same particles, consume the same observation path and
// are driven by the same Brownian paths: the coarse increment of particle i
// is the sum of the two fine increments of particle i. Initial particles use
// stream.derive("init"), Brownian increments stream.derive("ensembleW") and
// stream.derive("ensembleV").
CoupledPairResult coupled_pair_run(const FilterModel& model, std::span<const double> theta,
                                   const ObservationPath& obs, int level, int n,
                                   Variant variant, const TaperMatrix* taper,
                                   const RandomStream& stream,
                                   const CoupledRunOptions& options = {});

struct MlEstimate {
  VectorXd value;
  VectorXd base;
  std::vector<VectorXd> per_level_increments;  // levels l_* + 1, ..., L
  double total_cost = 0.0;
};

// Telescoping sum: base run at l_* plus independent coupled pairs at
// l_* + 1, ..., L. Level l draws from stream.derive("level", l).
MlEstimate ml_run(const FilterModel& model, std::span<const double> theta,
                  const ObservationPath& obs, const LevelPlan& plan, Variant variant,
                  const TaperMatrix* taper, const RandomStream& stream);

// Produces an independent observation path for repeat r.
using ObservationGenerator = std::function<ObservationPath(int repeat)>;

// Monte-Carlo estimate of E||fine - coarse||^2 at level l, with a fresh
// observation path and fresh filter noise per repeat. Repeat r uses
// stream.derive("repeat", r).
double variance_of_increment(const FilterModel& model, std::span<const double> theta,
                             const ObservationGenerator& observations, int level, int n,
                             int repeats, Variant variant, const TaperMatrix* taper,
                             const RandomStream& stream);

}  // namespace kalbucy
