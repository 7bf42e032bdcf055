#pragma once

#include <span>
#include <vector>

#include "kalbucy/enkbf.hpp"
#include "kalbucy/multilevel.hpp"

namespace kalbucy {

// Sum over k of <C m_k, R2^{-1} dY_k> - (dt/2) <m_k, S m_k> on [t_start, t_end].
// Column k of `means` is the filter mean at time k 2^-level (the start of
// `obs`); `obs` may be finer than `level` and is coarsened. Both window ends
// must lie on the level grid.
double log_nc_from_means(const MatrixXd& means, const ObservationPath& obs,
                         const FilterModel& model, int level, double t_start, double t_end);

// Same sum over the whole observation path.
double log_nc_from_means(const MatrixXd& means, const ObservationPath& obs,
                         const FilterModel& model, int level);

// Log of the normalizing constant, never exponentiated.
struct LogNcEstimate {
  double log_value = 0.0;
  int level = 0;      // target level of the estimate
  int particles = 0;  // total particles over all levels
  double base = 0.0;
  std::vector<double> per_level_increments;  // levels l_* + 1, ..., L
  double total_cost = 0.0;
};

struct MlNcOptions {
  // dim_x x N_tot starting particles, split across levels in plan order:
  // the first N_{l_*} columns start the base run, the next N_{l_*+1} the
  // first coupled pair, and so on. Drawn from the prior when absent.
  const MatrixXd* initial = nullptr;
};

// Base-level estimate at l_* plus increments from coupled fine/coarse mean
// trajectories at l_* + 1, ..., L. Level l draws from stream.derive("level", l).
LogNcEstimate ml_log_nc(const FilterModel& model, std::span<const double> theta,
                        const ObservationPath& obs, const LevelPlan& plan, Variant variant,
                        const TaperMatrix* taper, const RandomStream& stream,
                        const MlNcOptions& options = {});

// log(Z_{t+1} / Z_t): the multilevel estimate over a unit observation window.
// `window` starts at local time 0 and has horizon 1.
double log_nc_ratio(const FilterModel& model, const ObservationPath& window,
                    std::span<const double> theta, const LevelPlan& plan, Variant variant,
                    const TaperMatrix* taper, const RandomStream& stream,
                    const MlNcOptions& options = {});

// Exact log-likelihood ratio of the increments dY_k against pure noise
// N(0, R2 dt) for the Euler-discretized linear model
//   X_{k+1} = (I + A dt) X_k + R1^{1/2} dW_k,  dY_k = C X_k dt + R2^{1/2} dV_k,
// computed from Kalman prediction errors.
double innovations_log_likelihood(const FilterModel& model, const ObservationPath& obs, int level,
                                  std::span<const double> theta = {});

}  // namespace kalbucy
