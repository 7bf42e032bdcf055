#pragma once

#include <span>
#include <vector>

#include "kalbucy/linalg.hpp"
#include "kalbucy/models.hpp"

namespace kalbucy {

struct KbfState {
  VectorXd mean;
  MatrixXd cov;
  double time = 0.0;
};

// Kalman-Bucy mean and Riccati covariance on the grid t_k = k 2^-level.
struct KbfTrajectory {
  int level = 0;
  MatrixXd means;              // dim_x x (steps + 1)
  std::vector<MatrixXd> covs;  // steps + 1 entries

  [[nodiscard]] double dt() const;
  [[nodiscard]] Eigen::Index steps() const { return means.cols() - 1; }
  [[nodiscard]] KbfState state(Eigen::Index k) const;
  [[nodiscard]] std::vector<KbfState> states() const;
};

// Ricc(P) = A P + P A^T - P S P + R1.
MatrixXd riccati_drift(const MatrixXd& cov, const FilterModel& model,
                       std::span<const double> theta = {});

// Euler scheme on the Kalman-Bucy/Riccati pair:
//   M <- M + A M dt + P C^T R2^{-1} (dY - C M dt)
//   P <- sym(P + Ricc(P) dt), eigenvalues below -1e-8 clipped to 0.
// Observations finer than `level` are coarsened; coarser ones are rejected.
KbfTrajectory kbf_solve(const FilterModel& model, const ObservationPath& obs, int level,
                        std::span<const double> theta = {});

}  // namespace kalbucy
