#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kalbucy/linalg.hpp"
#include "kalbucy/localization.hpp"
#include "kalbucy/models.hpp"
#include "kalbucy/random.hpp"

namespace kalbucy {

// vanilla: perturbed observations; deterministic: innovation against the
// midpoint (xi + m)/2, no observation perturbation; transport: no random
// increments at all.
enum class Variant { vanilla, deterministic, transport };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view name);

struct Ensemble {
  MatrixXd particles;  // dim_x x N, column i is particle i
  int level = 0;
  Eigen::Index time_index = 0;

  [[nodiscard]] int size() const { return static_cast<int>(particles.cols()); }
  [[nodiscard]] double dt() const;
};

struct Moments {
  VectorXd mean;
  MatrixXd cov;
};

// Mean with 1/N, covariance with 1/(N-1). Requires N >= 2.
Moments sample_moments(const MatrixXd& particles);
inline Moments sample_moments(const Ensemble& ens) { return sample_moments(ens.particles); }

// Step functions advance every particle by one Euler step of size
// 2^-ens.level. `cov_used` is the covariance entering the gain (the sample
// covariance, or its localized version). Noise matrices hold increments that
// are already N(0, dt) distributed: `signal_increments` is dim_x x N,
// `obs_increments` is dim_y x N.
Ensemble step_vanilla(const Ensemble& ens, const VectorXd& obs_increment,
                      const FilterModel& model, std::span<const double> theta,
                      const MatrixXd& cov_used, const MatrixXd& signal_increments,
                      const MatrixXd& obs_increments);
Ensemble step_vanilla(const Ensemble& ens, const VectorXd& obs_increment,
                      const FilterModel& model, std::span<const double> theta,
                      const MatrixXd& cov_used, RandomStream& rng);

Ensemble step_deterministic(const Ensemble& ens, const VectorXd& obs_increment,
                            const FilterModel& model, std::span<const double> theta,
                            const MatrixXd& cov_used, const MatrixXd& signal_increments);
Ensemble step_deterministic(const Ensemble& ens, const VectorXd& obs_increment,
                            const FilterModel& model, std::span<const double> theta,
                            const MatrixXd& cov_used, RandomStream& rng);

// The transport term is (1/2) R1 (P + jitter I)^{-1} (xi - m) dt. A negative
// jitter selects the default 1e-8 trace(P) / dim_x. Throws
// SingularCovarianceError when the regularized covariance cannot be factorized.
Ensemble step_transport(const Ensemble& ens, const VectorXd& obs_increment,
                        const FilterModel& model, std::span<const double> theta,
                        const MatrixXd& cov_used, double jitter = -1.0);

double default_transport_jitter(const MatrixXd& cov);

struct FilterOptions {
  bool record_covariances = true;
  // Logs a warning whenever a localized covariance has an eigenvalue below
  // -1e-8. Costs one eigen-decomposition per step.
  bool check_localized_psd = false;
  double transport_jitter = -1.0;
};

struct FilterRun {
  int level = 0;
  MatrixXd means;              // dim_x x (steps + 1)
  std::vector<MatrixXd> covs;  // sample covariances, when recorded
  Ensemble final;
  std::uint64_t particle_steps = 0;

  [[nodiscard]] std::vector<Moments> moments() const;
};

// Runs one EnKBF over the whole observation path at `level` (finer paths
// are coarsened). Initial particles are drawn from stream.derive("init");
// signal and observation perturbations from stream.derive("ensembleW") and
// stream.derive("ensembleV").
FilterRun run_filter(Variant variant, const FilterModel& model, std::span<const double> theta,
                     const ObservationPath& obs, int n, int level, const TaperMatrix* taper,
                     const RandomStream& stream, const FilterOptions& options = {});

// As above, starting from the given particles instead of drawing them.
FilterRun run_filter_from(Variant variant, const FilterModel& model,
                          std::span<const double> theta, const ObservationPath& obs,
                          const MatrixXd& initial, int level, const TaperMatrix* taper,
                          const RandomStream& stream, const FilterOptions& options = {});

namespace detail {

// In-place step shared by the public steppers and the run loops. `mean` is
// the sample mean of `x`; `cov_used` the (possibly localized) covariance.
void advance(Variant variant, MatrixXd& x, const VectorXd& mean, const MatrixXd& cov_used,
             const Eigen::Ref<const VectorXd>& obs_increment, const FilterModel& model,
             std::span<const double> theta, double dt, const MatrixXd* signal_increments,
             const MatrixXd* obs_increments, double jitter);

// Sample moments followed by the optional Schur product.
Moments gain_moments(const MatrixXd& x, const TaperMatrix* taper);

}  // namespace detail

}  // namespace kalbucy
