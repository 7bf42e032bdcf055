#include "kalbucy/normalizing_constant.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

#include "kalbucy/errors.hpp"

namespace kalbucy {

namespace {

Eigen::Index grid_index_of(double t, double dt, const char* what) {
  const double k = t / dt;
  const double rounded = std::round(k);
  if (std::abs(k - rounded) > 1e-9 * std::max(1.0, std::abs(k))) {
    throw std::invalid_argument(std::string("log_nc_from_means: ") + what +
                                " is not on the level grid");
  }
  return static_cast<Eigen::Index>(rounded);
}

MatrixXd slice_columns(const MatrixXd& all, Eigen::Index& offset, int count) {
  if (offset + count > all.cols()) {
    throw DimensionError("ml_log_nc: initial ensemble smaller than the plan's total particles");
  }
  MatrixXd out = all.middleCols(offset, count);
  offset += count;
  return out;
}

}  // namespace

double log_nc_from_means(const MatrixXd& means, const ObservationPath& obs,
                         const FilterModel& model, int level, double t_start, double t_end) {
  if (obs.level() < level) {
    throw std::invalid_argument("log_nc_from_means: observations are coarser than the level");
  }
  if (means.rows() != model.dim_x()) throw DimensionError("log_nc_from_means: mean dimension");
  if (obs.dim_y() != model.dim_y()) throw DimensionError("log_nc_from_means: observation dimension");
  const ObservationPath path = obs.level() == level ? obs : obs.coarsened(level);
  const double dt = path.dt();
  if (t_end < t_start) throw std::invalid_argument("log_nc_from_means: t_end before t_start");
  const Eigen::Index k0 = grid_index_of(t_start, dt, "t_start");
  const Eigen::Index k1 = grid_index_of(t_end, dt, "t_end");
  if (k0 < 0 || k1 > path.steps()) {
    throw std::invalid_argument("log_nc_from_means: window outside the observation path");
  }
  if (means.cols() < k1) {
    throw std::invalid_argument("log_nc_from_means: mean trajectory shorter than the window");
  }
  const MatrixXd& gain = model.obs_gain_factor();  // C^T R2^{-1}
  const MatrixXd& s = model.obs_information();
  double total = 0.0;
  for (Eigen::Index k = k0; k < k1; ++k) {
    const auto m = means.col(k);
    total += m.dot(gain * path.increments().col(k)) - 0.5 * dt * m.dot(s * m);
  }
  return total;
}

double log_nc_from_means(const MatrixXd& means, const ObservationPath& obs,
                         const FilterModel& model, int level) {
  return log_nc_from_means(means, obs, model, level, 0.0, obs.horizon());
}

LogNcEstimate ml_log_nc(const FilterModel& model, std::span<const double> theta,
                        const ObservationPath& obs, const LevelPlan& plan, Variant variant,
                        const TaperMatrix* taper, const RandomStream& stream,
                        const MlNcOptions& options) {
  if (obs.level() < plan.target_level()) {
    throw std::invalid_argument("ml_log_nc: observations are coarser than the target level");
  }
  const int l0 = plan.start_level();
  Eigen::Index offset = 0;
  FilterOptions fopts;
  fopts.record_covariances = false;

  LogNcEstimate est;
  est.level = plan.target_level();
  est.particles = plan.total_particles();

  const RandomStream base_stream = stream.derive("level", l0);
  FilterRun base;
  if (options.initial != nullptr) {
    const MatrixXd init = slice_columns(*options.initial, offset, plan.particles_at(l0));
    base = run_filter_from(variant, model, theta, obs, init, l0, taper, base_stream, fopts);
  } else {
    base = run_filter(variant, model, theta, obs, plan.particles_at(l0), l0, taper, base_stream,
                      fopts);
  }
  est.base = log_nc_from_means(base.means, obs, model, l0);
  est.total_cost = static_cast<double>(base.particle_steps);

  for (int l = l0 + 1; l <= plan.target_level(); ++l) {
    CoupledRunOptions copts;
    copts.record_means = true;
    MatrixXd init;
    if (options.initial != nullptr) {
      init = slice_columns(*options.initial, offset, plan.particles_at(l));
      copts.initial = &init;
    }
    const CoupledPairResult pair = coupled_pair_run(model, theta, obs, l, plan.particles_at(l),
                                                    variant, taper, stream.derive("level", l),
                                                    copts);
    est.per_level_increments.push_back(log_nc_from_means(pair.fine_means, obs, model, l) -
                                       log_nc_from_means(pair.coarse_means, obs, model, l - 1));
    est.total_cost += pair.cost;
  }
  est.log_value = est.base;
  for (double inc : est.per_level_increments) est.log_value += inc;
  if (!std::isfinite(est.log_value)) throw NumericalError("ml_log_nc: non-finite estimate");
  return est;
}

double log_nc_ratio(const FilterModel& model, const ObservationPath& window,
                    std::span<const double> theta, const LevelPlan& plan, Variant variant,
                    const TaperMatrix* taper, const RandomStream& stream,
                    const MlNcOptions& options) {
  if (std::abs(window.horizon() - 1.0) > 1e-12) {
    throw std::invalid_argument("log_nc_ratio: observation window must have unit length");
  }
  return ml_log_nc(model, theta, window, plan, variant, taper, stream, options).log_value;
}

double innovations_log_likelihood(const FilterModel& model, const ObservationPath& obs, int level,
                                  std::span<const double> theta) {
  if (!model.is_linear()) {
    throw std::invalid_argument("innovations_log_likelihood: model must be linear");
  }
  if (obs.level() < level) {
    throw std::invalid_argument("innovations_log_likelihood: observations are coarser than level");
  }
  const ObservationPath path = obs.level() == level ? obs : obs.coarsened(level);
  const double dt = path.dt();
  const Eigen::Index dx = model.dim_x();
  const MatrixXd transition = MatrixXd::Identity(dx, dx) + dt * model.drift_matrix(theta);
  const MatrixXd& c = model.obs_matrix();
  const MatrixXd noise_cov = dt * model.obs_noise_cov();
  const Eigen::LLT<MatrixXd> noise_llt(noise_cov);

  VectorXd m = model.init_mean();
  MatrixXd p = model.init_cov();
  double total = 0.0;
  for (Eigen::Index k = 0; k < path.steps(); ++k) {
    const VectorXd dy = path.increments().col(k);
    const VectorXd pred = dt * (c * m);
    const MatrixXd cp = dt * (c * p);
    const MatrixXd innov_cov = symmetrize(dt * cp * c.transpose() + noise_cov);
    const Eigen::LLT<MatrixXd> llt(innov_cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("innovations_log_likelihood: innovation covariance not positive definite");
    }
    const VectorXd e = dy - pred;
    const double log_det = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const double log_det0 = 2.0 * MatrixXd(noise_llt.matrixL()).diagonal().array().log().sum();
    total += -0.5 * (log_det - log_det0) - 0.5 * e.dot(llt.solve(e)) +
             0.5 * dy.dot(noise_llt.solve(dy));
    // Update with dY_k, then propagate one Euler step.
    const MatrixXd gain = llt.solve(cp).transpose();
    m += gain * e;
    p = symmetrize(p - gain * cp);
    m = transition * m;
    p = symmetrize(transition * p * transition.transpose() + dt * model.signal_noise_cov());
  }
  return total;
}

}  // namespace kalbucy
