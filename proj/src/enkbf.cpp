#include "kalbucy/enkbf.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "kalbucy/errors.hpp"
#include "kalbucy/log.hpp"

namespace kalbucy {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::vanilla: return "vanilla";
    case Variant::deterministic: return "deterministic";
    case Variant::transport: return "transport";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "vanilla" || name == "F1") return Variant::vanilla;
  if (name == "deterministic" || name == "F2") return Variant::deterministic;
  if (name == "transport" || name == "F3") return Variant::transport;
  throw std::invalid_argument("unknown EnKBF variant '" + std::string(name) + "'");
}

double Ensemble::dt() const { return std::ldexp(1.0, -level); }

Moments sample_moments(const MatrixXd& particles) {
  const Eigen::Index n = particles.cols();
  if (n < 2) throw std::invalid_argument("sample_moments: need at least two particles");
  Moments m;
  m.mean = particles.rowwise().sum() / static_cast<double>(n);
  const MatrixXd centered = particles.colwise() - m.mean;
  m.cov = MatrixXd(particles.rows(), particles.rows());
  m.cov.setZero();
  m.cov.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(n - 1));
  m.cov.triangularView<Eigen::StrictlyUpper>() = m.cov.transpose();
  return m;
}

double default_transport_jitter(const MatrixXd& cov) {
  return 1e-8 * cov.trace() / static_cast<double>(cov.rows());
}

namespace detail {

Moments gain_moments(const MatrixXd& x, const TaperMatrix* taper) {
  Moments m = sample_moments(x);
  if (taper != nullptr) m.cov = localize(m.cov, *taper);
  return m;
}

void advance(Variant variant, MatrixXd& x, const VectorXd& mean, const MatrixXd& cov_used,
             const Eigen::Ref<const VectorXd>& obs_increment, const FilterModel& model,
             std::span<const double> theta, double dt, const MatrixXd* signal_increments,
             const MatrixXd* obs_increments, double jitter) {
  const Eigen::Index n = x.cols();
  if (x.rows() != model.dim_x() || cov_used.rows() != model.dim_x() ||
      cov_used.cols() != model.dim_x() || mean.size() != model.dim_x()) {
    throw DimensionError("EnKBF step: state/covariance dimension mismatch");
  }
  if (obs_increment.size() != model.dim_y()) {
    throw DimensionError("EnKBF step: observation increment has wrong dimension");
  }
  if (signal_increments != nullptr &&
      (signal_increments->rows() != model.dim_x() || signal_increments->cols() != n)) {
    throw DimensionError("EnKBF step: signal increments must be dim_x x N");
  }
  if (obs_increments != nullptr &&
      (obs_increments->rows() != model.dim_y() || obs_increments->cols() != n)) {
    throw DimensionError("EnKBF step: observation perturbations must be dim_y x N");
  }

  // Innovation dY - C(.) dt, per particle.
  MatrixXd innovation(model.dim_y(), n);
  innovation.colwise() = obs_increment;
  if (variant == Variant::vanilla) {
    model.obs_map().apply_add(x, -dt, innovation);
    if (obs_increments != nullptr) model.obs_noise_sqrt().apply_add(*obs_increments, -1.0, innovation);
  } else {
    MatrixXd midpoint = x;
    midpoint.colwise() += mean;
    model.obs_map().apply_add(midpoint, -0.5 * dt, innovation);
  }

  MatrixXd delta;
  model.drift(x, theta, delta);
  delta *= dt;
  const MatrixXd gain = cov_used * model.obs_gain_factor();
  delta.noalias() += gain * innovation;

  if (variant == Variant::transport) {
    if (!model.signal_noise_sqrt().is_zero()) {
      const double j = jitter < 0.0 ? default_transport_jitter(cov_used) : jitter;
      MatrixXd reg = cov_used;
      reg.diagonal().array() += j;
      Eigen::LLT<MatrixXd> llt(reg);
      if (llt.info() != Eigen::Success) {
        throw SingularCovarianceError("step_transport: covariance is singular after jitter");
      }
      const VectorXd pivots = MatrixXd(llt.matrixL()).diagonal();
      if (!(pivots.minCoeff() > 1e-12 * std::max(1.0, pivots.maxCoeff()))) {
        throw SingularCovarianceError("step_transport: covariance is singular after jitter");
      }
      const MatrixXd centered = x.colwise() - mean;
      delta.noalias() += (0.5 * dt) * (model.signal_noise_cov() * llt.solve(centered));
    }
  } else if (signal_increments != nullptr) {
    model.signal_noise_sqrt().apply_add(*signal_increments, 1.0, delta);
  }
  x += delta;
}

}  // namespace detail

namespace {

Ensemble advanced_copy(Variant variant, const Ensemble& ens, const VectorXd& obs_increment,
                       const FilterModel& model, std::span<const double> theta,
                       const MatrixXd& cov_used, const MatrixXd* dw, const MatrixXd* dv,
                       double jitter) {
  Ensemble out = ens;
  const VectorXd mean = ens.particles.rowwise().mean();
  detail::advance(variant, out.particles, mean, cov_used, obs_increment, model, theta, ens.dt(),
                  dw, dv, jitter);
  ++out.time_index;
  return out;
}

}  // namespace

Ensemble step_vanilla(const Ensemble& ens, const VectorXd& obs_increment,
                      const FilterModel& model, std::span<const double> theta,
                      const MatrixXd& cov_used, const MatrixXd& signal_increments,
                      const MatrixXd& obs_increments) {
  return advanced_copy(Variant::vanilla, ens, obs_increment, model, theta, cov_used,
                       &signal_increments, &obs_increments, -1.0);
}

Ensemble step_vanilla(const Ensemble& ens, const VectorXd& obs_increment,
                      const FilterModel& model, std::span<const double> theta,
                      const MatrixXd& cov_used, RandomStream& rng) {
  const double sq = std::sqrt(ens.dt());
  MatrixXd dw(model.dim_x(), ens.size());
  MatrixXd dv(model.dim_y(), ens.size());
  rng.fill_normal(dw, sq);
  rng.fill_normal(dv, sq);
  return step_vanilla(ens, obs_increment, model, theta, cov_used, dw, dv);
}

Ensemble step_deterministic(const Ensemble& ens, const VectorXd& obs_increment,
                            const FilterModel& model, std::span<const double> theta,
                            const MatrixXd& cov_used, const MatrixXd& signal_increments) {
  return advanced_copy(Variant::deterministic, ens, obs_increment, model, theta, cov_used,
                       &signal_increments, nullptr, -1.0);
}

Ensemble step_deterministic(const Ensemble& ens, const VectorXd& obs_increment,
                            const FilterModel& model, std::span<const double> theta,
                            const MatrixXd& cov_used, RandomStream& rng) {
  MatrixXd dw(model.dim_x(), ens.size());
  rng.fill_normal(dw, std::sqrt(ens.dt()));
  return step_deterministic(ens, obs_increment, model, theta, cov_used, dw);
}

Ensemble step_transport(const Ensemble& ens, const VectorXd& obs_increment,
                        const FilterModel& model, std::span<const double> theta,
                        const MatrixXd& cov_used, double jitter) {
  if (ens.size() < 2) throw std::invalid_argument("step_transport: need at least two particles");
  return advanced_copy(Variant::transport, ens, obs_increment, model, theta, cov_used, nullptr,
                       nullptr, jitter);
}

std::vector<Moments> FilterRun::moments() const {
  std::vector<Moments> out;
  out.reserve(static_cast<std::size_t>(means.cols()));
  for (Eigen::Index k = 0; k < means.cols(); ++k) {
    Moments m;
    m.mean = means.col(k);
    if (static_cast<std::size_t>(k) < covs.size()) m.cov = covs[static_cast<std::size_t>(k)];
    out.push_back(std::move(m));
  }
  return out;
}

FilterRun run_filter(Variant variant, const FilterModel& model, std::span<const double> theta,
                     const ObservationPath& obs, int n, int level, const TaperMatrix* taper,
                     const RandomStream& stream, const FilterOptions& options) {
  if (n < 2) throw std::invalid_argument("run_filter: need at least two particles");
  RandomStream init = stream.derive("init");
  const MatrixXd initial = model.sample_initial(n, init);
  return run_filter_from(variant, model, theta, obs, initial, level, taper, stream, options);
}

FilterRun run_filter_from(Variant variant, const FilterModel& model,
                          std::span<const double> theta, const ObservationPath& obs,
                          const MatrixXd& initial, int level, const TaperMatrix* taper,
                          const RandomStream& stream, const FilterOptions& options) {
  if (initial.cols() < 2) throw std::invalid_argument("run_filter: need at least two particles");
  if (initial.rows() != model.dim_x()) throw DimensionError("run_filter: initial ensemble shape");
  if (obs.level() < level) {
    throw std::invalid_argument("run_filter: observations are coarser than the filter level");
  }
  if (obs.dim_y() != model.dim_y()) throw DimensionError("run_filter: observation dimension");
  if (taper != nullptr && taper->dim() != model.dim_x()) {
    throw DimensionError("run_filter: taper dimension differs from dim_x");
  }
  const ObservationPath path = obs.level() == level ? obs : obs.coarsened(level);
  const double dt = path.dt();
  const double sq = std::sqrt(dt);
  const Eigen::Index steps = path.steps();
  const Eigen::Index n = initial.cols();

  RandomStream w_rng = stream.derive("ensembleW");
  RandomStream v_rng = stream.derive("ensembleV");

  FilterRun run;
  run.level = level;
  run.means.resize(model.dim_x(), steps + 1);
  MatrixXd x = initial;
  MatrixXd dw(model.dim_x(), n);
  MatrixXd dv(model.dim_y(), n);
  for (Eigen::Index k = 0; k <= steps; ++k) {
    Moments raw = sample_moments(x);
    run.means.col(k) = raw.mean;
    if (options.record_covariances) run.covs.push_back(raw.cov);
    if (k == steps) break;
    if (taper != nullptr) {
      raw.cov = localize(raw.cov, *taper);
      if (options.check_localized_psd) {
        const double lowest = min_eigenvalue(raw.cov);
        if (lowest < -1e-8) {
          std::ostringstream msg;
          msg << "run_filter: localized covariance has eigenvalue " << lowest << " at step " << k;
          log_warning(msg.str());
        }
      }
    }
    const MatrixXd* dw_ptr = nullptr;
    const MatrixXd* dv_ptr = nullptr;
    if (variant != Variant::transport) {
      w_rng.fill_normal(dw, sq);
      dw_ptr = &dw;
    }
    if (variant == Variant::vanilla) {
      v_rng.fill_normal(dv, sq);
      dv_ptr = &dv;
    }
    detail::advance(variant, x, raw.mean, raw.cov, path.increments().col(k), model, theta, dt,
                    dw_ptr, dv_ptr, options.transport_jitter);
    run.particle_steps += static_cast<std::uint64_t>(n);
  }
  if (!x.allFinite()) throw NumericalError("run_filter: ensemble became non-finite");
  run.final = Ensemble{std::move(x), level, steps};
  return run;
}

}  // namespace kalbucy
