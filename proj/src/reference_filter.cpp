#include "kalbucy/reference_filter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "kalbucy/errors.hpp"
#include "kalbucy/log.hpp"

namespace kalbucy {
namespace {

constexpr double kClipTolerance = 1e-8;

// Symmetrizes in place and removes eigenvalues below -kClipTolerance.
void enforce_psd(MatrixXd& p, double time) {
  p = symmetrize(p);
  Eigen::LLT<MatrixXd> llt(p + kClipTolerance * MatrixXd::Identity(p.rows(), p.cols()));
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(p);
  VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() >= -kClipTolerance) return;
  std::ostringstream msg;
  msg << "kbf_solve: clipping covariance eigenvalue " << ev.minCoeff() << " at t=" << time;
  log_warning(msg.str());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -kClipTolerance) ev(i) = 0.0;
  }
  p = symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

}  // namespace

double KbfTrajectory::dt() const { return std::ldexp(1.0, -level); }

KbfState KbfTrajectory::state(Eigen::Index k) const {
  return {means.col(k), covs.at(static_cast<std::size_t>(k)), static_cast<double>(k) * dt()};
}

std::vector<KbfState> KbfTrajectory::states() const {
  std::vector<KbfState> out;
  out.reserve(covs.size());
  for (Eigen::Index k = 0; k <= steps(); ++k) out.push_back(state(k));
  return out;
}

MatrixXd riccati_drift(const MatrixXd& p, const FilterModel& model,
                       std::span<const double> theta) {
  if (p.rows() != model.dim_x() || p.cols() != model.dim_x()) {
    throw DimensionError("riccati_drift: covariance has wrong shape");
  }
  const MatrixXd a = model.drift_matrix(theta);
  const MatrixXd ap = a * p;
  return ap + ap.transpose() - p * model.obs_information() * p + model.signal_noise_cov();
}

KbfTrajectory kbf_solve(const FilterModel& model, const ObservationPath& obs, int level,
                        std::span<const double> theta) {
  if (!model.is_linear()) throw std::invalid_argument("kbf_solve: model must be linear");
  if (obs.level() < level) {
    throw std::invalid_argument("kbf_solve: observations are coarser than the requested level");
  }
  if (obs.dim_y() != model.dim_y()) throw DimensionError("kbf_solve: observation dimension");
  const ObservationPath path = obs.level() == level ? obs : obs.coarsened(level);
  const double dt = path.dt();
  const Eigen::Index steps = path.steps();

  const MatrixXd a = model.drift_matrix(theta);
  const MatrixXd& c = model.obs_matrix();

  KbfTrajectory out;
  out.level = level;
  out.means.resize(model.dim_x(), steps + 1);
  out.covs.reserve(static_cast<std::size_t>(steps + 1));

  VectorXd m = model.init_mean();
  MatrixXd p = model.init_cov();
  out.means.col(0) = m;
  out.covs.push_back(p);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const MatrixXd gain = p * model.obs_gain_factor();
    const VectorXd innovation = path.increments().col(k) - c * m * dt;
    const VectorXd m_next = m + a * m * dt + gain * innovation;
    const MatrixXd ap = a * p;
    p += (ap + ap.transpose() - p * model.obs_information() * p + model.signal_noise_cov()) * dt;
    enforce_psd(p, static_cast<double>(k + 1) * dt);
    m = m_next;
    if (!m.allFinite() || !p.allFinite()) throw NumericalError("kbf_solve: non-finite state");
    out.means.col(k + 1) = m;
    out.covs.push_back(p);
  }
  return out;
}

}  // namespace kalbucy
