#include "kalbucy/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <string>

#include "kalbucy/errors.hpp"

namespace kalbucy {

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

MatrixXd psd_sqrt(const MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) throw DimensionError("psd_sqrt: matrix is not square");
  if (m.size() == 0) return m;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol * scale) {
      throw NumericalError("psd_sqrt: matrix has eigenvalue " + std::to_string(ev(i)));
    }
    ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd spd_inverse(const MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("spd_inverse: matrix is not square");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  const VectorXd& ev = es.eigenvalues();
  if (ev.size() > 0 && !(ev.minCoeff() > 0.0)) {
    throw NumericalError("spd_inverse: matrix is not positive definite");
  }
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

double min_eigenvalue(const MatrixXd& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_symmetric(const MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

LinearMap::LinearMap(MatrixXd dense) : dense_(std::move(dense)) {
  zero_ = dense_.size() == 0 || dense_.isZero(0.0);
  if (dense_.rows() == dense_.cols()) {
    MatrixXd off = dense_;
    off.diagonal().setZero();
    diagonal_ = off.isZero(0.0);
    if (diagonal_) diag_ = dense_.diagonal();
  }
}

MatrixXd LinearMap::apply(const MatrixXd& x) const {
  if (x.rows() != cols()) throw DimensionError("LinearMap::apply: shape mismatch");
  if (diagonal_) return diag_.asDiagonal() * x;
  return dense_ * x;
}

void LinearMap::apply_add(const MatrixXd& x, double alpha, MatrixXd& out) const {
  if (x.rows() != cols() || out.rows() != rows() || out.cols() != x.cols()) {
    throw DimensionError("LinearMap::apply_add: shape mismatch");
  }
  if (zero_) return;
  if (diagonal_) {
    out.noalias() += (alpha * diag_).asDiagonal() * x;
  } else {
    out.noalias() += alpha * (dense_ * x);
  }
}

}  // namespace kalbucy
