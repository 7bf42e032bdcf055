#pragma once

#include <Eigen/Dense>

namespace kalbucy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd symmetrize(const MatrixXd& m);

// Principal square root of a symmetric positive-semidefinite matrix.
// Eigenvalues within `tol` below zero are treated as zero; anything more
// negative throws NumericalError.
MatrixXd psd_sqrt(const MatrixXd& m, double tol = 1e-10);

// Inverse of a symmetric positive-definite matrix. Throws NumericalError when
// the smallest eigenvalue is not strictly positive.
MatrixXd spd_inverse(const MatrixXd& m);

double min_eigenvalue(const MatrixXd& symmetric);

bool is_symmetric(const MatrixXd& m, double tol = 0.0);

// A linear map stored either densely or as a diagonal. Model matrices such as
// C, R1^{1/2} and R2^{1/2} are very often diagonal, and applying them to a
// dim x N ensemble is then O(dim N) instead of O(dim^2 N).
class LinearMap {
 public:
  LinearMap() = default;
  explicit LinearMap(MatrixXd dense);

  [[nodiscard]] Eigen::Index rows() const { return dense_.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return dense_.cols(); }
  [[nodiscard]] bool is_diagonal() const { return diagonal_; }
  [[nodiscard]] bool is_zero() const { return zero_; }
  [[nodiscard]] const MatrixXd& dense() const { return dense_; }

  // out = M x
  [[nodiscard]] MatrixXd apply(const MatrixXd& x) const;
  // out += alpha * M x
  void apply_add(const MatrixXd& x, double alpha, MatrixXd& out) const;

 private:
  MatrixXd dense_;
  VectorXd diag_;
  bool diagonal_ = false;
  bool zero_ = false;
};

}  // namespace kalbucy
