#pragma once

#include <string_view>

#include "kalbucy/linalg.hpp"
#include "kalbucy/models.hpp"

namespace kalbucy {

enum class TaperKind { uniform, triangular, gaspari_cohn };

std::string_view to_string(TaperKind kind);
TaperKind parse_taper_kind(std::string_view name);

struct TaperSpec {
  TaperKind kind = TaperKind::gaspari_cohn;
  double radius = 1.0;
};

// phi_r(d) with u = d / r:
//   uniform      1 for u <= 1, else 0
//   triangular   max(1 - u, 0)
//   gaspari_cohn fifth-order piecewise rational, breakpoint at u = 1/2,
//                zero for u >= 1
// All kinds give 1 at d = 0 and 0 for d >= r (uniform: d > r).
double taper_value(const TaperSpec& spec, double distance);

// Gaspari-Cohn branches in u = d / r, exposed so both sides of the
// breakpoint can be evaluated directly.
double gaspari_cohn_inner(double u);
double gaspari_cohn_outer(double u);

// Pairwise distances between state components: Euclidean on the grid,
// circular index distance on the ring.
MatrixXd distance_matrix(const Geometry& geometry, int dim_x);

// Symmetric weights in [0, 1] with unit diagonal.
class TaperMatrix {
 public:
  explicit TaperMatrix(MatrixXd weights);

  [[nodiscard]] const MatrixXd& weights() const { return weights_; }
  [[nodiscard]] Eigen::Index dim() const { return weights_.rows(); }

 private:
  MatrixXd weights_;
};

// weights_ij = taper_value(spec, distances_ij). Logs a warning when the
// resulting matrix is not positive semidefinite, since then the Schur product
// with a covariance may lose definiteness.
TaperMatrix build_taper(const TaperSpec& spec, const MatrixXd& distances);

// Entrywise product cov .* taper.
MatrixXd localize(const MatrixXd& cov, const TaperMatrix& taper);

}  // namespace kalbucy
