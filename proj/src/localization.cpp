#include "kalbucy/localization.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "kalbucy/errors.hpp"
#include "kalbucy/log.hpp"

namespace kalbucy {

std::string_view to_string(TaperKind kind) {
  switch (kind) {
    case TaperKind::uniform: return "uniform";
    case TaperKind::triangular: return "triangular";
    case TaperKind::gaspari_cohn: return "gaspari_cohn";
  }
  return "unknown";
}

TaperKind parse_taper_kind(std::string_view name) {
  if (name == "uniform") return TaperKind::uniform;
  if (name == "triangular") return TaperKind::triangular;
  if (name == "gaspari_cohn" || name == "gc") return TaperKind::gaspari_cohn;
  throw std::invalid_argument("unknown taper kind '" + std::string(name) + "'");
}

double gaspari_cohn_inner(double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  return -8.0 * u3 * u2 + 8.0 * u2 * u2 + 5.0 * u3 - (20.0 / 3.0) * u2 + 1.0;
}

double gaspari_cohn_outer(double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (8.0 / 3.0) * u3 * u2 - 8.0 * u2 * u2 + 5.0 * u3 + (20.0 / 3.0) * u2 - 10.0 * u + 4.0 -
         1.0 / (3.0 * u);
}

double taper_value(const TaperSpec& spec, double distance) {
  if (!(spec.radius > 0.0)) throw std::invalid_argument("taper_value: radius must be positive");
  if (distance < 0.0 || std::isnan(distance)) {
    throw std::invalid_argument("taper_value: distance must be nonnegative");
  }
  const double u = distance / spec.radius;
  switch (spec.kind) {
    case TaperKind::uniform:
      return u <= 1.0 ? 1.0 : 0.0;
    case TaperKind::triangular:
      return std::max(1.0 - u, 0.0);
    case TaperKind::gaspari_cohn:
      if (u < 0.5) return gaspari_cohn_inner(u);
      if (u < 1.0) return std::clamp(gaspari_cohn_outer(u), 0.0, 1.0);
      return 0.0;
  }
  return 0.0;
}

MatrixXd distance_matrix(const Geometry& geometry, int dim_x) {
  if (dim_x <= 0) throw DimensionError("distance_matrix: dim_x must be positive");
  MatrixXd d = MatrixXd::Zero(dim_x, dim_x);
  switch (geometry.kind) {
    case Geometry::Kind::grid: {
      const int k = geometry.extent;
      if (k * k != dim_x) throw DimensionError("distance_matrix: grid needs dim_x = k^2");
      for (int p = 0; p < dim_x; ++p) {
        const auto [ip, jp] = grid_coords(p, k);
        for (int q = p + 1; q < dim_x; ++q) {
          const auto [iq, jq] = grid_coords(q, k);
          d(p, q) = d(q, p) = std::hypot(static_cast<double>(ip - iq), static_cast<double>(jp - jq));
        }
      }
      break;
    }
    case Geometry::Kind::ring: {
      if (geometry.extent != dim_x) throw DimensionError("distance_matrix: ring length != dim_x");
      for (int p = 0; p < dim_x; ++p) {
        for (int q = p + 1; q < dim_x; ++q) {
          const int gap = q - p;
          d(p, q) = d(q, p) = static_cast<double>(std::min(gap, dim_x - gap));
        }
      }
      break;
    }
    case Geometry::Kind::none:
      throw std::invalid_argument("distance_matrix: model has no geometry");
  }
  return d;
}

TaperMatrix::TaperMatrix(MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() != weights_.cols()) throw DimensionError("TaperMatrix: not square");
  if (!is_symmetric(weights_)) throw std::invalid_argument("TaperMatrix: not symmetric");
  if (weights_.size() > 0 &&
      (weights_.minCoeff() < 0.0 || weights_.maxCoeff() > 1.0)) {
    throw std::invalid_argument("TaperMatrix: weights outside [0, 1]");
  }
  if ((weights_.diagonal().array() != 1.0).any()) {
    throw std::invalid_argument("TaperMatrix: diagonal must be 1");
  }
}

TaperMatrix build_taper(const TaperSpec& spec, const MatrixXd& distances) {
  if (distances.rows() != distances.cols()) throw DimensionError("build_taper: not square");
  if (!is_symmetric(distances)) throw std::invalid_argument("build_taper: distances not symmetric");
  if ((distances.diagonal().array() != 0.0).any()) {
    throw std::invalid_argument("build_taper: distances need a zero diagonal");
  }
  MatrixXd w = distances.unaryExpr([&spec](double d) { return taper_value(spec, d); });
  TaperMatrix taper(std::move(w));
  const double lowest = min_eigenvalue(taper.weights());
  if (lowest < -1e-8) {
    std::ostringstream msg;
    msg << "build_taper: " << to_string(spec.kind) << " taper with radius " << spec.radius
        << " is not positive semidefinite (min eigenvalue " << lowest
        << "); localized covariances may be indefinite";
    log_warning(msg.str());
  }
  return taper;
}

MatrixXd localize(const MatrixXd& cov, const TaperMatrix& taper) {
  if (cov.rows() != taper.dim() || cov.cols() != taper.dim()) {
    throw DimensionError("localize: covariance and taper shapes differ");
  }
  return cov.cwiseProduct(taper.weights());
}

}  // namespace kalbucy
