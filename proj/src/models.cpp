#include "kalbucy/models.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "kalbucy/errors.hpp"

namespace kalbucy {

FilterModel FilterModel::linear(MatrixXd drift, MatrixXd obs_matrix, MatrixXd signal_noise_sqrt,
                                MatrixXd obs_noise_sqrt, VectorXd init_mean, MatrixXd init_cov,
                                Geometry geometry) {
  if (drift.rows() != drift.cols() || drift.rows() == 0) {
    throw DimensionError("FilterModel: drift matrix must be square and non-empty");
  }
  FilterModel m;
  m.dim_x_ = static_cast<int>(drift.rows());
  m.linear_ = true;
  m.a_ = std::move(drift);
  m.finalize(std::move(obs_matrix), std::move(signal_noise_sqrt), std::move(obs_noise_sqrt),
             std::move(init_mean), std::move(init_cov), geometry);
  return m;
}

FilterModel FilterModel::nonlinear(int dim_x, DriftFunction drift, MatrixXd obs_matrix,
                                   MatrixXd signal_noise_sqrt, MatrixXd obs_noise_sqrt,
                                   VectorXd init_mean, MatrixXd init_cov, Geometry geometry) {
  if (dim_x <= 0) throw DimensionError("FilterModel: dim_x must be positive");
  if (!drift) throw std::invalid_argument("FilterModel: empty drift function");
  FilterModel m;
  m.dim_x_ = dim_x;
  m.linear_ = false;
  m.f_ = std::move(drift);
  m.finalize(std::move(obs_matrix), std::move(signal_noise_sqrt), std::move(obs_noise_sqrt),
             std::move(init_mean), std::move(init_cov), geometry);
  return m;
}

void FilterModel::finalize(MatrixXd obs_matrix, MatrixXd signal_noise_sqrt,
                           MatrixXd obs_noise_sqrt, VectorXd init_mean, MatrixXd init_cov,
                           Geometry geometry) {
  const Eigen::Index dx = dim_x_;
  if (obs_matrix.cols() != dx || obs_matrix.rows() == 0) {
    throw DimensionError("FilterModel: C must be dim_y x dim_x");
  }
  dim_y_ = static_cast<int>(obs_matrix.rows());
  if (signal_noise_sqrt.rows() != dx || signal_noise_sqrt.cols() != dx) {
    throw DimensionError("FilterModel: R1^{1/2} must be dim_x x dim_x");
  }
  if (obs_noise_sqrt.rows() != dim_y_ || obs_noise_sqrt.cols() != dim_y_) {
    throw DimensionError("FilterModel: R2^{1/2} must be dim_y x dim_y");
  }
  if (init_mean.size() != dx) throw DimensionError("FilterModel: M0 must have dim_x entries");
  if (init_cov.rows() != dx || init_cov.cols() != dx) {
    throw DimensionError("FilterModel: P0 must be dim_x x dim_x");
  }
  if (!is_symmetric(signal_noise_sqrt, 1e-12) || !is_symmetric(obs_noise_sqrt, 1e-12)) {
    throw std::invalid_argument("FilterModel: noise square roots must be symmetric");
  }
  if (!is_symmetric(init_cov, 1e-12)) throw std::invalid_argument("FilterModel: P0 not symmetric");

  switch (geometry.kind) {
    case Geometry::Kind::grid:
      if (geometry.extent * geometry.extent != dim_x_) {
        throw DimensionError("FilterModel: grid geometry needs dim_x = k^2");
      }
      break;
    case Geometry::Kind::ring:
      if (geometry.extent != dim_x_) throw DimensionError("FilterModel: ring length != dim_x");
      break;
    case Geometry::Kind::none:
      break;
  }

  r1_ = signal_noise_sqrt * signal_noise_sqrt;
  r2_ = obs_noise_sqrt * obs_noise_sqrt;
  try {
    r2_inv_ = spd_inverse(r2_);
  } catch (const NumericalError&) {
    throw std::invalid_argument("FilterModel: R2^{1/2} must be invertible");
  }
  ct_r2_inv_ = obs_matrix.transpose() * r2_inv_;
  s_ = symmetrize(ct_r2_inv_ * obs_matrix);
  try {
    p0_sqrt_ = psd_sqrt(init_cov, 1e-12);
  } catch (const NumericalError&) {
    throw std::invalid_argument("FilterModel: P0 must be positive semidefinite");
  }

  c_ = LinearMap(std::move(obs_matrix));
  r1_sqrt_ = LinearMap(std::move(signal_noise_sqrt));
  r2_sqrt_ = LinearMap(std::move(obs_noise_sqrt));
  m0_ = std::move(init_mean);
  p0_ = std::move(init_cov);
  geometry_ = geometry;
}

const MatrixXd& FilterModel::drift_matrix() const {
  if (!linear_) throw std::logic_error("FilterModel: drift matrix requested for nonlinear model");
  return a_;
}

MatrixXd FilterModel::drift_matrix(std::span<const double> theta) const {
  MatrixXd a = drift_matrix();
  if (!theta.empty()) a.diagonal() *= theta[0];
  return a;
}

void FilterModel::drift(const MatrixXd& states, std::span<const double> theta,
                        MatrixXd& out) const {
  if (states.rows() != dim_x_) throw DimensionError("FilterModel::drift: wrong state dimension");
  out.resize(states.rows(), states.cols());
  if (linear_) {
    out.noalias() = a_ * states;
    if (!theta.empty() && theta[0] != 1.0) {
      out.noalias() += ((theta[0] - 1.0) * a_.diagonal()).asDiagonal() * states;
    }
    return;
  }
  f_(states, theta, out);
}

MatrixXd FilterModel::sample_initial(int n, RandomStream& stream) const {
  MatrixXd z(dim_x_, n);
  stream.fill_normal(z);
  MatrixXd x = p0_sqrt_ * z;
  x.colwise() += m0_;
  return x;
}

int grid_index(int i, int j, int k) { return i * k + j; }

std::pair<int, int> grid_coords(int d, int k) {
  const int j = d % k;
  return {(d - j) / k, j};
}

FilterModel build_grid_model(const GridModelSettings& s) {
  if (s.k <= 0) throw std::invalid_argument("build_grid_model: k must be positive");
  if (!(s.interaction_radius > 0.0)) {
    throw std::invalid_argument("build_grid_model: interaction_radius must be positive");
  }
  const int n = s.k * s.k;
  MatrixXd a = MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p) {
    const auto [ip, jp] = grid_coords(p, s.k);
    int degree = 0;
    for (int q = 0; q < n; ++q) {
      if (q == p) continue;
      const auto [iq, jq] = grid_coords(q, s.k);
      const double dist = std::hypot(static_cast<double>(ip - iq), static_cast<double>(jp - jq));
      if (dist <= s.interaction_radius) {
        a(p, q) = s.drift_scale;
        ++degree;
      }
    }
    a(p, p) = -static_cast<double>(degree) * s.drift_scale - s.stabilizer;
  }
  const MatrixXd id = MatrixXd::Identity(n, n);
  FilterModel model = FilterModel::linear(std::move(a), s.obs_scale * id, s.sigma_signal * id,
                                          s.sigma_obs * id, VectorXd::Constant(n, s.init_mean),
                                          s.init_var * id, Geometry::grid(s.k));
  model.aux_d = s.aux_d;
  return model;
}

FilterModel build_scalar_model(const ScalarModelSettings& s) {
  MatrixXd a(1, 1), c(1, 1), r1(1, 1), r2(1, 1), p0(1, 1);
  a(0, 0) = s.a;
  c(0, 0) = s.c;
  r1(0, 0) = s.sigma_signal;
  r2(0, 0) = s.sigma_obs;
  p0(0, 0) = s.init_var;
  return FilterModel::linear(a, c, r1, r2, VectorXd::Constant(1, s.init_mean), p0);
}

std::array<int, 4> lorenz96_stencil(int i, int n) {
  auto wrap = [n](int v) { return ((v % n) + n) % n; };
  return {wrap(i + 1), wrap(i - 2), wrap(i - 1), i};
}

VectorXd lorenz96_drift(const VectorXd& x, double theta) {
  MatrixXd out;
  lorenz96_drift(MatrixXd(x), theta, out);
  return out.col(0);
}

void lorenz96_drift(const MatrixXd& states, double theta, MatrixXd& out) {
  const int n = static_cast<int>(states.rows());
  if (n < 4) throw DimensionError("lorenz96_drift: dim_x must be at least 4");
  out.resize(states.rows(), states.cols());
  for (int i = 0; i < n; ++i) {
    const auto idx = lorenz96_stencil(i, n);
    out.row(i) = (states.row(idx[0]) - states.row(idx[1])).cwiseProduct(states.row(idx[2])) -
                 states.row(i);
    out.row(i).array() += theta;
  }
}

FilterModel build_lorenz96_model(const Lorenz96Settings& s) {
  if (s.dim_x < 4) throw DimensionError("build_lorenz96_model: dim_x must be at least 4");
  const int n = s.dim_x;
  DriftFunction f = [](const MatrixXd& x, std::span<const double> theta, MatrixXd& out) {
    if (theta.empty()) throw std::invalid_argument("lorenz96: forcing parameter missing");
    lorenz96_drift(x, theta[0], out);
  };
  VectorXd m0 = VectorXd::Constant(n, s.base_state);
  m0(0) += s.first_perturbation;
  const MatrixXd id = MatrixXd::Identity(n, n);
  return FilterModel::nonlinear(n, std::move(f), id, s.sigma_signal * id, s.sigma_obs * id, m0,
                                s.init_var * id, Geometry::ring(n));
}

double SignalPath::dt() const { return std::ldexp(1.0, -level); }

ObservationPath::ObservationPath(int level, MatrixXd increments)
    : level_(level), increments_(std::move(increments)) {
  if (level < 0) throw std::invalid_argument("ObservationPath: negative level");
}

double ObservationPath::dt() const { return std::ldexp(1.0, -level_); }

ObservationPath ObservationPath::coarsened(int target_level) const {
  if (target_level > level_) {
    throw std::invalid_argument("ObservationPath: cannot refine level " + std::to_string(level_) +
                                " to " + std::to_string(target_level));
  }
  MatrixXd inc = increments_;
  for (int l = level_; l > target_level; --l) {
    if (inc.cols() % 2 != 0) {
      throw std::invalid_argument("ObservationPath: odd step count cannot be coarsened");
    }
    MatrixXd next(inc.rows(), inc.cols() / 2);
    for (Eigen::Index k = 0; k < next.cols(); ++k) next.col(k) = inc.col(2 * k) + inc.col(2 * k + 1);
    inc = std::move(next);
  }
  return ObservationPath(target_level, std::move(inc));
}

ObservationPath ObservationPath::window(double t_start, double t_end) const {
  const double k0 = t_start / dt();
  const double k1 = t_end / dt();
  if (k0 != std::floor(k0) || k1 != std::floor(k1) || k0 < 0 || k1 > steps() || k1 < k0) {
    throw std::invalid_argument("ObservationPath: window not aligned with the grid");
  }
  const auto first = static_cast<Eigen::Index>(k0);
  const auto count = static_cast<Eigen::Index>(k1) - first;
  return ObservationPath(level_, increments_.middleCols(first, count));
}

TruthPath simulate_truth(const FilterModel& model, std::span<const double> theta, int level,
                         int horizon, const RandomStream& stream, NoiseMask mask) {
  if (level < 0) throw std::invalid_argument("simulate_truth: level must be >= 0");
  if (horizon < 1) throw std::invalid_argument("simulate_truth: T must be >= 1");
  const double dt = std::ldexp(1.0, -level);
  const Eigen::Index steps = static_cast<Eigen::Index>(horizon) << level;
  const double sqdt = std::sqrt(dt);

  RandomStream signal_rng = stream.derive("signal");
  RandomStream obs_rng = stream.derive("obsnoise");

  TruthPath out;
  out.signal.level = level;
  out.signal.values.resize(model.dim_x(), steps + 1);
  MatrixXd incs(model.dim_y(), steps);

  MatrixXd x = model.sample_initial(1, signal_rng);
  MatrixXd f(model.dim_x(), 1);
  MatrixXd dw(model.dim_x(), 1);
  MatrixXd dv(model.dim_y(), 1);
  out.signal.values.col(0) = x;
  for (Eigen::Index k = 0; k < steps; ++k) {
    MatrixXd dy = model.obs_map().apply(x) * dt;
    if (mask.observation) {
      obs_rng.fill_normal(dv, sqdt);
      model.obs_noise_sqrt().apply_add(dv, 1.0, dy);
    }
    incs.col(k) = dy;
    model.drift(x, theta, f);
    x += f * dt;
    if (mask.signal) {
      signal_rng.fill_normal(dw, sqdt);
      model.signal_noise_sqrt().apply_add(dw, 1.0, x);
    }
    out.signal.values.col(k + 1) = x;
  }
  out.observations = ObservationPath(level, std::move(incs));
  return out;
}

}  // namespace kalbucy
