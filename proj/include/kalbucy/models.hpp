#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kalbucy/linalg.hpp"
#include "kalbucy/random.hpp"

namespace kalbucy {

using ParameterVector = std::vector<double>;

// Spatial layout of the state components, used for localization distances.
struct Geometry {
  enum class Kind { none, grid, ring };

  Kind kind = Kind::none;
  int extent = 0;  // grid side k, or ring length

  static Geometry none() { return {}; }
  static Geometry grid(int k) { return {Kind::grid, k}; }
  static Geometry ring(int n) { return {Kind::ring, n}; }
};

// Column-wise drift: out.col(i) = f(states.col(i); theta).
using DriftFunction =
    std::function<void(const MatrixXd& states, std::span<const double> theta, MatrixXd& out)>;

// dX = f(X; theta) dt + R1^{1/2} dW,   dY = C X dt + R2^{1/2} dV,
// X_0 ~ N(M0, P0), Y_0 = 0.
//
// Immutable after construction. Derived quantities (R1, R2^{-1},
// S = C^T R2^{-1} C, P0^{1/2}) are computed once.
class FilterModel {
 public:
  static FilterModel linear(MatrixXd drift, MatrixXd obs_matrix, MatrixXd signal_noise_sqrt,
                            MatrixXd obs_noise_sqrt, VectorXd init_mean, MatrixXd init_cov,
                            Geometry geometry = Geometry::none());

  static FilterModel nonlinear(int dim_x, DriftFunction drift, MatrixXd obs_matrix,
                               MatrixXd signal_noise_sqrt, MatrixXd obs_noise_sqrt,
                               VectorXd init_mean, MatrixXd init_cov,
                               Geometry geometry = Geometry::none());

  [[nodiscard]] int dim_x() const { return dim_x_; }
  [[nodiscard]] int dim_y() const { return dim_y_; }
  [[nodiscard]] bool is_linear() const { return linear_; }

  // Throws std::logic_error for nonlinear models.
  [[nodiscard]] const MatrixXd& drift_matrix() const;

  // Linear models accept an optional one-element theta that scales the
  // diagonal of A; an empty theta leaves A unchanged.
  [[nodiscard]] MatrixXd drift_matrix(std::span<const double> theta) const;

  void drift(const MatrixXd& states, std::span<const double> theta, MatrixXd& out) const;

  [[nodiscard]] const LinearMap& obs_map() const { return c_; }
  [[nodiscard]] const MatrixXd& obs_matrix() const { return c_.dense(); }
  [[nodiscard]] const LinearMap& signal_noise_sqrt() const { return r1_sqrt_; }
  [[nodiscard]] const LinearMap& obs_noise_sqrt() const { return r2_sqrt_; }
  [[nodiscard]] const MatrixXd& signal_noise_cov() const { return r1_; }
  [[nodiscard]] const MatrixXd& obs_noise_cov() const { return r2_; }
  [[nodiscard]] const MatrixXd& obs_noise_cov_inv() const { return r2_inv_; }
  // S = C^T R2^{-1} C
  [[nodiscard]] const MatrixXd& obs_information() const { return s_; }
  // C^T R2^{-1}
  [[nodiscard]] const MatrixXd& obs_gain_factor() const { return ct_r2_inv_; }
  [[nodiscard]] const VectorXd& init_mean() const { return m0_; }
  [[nodiscard]] const MatrixXd& init_cov() const { return p0_; }
  [[nodiscard]] const MatrixXd& init_cov_sqrt() const { return p0_sqrt_; }
  [[nodiscard]] const Geometry& geometry() const { return geometry_; }

  // Auxiliary scalar carried from the configuration; not used by any
  // formula.
  double aux_d = 1.4;

  // Draws N initial particles from N(M0, P0), one per column.
  [[nodiscard]] MatrixXd sample_initial(int n, RandomStream& stream) const;

 private:
  FilterModel() = default;
  void finalize(MatrixXd obs_matrix, MatrixXd signal_noise_sqrt, MatrixXd obs_noise_sqrt,
                VectorXd init_mean, MatrixXd init_cov, Geometry geometry);

  int dim_x_ = 0;
  int dim_y_ = 0;
  bool linear_ = true;
  MatrixXd a_;
  DriftFunction f_;
  LinearMap c_;
  LinearMap r1_sqrt_;
  LinearMap r2_sqrt_;
  MatrixXd r1_;
  MatrixXd r2_;
  MatrixXd r2_inv_;
  MatrixXd s_;
  MatrixXd ct_r2_inv_;
  VectorXd m0_;
  MatrixXd p0_;
  MatrixXd p0_sqrt_;
  Geometry geometry_;
};

// Grid index map d = i k + j and its inverse.
int grid_index(int i, int j, int k);
std::pair<int, int> grid_coords(int d, int k);

struct GridModelSettings {
  int k = 5;
  double interaction_radius = 1.5;
  double drift_scale = 0.1;
  double stabilizer = 0.5;
  double obs_scale = 1.0;      // C = obs_scale I
  double sigma_signal = 1.0;   // R1 = sigma_signal^2 I
  double sigma_obs = 1.0;      // R2 = sigma_obs^2 I
  double init_mean = 0.0;
  double init_var = 1.0;
  double aux_d = 1.4;
};

// Linear-Gaussian model on a k x k grid. A couples components whose grid
// distance is at most interaction_radius: off-diagonal entries are
// drift_scale and the diagonal is -(degree) drift_scale - stabilizer.
FilterModel build_grid_model(const GridModelSettings& settings);

struct ScalarModelSettings {
  double a = -0.5;
  double c = 1.0;
  double sigma_signal = 1.0;
  double sigma_obs = 1.0;
  double init_mean = 0.0;
  double init_var = 1.0;
};

FilterModel build_scalar_model(const ScalarModelSettings& settings);

// f_i(x) = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + theta, indices cyclic.
VectorXd lorenz96_drift(const VectorXd& x, double theta);
void lorenz96_drift(const MatrixXd& states, double theta, MatrixXd& out);

// Zero-based component indices that f_i reads, in the order
// (i+1, i-2, i-1, i).
std::array<int, 4> lorenz96_stencil(int i, int dim_x);

struct Lorenz96Settings {
  int dim_x = 8;
  double sigma_signal = 1.4142135623730951;  // Q^{1/2} = sqrt(2) I
  double sigma_obs = 0.5;                    // R^{1/2} = 0.5 I
  double base_state = 8.0;
  double first_perturbation = 0.01;          // X_0(1) = 8.01
  double init_var = 0.0;
};

// Stochastic Lorenz 96 with C = I and theta as the forcing.
FilterModel build_lorenz96_model(const Lorenz96Settings& settings);

struct SignalPath {
  int level = 0;
  MatrixXd values;  // dim_x x (steps + 1), column k at time k Delta

  [[nodiscard]] double dt() const;
};

// Increments of Y on a uniform grid with step 2^-level; column k holds
// Y_{(k+1)Delta} - Y_{k Delta}.
class ObservationPath {
 public:
  ObservationPath() = default;
  ObservationPath(int level, MatrixXd increments);

  [[nodiscard]] int level() const { return level_; }
  [[nodiscard]] double dt() const;
  [[nodiscard]] Eigen::Index steps() const { return increments_.cols(); }
  [[nodiscard]] int dim_y() const { return static_cast<int>(increments_.rows()); }
  [[nodiscard]] double horizon() const { return static_cast<double>(steps()) * dt(); }
  [[nodiscard]] const MatrixXd& increments() const { return increments_; }

  // Sums adjacent increment pairs until the requested level is reached.
  [[nodiscard]] ObservationPath coarsened(int target_level) const;

  // Increments covering [t_start, t_end]; both must sit on this grid.
  [[nodiscard]] ObservationPath window(double t_start, double t_end) const;

 private:
  int level_ = 0;
  MatrixXd increments_;
};

struct TruthPath {
  SignalPath signal;
  ObservationPath observations;
};

// Switches for the two noise sources in simulate_truth; both on by default.
struct NoiseMask {
  bool signal = true;
  bool observation = true;
};

// Euler-Maruyama on (X, Y) jointly over [0, T] with step 2^-level. The signal
// noise and initial state come from stream.derive("signal"), observation
// noise from stream.derive("obsnoise").
TruthPath simulate_truth(const FilterModel& model, std::span<const double> theta, int level,
                         int horizon, const RandomStream& stream, NoiseMask mask = {});

}  // namespace kalbucy
