#include "kalbucy/parameter_estimation.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "kalbucy/errors.hpp"
#include "kalbucy/log.hpp"

namespace kalbucy {

void StepSchedules::validate() const {
  if (!(a0 > 0.0) || !(b0 > 0.0)) throw std::invalid_argument("StepSchedules: a0 and b0 must be positive");
  if (!(alpha > 0.5 && alpha <= 1.0)) throw std::invalid_argument("StepSchedules: alpha must lie in (0.5, 1]");
  if (!(gamma > 0.0)) throw std::invalid_argument("StepSchedules: gamma must be positive");
  if (!(2.0 * (alpha - gamma) > 1.0)) {
    throw std::invalid_argument("StepSchedules: need 2 (alpha - gamma) > 1");
  }
}

double StepSchedules::gain(int t) const { return a0 * std::pow(t + 1.0, -alpha); }

double StepSchedules::perturbation(int t) const { return b0 * std::pow(t + 1.0, -gamma); }

std::vector<double> spsa_perturbation(int dim_theta, RandomStream& rng) {
  if (dim_theta < 1) throw std::invalid_argument("spsa_perturbation: dim_theta must be positive");
  std::vector<double> psi(static_cast<std::size_t>(dim_theta));
  for (double& p : psi) p = rng.sign();
  return psi;
}

std::vector<double> spsa_update(std::span<const double> theta, std::span<const double> psi,
                                double a, double b, double u_plus, double u_minus) {
  if (theta.size() != psi.size()) throw DimensionError("spsa_update: theta and psi sizes differ");
  std::vector<double> next(theta.begin(), theta.end());
  for (std::size_t k = 0; k < next.size(); ++k) {
    next[k] += a * (u_plus - u_minus) / (2.0 * b * psi[k]);
  }
  return next;
}

SpsaState initial_spsa_state(const FilterModel& model, std::vector<double> theta0,
                             const LevelPlan& plan, const RandomStream& stream) {
  SpsaState state;
  state.theta = std::move(theta0);
  RandomStream rng = stream;
  state.ensemble = model.sample_initial(plan.total_particles(), rng);
  return state;
}

SpsaState spsa_step(const SpsaState& state, const ObservationPath& window,
                    const FilterModel& model, const StepSchedules& schedules,
                    const LevelPlan& plan, Variant variant, const TaperMatrix* taper,
                    const RandomStream& stream, SpsaStepRecord* record) {
  schedules.validate();
  if (state.theta.empty()) throw std::invalid_argument("spsa_step: empty theta");
  if (state.ensemble.cols() != plan.total_particles()) {
    throw DimensionError("spsa_step: carried ensemble does not match the plan");
  }
  const int t = state.iteration;
  const double a = schedules.gain(t + 1);
  const double b = schedules.perturbation(t + 1);
  RandomStream psi_rng = stream.derive("psi");
  const std::vector<double> psi = spsa_perturbation(static_cast<int>(state.theta.size()), psi_rng);

  std::vector<double> plus = state.theta;
  std::vector<double> minus = state.theta;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    plus[k] += b * psi[k];
    minus[k] -= b * psi[k];
  }

  const RandomStream crn = stream.derive("nc");
  MlNcOptions opts;
  opts.initial = &state.ensemble;
  double u_plus = std::numeric_limits<double>::quiet_NaN();
  double u_minus = std::numeric_limits<double>::quiet_NaN();
  double cost = 0.0;
  try {
    const LogNcEstimate ep = ml_log_nc(model, plus, window, plan, variant, taper, crn, opts);
    const LogNcEstimate em = ml_log_nc(model, minus, window, plan, variant, taper, crn, opts);
    u_plus = ep.log_value;
    u_minus = em.log_value;
    cost += ep.total_cost + em.total_cost;
  } catch (const NumericalError& e) {
    log_warning(std::string("spsa_step: ") + e.what());
  }

  SpsaState next;
  next.iteration = t + 1;
  const bool accepted = std::isfinite(u_plus) && std::isfinite(u_minus);
  if (accepted) {
    next.theta = spsa_update(state.theta, psi, a, b, u_plus, u_minus);
  } else {
    std::ostringstream msg;
    msg << "spsa_step: rejected update at iteration " << t << " (non-finite log-NC ratio)";
    log_warning(msg.str());
    next.theta = state.theta;
  }

  FilterOptions fopts;
  fopts.record_covariances = false;
  const FilterRun run = run_filter_from(variant, model, next.theta, window, state.ensemble,
                                        plan.target_level(), taper, stream.derive("propagate"),
                                        fopts);
  next.ensemble = run.final.particles;
  cost += static_cast<double>(run.particle_steps);

  if (record != nullptr) {
    record->iteration = t;
    record->theta_before = state.theta;
    record->theta_after = next.theta;
    record->psi = psi;
    record->u_plus = u_plus;
    record->u_minus = u_minus;
    record->a = a;
    record->b = b;
    record->accepted = accepted;
    record->cost = cost;
  }
  return next;
}

RmlResult rml_run(const FilterModel& model, const WindowSource& windows,
                  std::vector<double> theta0, const StepSchedules& schedules,
                  const LevelPlan& plan, int iterations, Variant variant,
                  const TaperMatrix* taper, const RandomStream& stream) {
  if (iterations < 1) throw std::invalid_argument("rml_run: need at least one iteration");
  schedules.validate();
  RmlResult result;
  SpsaState state = initial_spsa_state(model, std::move(theta0), plan, stream.derive("ensemble0"));
  result.thetas.push_back(state.theta);
  for (int t = 0; t < iterations; ++t) {
    SpsaStepRecord rec;
    state = spsa_step(state, windows(t), model, schedules, plan, variant, taper,
                      stream.derive("iteration", t), &rec);
    result.total_cost += rec.cost;
    result.thetas.push_back(state.theta);
    result.steps.push_back(std::move(rec));
  }
  return result;
}

RunningSummary final_quarter_summary(const std::vector<std::vector<double>>& thetas, int coord) {
  if (thetas.empty()) throw std::invalid_argument("final_quarter_summary: empty trace");
  const std::size_t n = thetas.size();
  const std::size_t count = std::max<std::size_t>(1, n / 4);
  RunningSummary s;
  s.count = static_cast<int>(count);
  for (std::size_t i = n - count; i < n; ++i) s.mean += thetas[i].at(static_cast<std::size_t>(coord));
  s.mean /= static_cast<double>(count);
  if (count > 1) {
    for (std::size_t i = n - count; i < n; ++i) {
      const double d = thetas[i][static_cast<std::size_t>(coord)] - s.mean;
      s.variance += d * d;
    }
    s.variance /= static_cast<double>(count - 1);
  }
  return s;
}

}  // namespace kalbucy
