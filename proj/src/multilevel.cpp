#include "kalbucy/multilevel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "kalbucy/errors.hpp"

namespace kalbucy {

LevelPlan::LevelPlan(int start_level, int target_level, std::vector<int> particles)
    : start_(start_level), target_(target_level), particles_(std::move(particles)) {
  if (start_ < 0) throw std::invalid_argument("LevelPlan: start level must be non-negative");
  if (target_ <= start_) throw std::invalid_argument("LevelPlan: target level must exceed start level");
  if (static_cast<int>(particles_.size()) != target_ - start_ + 1) {
    throw std::invalid_argument("LevelPlan: need one particle count per level");
  }
  for (int n : particles_) {
    if (n < 2) throw std::invalid_argument("LevelPlan: every level needs at least two particles");
  }
}

int LevelPlan::particles_at(int level) const {
  if (level < start_ || level > target_) {
    throw std::out_of_range("LevelPlan: level " + std::to_string(level) + " outside plan");
  }
  return particles_[static_cast<std::size_t>(level - start_)];
}

int LevelPlan::total_particles() const {
  int total = 0;
  for (int n : particles_) total += n;
  return total;
}

double LevelPlan::cost_per_unit_time() const {
  double cost = static_cast<double>(particles_.front()) * std::ldexp(1.0, start_);
  for (int l = start_ + 1; l <= target_; ++l) {
    cost += static_cast<double>(particles_at(l)) * (std::ldexp(1.0, l) + std::ldexp(1.0, l - 1));
  }
  return cost;
}

LevelPlan allocate_levels(double epsilon, int start_level) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("allocate_levels: epsilon must lie in (0, 1)");
  }
  if (start_level < 0) throw std::invalid_argument("allocate_levels: negative start level");
  // Guard against log2 of exact powers of two landing just above an integer.
  const double raw = std::log2(1.0 / epsilon);
  const int needed = static_cast<int>(std::ceil(raw - 1e-12));
  const int target = std::max(start_level + 1, needed);
  const double span = static_cast<double>(target - start_level + 1);
  std::vector<int> particles;
  for (int l = start_level; l <= target; ++l) {
    const double n = std::ldexp(1.0, -l) * span / (epsilon * epsilon);
    particles.push_back(std::max(2, static_cast<int>(std::ceil(n - 1e-9))));
  }
  return LevelPlan(start_level, target, std::move(particles));
}

CoupledIncrements draw_coupled_increments(RandomStream& rng, Eigen::Index rows,
                                          Eigen::Index cols, double fine_dt) {
  CoupledIncrements inc;
  inc.first.resize(rows, cols);
  inc.second.resize(rows, cols);
  const double sq = std::sqrt(fine_dt);
  rng.fill_normal(inc.first, sq);
  rng.fill_normal(inc.second, sq);
  inc.coarse = inc.first + inc.second;
  return inc;
}

CoupledPairResult coupled_pair_run(const FilterModel& model, std::span<const double> theta,
                                   const ObservationPath& obs, int level, int n,
                                   Variant variant, const TaperMatrix* taper,
                                   const RandomStream& stream, const CoupledRunOptions& options) {
  if (variant == Variant::transport) {
    throw std::invalid_argument("coupled_pair_run: the transport variant has no coupling");
  }
  if (level < 1) throw std::invalid_argument("coupled_pair_run: level must be at least 1");
  if (obs.level() < level) {
    throw std::invalid_argument("coupled_pair_run: observations are coarser than the fine level");
  }
  if (obs.dim_y() != model.dim_y()) throw DimensionError("coupled_pair_run: observation dimension");
  if (taper != nullptr && taper->dim() != model.dim_x()) {
    throw DimensionError("coupled_pair_run: taper dimension differs from dim_x");
  }

  MatrixXd fine;
  if (options.initial != nullptr) {
    fine = *options.initial;
    if (fine.rows() != model.dim_x()) throw DimensionError("coupled_pair_run: initial ensemble shape");
  } else {
    if (n < 2) throw std::invalid_argument("coupled_pair_run: need at least two particles");
    RandomStream init = stream.derive("init");
    fine = model.sample_initial(n, init);
  }
  if (fine.cols() < 2) throw std::invalid_argument("coupled_pair_run: need at least two particles");
  MatrixXd coarse = fine;
  const Eigen::Index np = fine.cols();

  const ObservationPath fine_obs = obs.level() == level ? obs : obs.coarsened(level);
  const ObservationPath coarse_obs = fine_obs.coarsened(level - 1);
  const double fine_dt = fine_obs.dt();
  const double coarse_dt = coarse_obs.dt();
  const Eigen::Index coarse_steps = coarse_obs.steps();

  RandomStream w_rng = stream.derive("ensembleW");
  RandomStream v_rng = stream.derive("ensembleV");
  const bool perturb_obs = variant == Variant::vanilla;

  CoupledPairResult result;
  if (options.record_means) {
    result.fine_means.resize(model.dim_x(), fine_obs.steps() + 1);
    result.coarse_means.resize(model.dim_x(), coarse_steps + 1);
  }

  std::uint64_t particle_steps = 0;
  for (Eigen::Index k = 0; k < coarse_steps; ++k) {
    const CoupledIncrements dw = draw_coupled_increments(w_rng, model.dim_x(), np, fine_dt);
    CoupledIncrements dv;
    if (perturb_obs) dv = draw_coupled_increments(v_rng, model.dim_y(), np, fine_dt);

    const Moments cm = detail::gain_moments(coarse, taper);
    if (options.record_means) result.coarse_means.col(k) = cm.mean;
    detail::advance(variant, coarse, cm.mean, cm.cov, coarse_obs.increments().col(k), model,
                    theta, coarse_dt, &dw.coarse, perturb_obs ? &dv.coarse : nullptr, -1.0);

    for (int half = 0; half < 2; ++half) {
      const Eigen::Index kf = 2 * k + half;
      const Moments fm = detail::gain_moments(fine, taper);
      if (options.record_means) result.fine_means.col(kf) = fm.mean;
      const MatrixXd& w = half == 0 ? dw.first : dw.second;
      const MatrixXd* v = perturb_obs ? (half == 0 ? &dv.first : &dv.second) : nullptr;
      detail::advance(variant, fine, fm.mean, fm.cov, fine_obs.increments().col(kf), model, theta,
                      fine_dt, &w, v, -1.0);
    }
    particle_steps += 3 * static_cast<std::uint64_t>(np);
  }
  if (!fine.allFinite() || !coarse.allFinite()) {
    throw NumericalError("coupled_pair_run: ensemble became non-finite");
  }

  result.fine_estimate = fine.rowwise().mean();
  result.coarse_estimate = coarse.rowwise().mean();
  if (options.record_means) {
    result.fine_means.col(fine_obs.steps()) = result.fine_estimate;
    result.coarse_means.col(coarse_steps) = result.coarse_estimate;
  }
  result.cost = static_cast<double>(particle_steps);
  return result;
}

MlEstimate ml_run(const FilterModel& model, std::span<const double> theta,
                  const ObservationPath& obs, const LevelPlan& plan, Variant variant,
                  const TaperMatrix* taper, const RandomStream& stream) {
  if (obs.level() < plan.target_level()) {
    throw std::invalid_argument("ml_run: observations are coarser than the target level");
  }
  const int l0 = plan.start_level();
  FilterOptions opts;
  opts.record_covariances = false;
  const FilterRun base = run_filter(variant, model, theta, obs, plan.particles_at(l0), l0, taper,
                                    stream.derive("level", l0), opts);
  MlEstimate est;
  est.base = base.final.particles.rowwise().mean();
  est.total_cost = static_cast<double>(base.particle_steps);
  est.value = est.base;
  for (int l = l0 + 1; l <= plan.target_level(); ++l) {
    const CoupledPairResult pair = coupled_pair_run(model, theta, obs, l, plan.particles_at(l),
                                                    variant, taper, stream.derive("level", l));
    est.per_level_increments.push_back(pair.fine_estimate - pair.coarse_estimate);
    est.total_cost += pair.cost;
  }
  for (const VectorXd& inc : est.per_level_increments) est.value += inc;
  return est;
}

double variance_of_increment(const FilterModel& model, std::span<const double> theta,
                             const ObservationGenerator& observations, int level, int n,
                             int repeats, Variant variant, const TaperMatrix* taper,
                             const RandomStream& stream) {
  if (repeats < 20) throw std::invalid_argument("variance_of_increment: need at least 20 repeats");
  double sum = 0.0;
  for (int r = 0; r < repeats; ++r) {
    const ObservationPath obs = observations(r);
    const CoupledPairResult pair =
        coupled_pair_run(model, theta, obs, level, n, variant, taper, stream.derive("repeat", r));
    sum += (pair.fine_estimate - pair.coarse_estimate).squaredNorm();
  }
  return sum / static_cast<double>(repeats);
}

}  // namespace kalbucy
