#include "kalbucy/harness/experiments.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "kalbucy/errors.hpp"
#include "kalbucy/harness/worker_pool.hpp"
#include "kalbucy/log.hpp"
#include "kalbucy/normalizing_constant.hpp"
#include "kalbucy/parameter_estimation.hpp"
#include "kalbucy/reference_filter.hpp"

#ifndef KALBUCY_VERSION
#define KALBUCY_VERSION "unknown"
#endif

namespace kalbucy::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

void add_common_metadata(CsvTable& table, const ExperimentConfig& cfg) {
  table.add_metadata("experiment", to_string(cfg.kind));
  table.add_metadata("name", cfg.name);
  table.add_metadata("config_hash", hex64(cfg.config_hash));
  table.add_metadata("seed", std::to_string(cfg.run.seed));
  table.add_metadata("version", KALBUCY_VERSION);
}

std::int64_t variant_block(Variant v) { return static_cast<std::int64_t>(v); }

std::optional<TaperMatrix> maybe_taper(const ExperimentConfig& cfg, const FilterModel& model,
                                       bool needed) {
  if (!needed) return std::nullopt;
  return build_taper(cfg.filter.taper, distance_matrix(model.geometry(), model.dim_x()));
}

bool any_localized(const ExperimentConfig& cfg) {
  for (bool f : cfg.localization_flags()) {
    if (f) return true;
  }
  return false;
}

std::string taper_description(const ExperimentConfig& cfg) {
  return std::string(to_string(cfg.filter.taper.kind)) + " r=" + format_real(cfg.filter.taper.radius);
}

TruthPath simulate_data(const ExperimentConfig& cfg, const FilterModel& model, int level,
                        int horizon, std::int64_t repeat) {
  return simulate_truth(model, cfg.model.theta, level, horizon,
                        experiment_stream(cfg, repeat, 0, 0, StreamPurpose::signal));
}

std::string bool_cell(bool b) { return b ? "1" : "0"; }

}  // namespace

double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("fit_slope: need at least two matching points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: x values are all equal");
  return sxy / sxx;
}

RandomStream experiment_stream(const ExperimentConfig& cfg, std::int64_t repeat,
                               std::int64_t level, std::int64_t block, StreamPurpose purpose) {
  RngStreamKey key;
  key.master_seed = cfg.run.seed;
  key.experiment = cfg.name;
  key.repeat = repeat;
  key.level = level;
  key.block = block;
  key.purpose = purpose;
  return derive_stream(key);
}

VarianceDecayResult run_variance_decay(const ExperimentConfig& cfg, int workers) {
  const FilterModel model = cfg.build_model();
  const std::vector<bool> flags = cfg.localization_flags();
  const auto taper = maybe_taper(cfg, model, any_localized(cfg));
  const auto& f = cfg.filter;
  const int n_levels = f.level_max - f.level_min + 1;
  const std::size_t n_cells = f.variants.size() * static_cast<std::size_t>(n_levels) * flags.size();
  auto cell_index = [&](std::size_t vi, int l, std::size_t li) {
    return (vi * static_cast<std::size_t>(n_levels) + static_cast<std::size_t>(l - f.level_min)) *
               flags.size() + li;
  };

  struct RepeatOut {
    std::vector<double> sq;
    std::vector<double> cost;
  };
  log_info("variance_decay: " + std::to_string(cfg.run.repeats) + " repeats");
  const auto per_repeat = parallel_map<RepeatOut>(
      static_cast<std::size_t>(cfg.run.repeats), workers, [&](std::size_t r) {
        RepeatOut out{std::vector<double>(n_cells), std::vector<double>(n_cells)};
        const TruthPath truth =
            simulate_data(cfg, model, f.level_max, cfg.run.horizon, static_cast<std::int64_t>(r));
        for (std::size_t vi = 0; vi < f.variants.size(); ++vi) {
          for (int l = f.level_min; l <= f.level_max; ++l) {
            // Localized and unlocalized pairs share every random number.
            const RandomStream stream = experiment_stream(
                cfg, static_cast<std::int64_t>(r), l, variant_block(f.variants[vi]),
                StreamPurpose::ensembleW);
            for (std::size_t li = 0; li < flags.size(); ++li) {
              const CoupledPairResult pair =
                  coupled_pair_run(model, cfg.model.theta, truth.observations, l, f.particles,
                                   f.variants[vi], flags[li] ? &*taper : nullptr, stream);
              const std::size_t c = cell_index(vi, l, li);
              out.sq[c] = (pair.fine_estimate - pair.coarse_estimate).squaredNorm();
              out.cost[c] = pair.cost;
            }
          }
        }
        return out;
      });

  VarianceDecayResult result;
  result.table = CsvTable({"level", "variant", "localized", "variance_estimate", "repeats", "cost"});
  add_common_metadata(result.table, cfg);
  result.table.add_metadata("horizon", std::to_string(cfg.run.horizon));
  result.table.add_metadata("particles", std::to_string(f.particles));
  if (taper) result.table.add_metadata("taper", taper_description(cfg));
  result.table.add_metadata("slope", "least-squares log2(variance) per level; NaN if any variance is 0");

  for (std::size_t vi = 0; vi < f.variants.size(); ++vi) {
    for (std::size_t li = 0; li < flags.size(); ++li) {
      std::vector<double> xs;
      std::vector<double> ys;
      bool any_zero = false;
      for (int l = f.level_min; l <= f.level_max; ++l) {
        const std::size_t c = cell_index(vi, l, li);
        double sum = 0.0;
        double cost = 0.0;
        for (const RepeatOut& out : per_repeat) {
          sum += out.sq[c];
          cost += out.cost[c];
        }
        VarianceDecayResult::Cell cell{l, f.variants[vi], flags[li],
                                       sum / static_cast<double>(cfg.run.repeats), cost};
        result.cells.push_back(cell);
        result.table.add_row({std::to_string(l), std::string(to_string(cell.variant)),
                              bool_cell(cell.localized), format_real(cell.variance),
                              std::to_string(cfg.run.repeats), format_real(cell.cost)});
        xs.push_back(l);
        any_zero = any_zero || !(cell.variance > 0.0);
        ys.push_back(cell.variance > 0.0 ? std::log2(cell.variance) : 0.0);
      }
      const double slope = (!any_zero && xs.size() >= 2) ? fit_slope(xs, ys) : kNaN;
      result.slopes.push_back({f.variants[vi], flags[li], slope});
      result.table.add_row({"slope", std::string(to_string(f.variants[vi])), bool_cell(flags[li]),
                            format_real(slope), std::to_string(cfg.run.repeats), ""});
    }
  }
  return result;
}

namespace {

enum class Target { mean, log_nc };

MseCostResult run_complexity(const ExperimentConfig& cfg, int workers, Target target) {
  const FilterModel model = cfg.build_model();
  const std::vector<bool> flags = cfg.localization_flags();
  const auto taper = maybe_taper(cfg, model, any_localized(cfg));
  const auto& f = cfg.filter;

  std::vector<LevelPlan> plans;
  int data_level = 0;
  for (double eps : f.epsilons) {
    plans.push_back(allocate_levels(eps, f.start_level));
    data_level = std::max(data_level, plans.back().target_level());
  }
  const bool oracle = model.is_linear() && model.dim_x() == 1;
  const int offset = (target == Target::log_nc && !oracle) ? f.reference_offset : 0;
  data_level += offset;

  std::string reference;
  if (target == Target::mean) {
    reference = "Kalman-Bucy mean (explicit Euler) at the plan's target level";
  } else if (oracle) {
    reference = "innovations log-likelihood of the Euler-discretized model at the plan's target level";
  } else {
    reference = std::string(to_string(f.variants.front())) + " single-level log-NC at level L+" +
                std::to_string(offset) + " with N=" + std::to_string(f.reference_particles);
  }

  const std::size_t n_eps = plans.size();
  const std::size_t n_cells = n_eps * f.variants.size() * flags.size();
  auto cell_index = [&](std::size_t ei, std::size_t vi, std::size_t li) {
    return (ei * f.variants.size() + vi) * flags.size() + li;
  };
  struct RepeatOut {
    std::vector<double> sq;
    std::vector<double> cost;
    std::vector<double> residual;
  };

  log_info(std::string(target == Target::mean ? "mse_cost" : "nc_complexity") + ": " +
           std::to_string(cfg.run.repeats) + " repeats, data level " + std::to_string(data_level));
  const auto per_repeat = parallel_map<RepeatOut>(
      static_cast<std::size_t>(cfg.run.repeats), workers, [&](std::size_t r) {
        const auto rep = static_cast<std::int64_t>(r);
        RepeatOut out{std::vector<double>(n_cells), std::vector<double>(n_cells),
                      std::vector<double>(n_cells)};
        const TruthPath truth = simulate_data(cfg, model, data_level, cfg.run.horizon, rep);
        const ObservationPath& obs = truth.observations;
        for (std::size_t ei = 0; ei < n_eps; ++ei) {
          const LevelPlan& plan = plans[ei];
          const int big_l = plan.target_level();
          VectorXd ref_mean;
          double ref_nc = 0.0;
          if (target == Target::mean) {
            const KbfTrajectory kbf = kbf_solve(model, obs, big_l, cfg.model.theta);
            ref_mean = kbf.means.col(kbf.means.cols() - 1);
          } else if (oracle) {
            ref_nc = innovations_log_likelihood(model, obs, big_l, cfg.model.theta);
          } else {
            FilterOptions opts;
            opts.record_covariances = false;
            const int ref_level = big_l + offset;
            const FilterRun ref = run_filter(
                f.variants.front(), model, cfg.model.theta, obs, f.reference_particles, ref_level,
                nullptr,
                experiment_stream(cfg, rep, ref_level, static_cast<std::int64_t>(ei) + 1000,
                                  StreamPurpose::ensembleW),
                opts);
            ref_nc = log_nc_from_means(ref.means, obs, model, ref_level);
          }
          for (std::size_t vi = 0; vi < f.variants.size(); ++vi) {
            const RandomStream stream =
                experiment_stream(cfg, rep, static_cast<std::int64_t>(ei),
                                  variant_block(f.variants[vi]), StreamPurpose::ensembleW);
            for (std::size_t li = 0; li < flags.size(); ++li) {
              const TaperMatrix* tp = flags[li] ? &*taper : nullptr;
              const std::size_t c = cell_index(ei, vi, li);
              if (target == Target::mean) {
                const MlEstimate est =
                    ml_run(model, cfg.model.theta, obs, plan, f.variants[vi], tp, stream);
                VectorXd check = est.base;
                for (const VectorXd& inc : est.per_level_increments) check += inc;
                out.sq[c] = (est.value - ref_mean).squaredNorm() / static_cast<double>(model.dim_x());
                out.cost[c] = est.total_cost;
                out.residual[c] = (est.value - check).cwiseAbs().maxCoeff();
              } else {
                const LogNcEstimate est =
                    ml_log_nc(model, cfg.model.theta, obs, plan, f.variants[vi], tp, stream);
                double check = est.base;
                for (double inc : est.per_level_increments) check += inc;
                out.sq[c] = (est.log_value - ref_nc) * (est.log_value - ref_nc);
                out.cost[c] = est.total_cost;
                out.residual[c] = std::abs(est.log_value - check);
              }
            }
          }
        }
        return out;
      });

  MseCostResult result;
  result.reference = reference;
  result.table = CsvTable({"epsilon", "variant", "localized", "start_level", "target_level", "mse",
                           "cost", "repeats", "telescoping_residual"});
  add_common_metadata(result.table, cfg);
  result.table.add_metadata("horizon", std::to_string(cfg.run.horizon));
  result.table.add_metadata("reference", reference);
  if (taper) {
    result.table.add_metadata("taper", taper_description(cfg));
    if (target == Target::mean) {
      result.table.add_metadata(
          "note", "localized runs are scored against the Kalman-Bucy mean, which the localized "
                  "filter does not converge to");
    }
  }
  result.table.add_metadata("mse", target == Target::mean
                                       ? "mean over repeats of ||m_ML - m_KBF||^2 / dim_x at time T"
                                       : "mean over repeats of (U_ML - U_ref)^2");
  result.table.add_metadata("cost", "particle-steps of one estimate");
  result.table.add_metadata("slope_nominal", "least squares of log cost against log epsilon");
  result.table.add_metadata("slope_realized", "least squares of log cost against log sqrt(mse)");

  for (std::size_t vi = 0; vi < f.variants.size(); ++vi) {
    for (std::size_t li = 0; li < flags.size(); ++li) {
      std::vector<double> log_eps;
      std::vector<double> log_rmse;
      std::vector<double> log_cost;
      bool realized_ok = true;
      for (std::size_t ei = 0; ei < n_eps; ++ei) {
        const std::size_t c = cell_index(ei, vi, li);
        double sum = 0.0;
        double residual = 0.0;
        const double cost = per_repeat.front().cost[c];
        for (const RepeatOut& out : per_repeat) {
          sum += out.sq[c];
          residual = std::max(residual, out.residual[c]);
          if (out.cost[c] != cost) throw std::logic_error("cost differs between repeats");
        }
        MseCostResult::Cell cell;
        cell.epsilon = f.epsilons[ei];
        cell.variant = f.variants[vi];
        cell.localized = flags[li];
        cell.start_level = plans[ei].start_level();
        cell.target_level = plans[ei].target_level();
        cell.mse = sum / static_cast<double>(cfg.run.repeats);
        cell.cost = cost;
        cell.max_telescoping_residual = residual;
        result.cells.push_back(cell);
        result.table.add_row({format_real(cell.epsilon), std::string(to_string(cell.variant)),
                              bool_cell(cell.localized), std::to_string(cell.start_level),
                              std::to_string(cell.target_level), format_real(cell.mse),
                              format_real(cell.cost), std::to_string(cfg.run.repeats),
                              format_real(residual)});
        log_eps.push_back(std::log(cell.epsilon));
        log_cost.push_back(std::log(cell.cost));
        realized_ok = realized_ok && cell.mse > 0.0;
        log_rmse.push_back(cell.mse > 0.0 ? 0.5 * std::log(cell.mse) : 0.0);
      }
      MseCostResult::Slope s{f.variants[vi], flags[li], kNaN, kNaN};
      if (n_eps >= 2) {
        s.nominal = fit_slope(log_eps, log_cost);
        if (realized_ok) {
          try {
            s.realized = fit_slope(log_rmse, log_cost);
          } catch (const std::invalid_argument&) {
            s.realized = kNaN;
          }
        }
      }
      result.slopes.push_back(s);
      const std::string v(to_string(f.variants[vi]));
      result.table.add_row({"slope_nominal", v, bool_cell(flags[li]), "", "", "",
                            format_real(s.nominal), std::to_string(cfg.run.repeats), ""});
      result.table.add_row({"slope_realized", v, bool_cell(flags[li]), "", "", "",
                            format_real(s.realized), std::to_string(cfg.run.repeats), ""});
    }
  }
  return result;
}

LevelPlan param_plan(const ExperimentConfig& cfg) {
  const auto& f = cfg.filter;
  if (f.target_level >= 0) return LevelPlan(f.start_level, f.target_level, f.plan_particles);
  return allocate_levels(f.epsilons.front(), f.start_level);
}

}  // namespace

MseCostResult run_mse_cost(const ExperimentConfig& cfg, int workers) {
  if (cfg.model.kind == ModelKind::lorenz96) {
    throw std::invalid_argument("run_mse_cost: needs a linear model");
  }
  return run_complexity(cfg, workers, Target::mean);
}

MseCostResult run_nc_complexity(const ExperimentConfig& cfg, int workers) {
  return run_complexity(cfg, workers, Target::log_nc);
}

ParamEstResult run_param_est(const ExperimentConfig& cfg, int workers) {
  const FilterModel model = cfg.build_model();
  const LevelPlan plan = param_plan(cfg);
  const auto& p = cfg.param;
  bool needs_taper = false;
  for (const auto& m : p.methods) needs_taper = needs_taper || m.second;
  const auto taper = maybe_taper(cfg, model, needs_taper);
  const int iterations = p.iterations;

  // Data shared by every method of one seed.
  log_info("param_est: simulating " + std::to_string(p.seeds) + " data paths");
  const auto data = parallel_map<ObservationPath>(
      static_cast<std::size_t>(p.seeds), workers, [&](std::size_t s) {
        return simulate_data(cfg, model, plan.target_level(), iterations,
                             static_cast<std::int64_t>(s))
            .observations;
      });

  const std::size_t n_methods = p.methods.size();
  log_info("param_est: " + std::to_string(n_methods * data.size()) + " RML runs of " +
           std::to_string(iterations) + " iterations");
  auto traces = parallel_map<ParamEstResult::Trace>(
      n_methods * data.size(), workers, [&](std::size_t task) {
        const std::size_t s = task / n_methods;
        const auto [variant, localized] = p.methods[task % n_methods];
        const ObservationPath& obs = data[s];
        const WindowSource windows = [&obs](int t) {
          return obs.window(static_cast<double>(t), static_cast<double>(t + 1));
        };
        // Localized and unlocalized runs of one variant share random numbers.
        const RandomStream stream = experiment_stream(cfg, static_cast<std::int64_t>(s), 0,
                                                      variant_block(variant), StreamPurpose::spsa);
        ParamEstResult::Trace trace;
        trace.variant = variant;
        trace.localized = localized;
        trace.seed = static_cast<int>(s);
        trace.rml = rml_run(model, windows, p.theta0, p.schedules, plan, iterations, variant,
                            localized ? &*taper : nullptr, stream);
        return trace;
      });

  const std::size_t dim = p.theta0.size();
  std::vector<std::string> header{"record", "method", "seed", "iteration"};
  for (std::size_t k = 0; k < dim; ++k) header.push_back("theta_" + std::to_string(k));
  for (const char* h : {"u_plus", "u_minus", "a_t", "b_t", "accepted", "cost", "coord",
                        "running_mean", "running_variance"}) {
    header.emplace_back(h);
  }

  ParamEstResult result;
  result.table = CsvTable(header);
  add_common_metadata(result.table, cfg);
  result.table.add_metadata("plan", "l*=" + std::to_string(plan.start_level()) +
                                        " L=" + std::to_string(plan.target_level()) +
                                        " N_tot=" + std::to_string(plan.total_particles()));
  if (taper) result.table.add_metadata("taper", taper_description(cfg));
  result.table.add_metadata("summary", "mean and sample variance of theta over the final quarter");

  for (const auto& tr : traces) {
    const std::string method = method_name(tr.variant, tr.localized);
    for (const SpsaStepRecord& rec : tr.rml.steps) {
      std::vector<std::string> row{"trace", method, std::to_string(tr.seed),
                                   std::to_string(rec.iteration + 1)};
      for (double v : rec.theta_after) row.push_back(format_real(v));
      row.push_back(format_real(rec.u_plus));
      row.push_back(format_real(rec.u_minus));
      row.push_back(format_real(rec.a));
      row.push_back(format_real(rec.b));
      row.push_back(bool_cell(rec.accepted));
      row.push_back(format_real(rec.cost));
      row.insert(row.end(), {"", "", ""});
      result.table.add_row(std::move(row));
    }
  }
  for (const auto& tr : traces) {
    const std::string method = method_name(tr.variant, tr.localized);
    for (std::size_t k = 0; k < dim; ++k) {
      const RunningSummary s = final_quarter_summary(tr.rml.thetas, static_cast<int>(k));
      std::vector<std::string> row{"summary", method, std::to_string(tr.seed), ""};
      for (std::size_t j = 0; j < dim; ++j) row.emplace_back("");
      row.insert(row.end(), {"", "", "", "", "", format_real(tr.rml.total_cost),
                             std::to_string(k), format_real(s.mean), format_real(s.variance)});
      result.table.add_row(std::move(row));
    }
  }
  result.traces = std::move(traces);
  return result;
}

SingleRunResult run_single(const ExperimentConfig& cfg) {
  const FilterModel model = cfg.build_model();
  const auto& f = cfg.filter;
  const bool localized = f.localization == LocalizationMode::on;
  const auto taper = maybe_taper(cfg, model, localized);
  const TruthPath truth = simulate_data(cfg, model, f.level, cfg.run.horizon, 0);

  SingleRunResult result;
  result.run = run_filter(f.variants.front(), model, cfg.model.theta, truth.observations,
                          f.particles, f.level, localized ? &*taper : nullptr,
                          experiment_stream(cfg, 0, f.level, variant_block(f.variants.front()),
                                            StreamPurpose::ensembleW));
  result.log_nc = log_nc_from_means(result.run.means, truth.observations, model, f.level);
  if (model.is_linear()) {
    result.reference_means = kbf_solve(model, truth.observations, f.level, cfg.model.theta).means;
  }

  std::vector<std::string> header{"step", "time"};
  for (int i = 0; i < model.dim_x(); ++i) header.push_back("mean_" + std::to_string(i));
  for (int i = 0; i < model.dim_x() && model.is_linear(); ++i) {
    header.push_back("kbf_" + std::to_string(i));
  }
  result.table = CsvTable(header);
  add_common_metadata(result.table, cfg);
  result.table.add_metadata("variant", std::string(to_string(f.variants.front())));
  result.table.add_metadata("particles", std::to_string(f.particles));
  result.table.add_metadata("level", std::to_string(f.level));
  if (taper) result.table.add_metadata("taper", taper_description(cfg));
  result.table.add_metadata("log_nc", format_real(result.log_nc));
  result.table.add_metadata("cost", std::to_string(result.run.particle_steps));
  const double dt = std::ldexp(1.0, -f.level);
  for (Eigen::Index k = 0; k < result.run.means.cols(); ++k) {
    std::vector<std::string> row{std::to_string(k), format_real(static_cast<double>(k) * dt)};
    for (int i = 0; i < model.dim_x(); ++i) row.push_back(format_real(result.run.means(i, k)));
    if (model.is_linear()) {
      for (int i = 0; i < model.dim_x(); ++i) {
        row.push_back(format_real(result.reference_means(i, k)));
      }
    }
    result.table.add_row(std::move(row));
  }
  return result;
}

CsvTable run_experiment(const ExperimentConfig& cfg, int workers) {
  switch (cfg.kind) {
    case ExperimentKind::variance_decay: return run_variance_decay(cfg, workers).table;
    case ExperimentKind::mse_cost: return run_mse_cost(cfg, workers).table;
    case ExperimentKind::nc_complexity: return run_nc_complexity(cfg, workers).table;
    case ExperimentKind::param_est: return run_param_est(cfg, workers).table;
    case ExperimentKind::single_run: return run_single(cfg).table;
  }
  throw std::logic_error("run_experiment: unknown kind");
}

}  // namespace kalbucy::harness
