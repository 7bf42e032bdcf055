#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "kalbucy/localization.hpp"
#include "kalbucy/models.hpp"
#include "kalbucy/multilevel.hpp"

namespace kalbucy {
namespace {

FilterModel frozen_model(int dim) {
  return FilterModel::linear(MatrixXd::Zero(dim, dim), MatrixXd::Zero(dim, dim),
                             MatrixXd::Zero(dim, dim), MatrixXd::Identity(dim, dim),
                             VectorXd::Zero(dim), MatrixXd::Identity(dim, dim));
}

TEST(AllocateLevels, WorkedExample) {
  const LevelPlan p = allocate_levels(0.125, 0);
  EXPECT_EQ(p.start_level(), 0);
  EXPECT_EQ(p.target_level(), 3);
  EXPECT_EQ(p.particles(), (std::vector<int>{256, 128, 64, 32}));
  EXPECT_EQ(p.total_particles(), 480);
  EXPECT_EQ(p.particles_at(2), 64);
}

TEST(AllocateLevels, LargeEpsilonForcesTwoLevels) {
  const LevelPlan p = allocate_levels(0.4, 3);
  EXPECT_EQ(p.target_level(), 4);
  EXPECT_EQ(p.level_count(), 2);
  for (int n : p.particles()) EXPECT_GE(n, 2);
}

TEST(AllocateLevels, ParticlesNonIncreasingAndBoundHolds) {
  for (double eps : {0.3, 0.125, 0.05, 0.03125, 0.01}) {
    for (int start : {0, 1, 3}) {
      const LevelPlan p = allocate_levels(eps, start);
      EXPECT_GT(p.target_level(), p.start_level());
      double bound = 0.0;
      for (std::size_t i = 0; i < p.particles().size(); ++i) {
        if (i > 0) EXPECT_LE(p.particles()[i], p.particles()[i - 1]);
        bound += std::ldexp(1.0, -(start + static_cast<int>(i))) / p.particles()[i];
      }
      EXPECT_LE(bound, eps * eps * (1.0 + 1e-12));
    }
  }
}

TEST(AllocateLevels, RejectsEpsilonOutsideUnitInterval) {
  EXPECT_THROW(allocate_levels(0.0, 0), std::invalid_argument);
  EXPECT_THROW(allocate_levels(1.0, 0), std::invalid_argument);
  EXPECT_THROW(allocate_levels(-0.1, 0), std::invalid_argument);
}

TEST(LevelPlan, Validation) {
  EXPECT_THROW(LevelPlan(2, 2, {10}), std::invalid_argument);
  EXPECT_THROW(LevelPlan(1, 3, {10, 5}), std::invalid_argument);
  EXPECT_THROW(LevelPlan(1, 2, {10, 1}), std::invalid_argument);
  EXPECT_THROW(LevelPlan(-1, 2, {10, 5, 4, 2}), std::invalid_argument);
  const LevelPlan p(1, 3, {40, 20, 10});
  EXPECT_THROW((void)p.particles_at(0), std::out_of_range);
  EXPECT_DOUBLE_EQ(p.cost_per_unit_time(), 40 * 2.0 + 20 * (4.0 + 2.0) + 10 * (8.0 + 4.0));
}

TEST(CoupledIncrements, CoarseIsSumOfFine) {
  RandomStream rng(1);
  const CoupledIncrements inc = draw_coupled_increments(rng, 3, 50, 1.0 / 64);
  const MatrixXd sum = inc.first + inc.second;
  EXPECT_EQ(inc.coarse, sum);
  const double var = inc.first.squaredNorm() / static_cast<double>(inc.first.size());
  EXPECT_NEAR(var, 1.0 / 64, 0.3 / 64);
}

TEST(CoupledPair, FrozenSystemsAgree) {
  const FilterModel model = frozen_model(2);
  const ObservationPath obs(5, MatrixXd::Constant(2, 32, 0.3));
  const MatrixXd initial = VectorXd::Constant(2, 1.25).replicate(1, 6);
  CoupledRunOptions opts;
  opts.initial = &initial;
  for (Variant v : {Variant::vanilla, Variant::deterministic}) {
    const CoupledPairResult r =
        coupled_pair_run(model, {}, obs, 5, 6, v, nullptr, RandomStream(2), opts);
    EXPECT_EQ(r.fine_estimate, r.coarse_estimate);
    EXPECT_EQ(r.fine_estimate, VectorXd::Constant(2, 1.25));
  }
}

TEST(CoupledPair, CostMatchesStepCount) {
  const FilterModel model = build_scalar_model({});
  const TruthPath t = simulate_truth(model, {}, 6, 2, RandomStream(3));
  const CoupledPairResult r = coupled_pair_run(model, {}, t.observations, 6, 10,
                                               Variant::vanilla, nullptr, RandomStream(4));
  EXPECT_DOUBLE_EQ(r.cost, 10.0 * 2.0 * (64.0 + 32.0));
}

TEST(CoupledPair, RecordsBothMeanTrajectories) {
  const FilterModel model = build_scalar_model({});
  const TruthPath t = simulate_truth(model, {}, 4, 1, RandomStream(5));
  CoupledRunOptions opts;
  opts.record_means = true;
  const CoupledPairResult r = coupled_pair_run(model, {}, t.observations, 4, 10,
                                               Variant::deterministic, nullptr, RandomStream(6),
                                               opts);
  EXPECT_EQ(r.fine_means.cols(), 17);
  EXPECT_EQ(r.coarse_means.cols(), 9);
  EXPECT_EQ(r.fine_means.col(0), r.coarse_means.col(0));
  EXPECT_EQ(VectorXd(r.fine_means.col(16)), r.fine_estimate);
  EXPECT_EQ(VectorXd(r.coarse_means.col(8)), r.coarse_estimate);
}

TEST(CoupledPair, RejectsInvalidRequests) {
  const FilterModel model = build_scalar_model({});
  const TruthPath t = simulate_truth(model, {}, 4, 1, RandomStream(7));
  EXPECT_THROW(coupled_pair_run(model, {}, t.observations, 4, 10, Variant::transport, nullptr,
                                RandomStream(8)),
               std::invalid_argument);
  EXPECT_THROW(coupled_pair_run(model, {}, t.observations, 0, 10, Variant::vanilla, nullptr,
                                RandomStream(8)),
               std::invalid_argument);
  EXPECT_THROW(coupled_pair_run(model, {}, t.observations, 5, 10, Variant::vanilla, nullptr,
                                RandomStream(8)),
               std::invalid_argument);
  EXPECT_THROW(coupled_pair_run(model, {}, t.observations, 4, 1, Variant::vanilla, nullptr,
                                RandomStream(8)),
               std::invalid_argument);
}

TEST(CoupledPair, AllOnesTaperIsBitwiseUnlocalized) {
  const FilterModel model = build_grid_model({});
  const TruthPath t = simulate_truth(model, {}, 5, 1, RandomStream(9));
  const TaperMatrix ones(MatrixXd::Ones(25, 25));
  for (Variant v : {Variant::vanilla, Variant::deterministic}) {
    const CoupledPairResult a =
        coupled_pair_run(model, {}, t.observations, 5, 20, v, nullptr, RandomStream(10));
    const CoupledPairResult b =
        coupled_pair_run(model, {}, t.observations, 5, 20, v, &ones, RandomStream(10));
    EXPECT_EQ(a.fine_estimate, b.fine_estimate);
    EXPECT_EQ(a.coarse_estimate, b.coarse_estimate);
    EXPECT_EQ(a.cost, b.cost);
  }
}

TEST(CoupledPair, IncrementVarianceDecaysWithTheStep) {
  const FilterModel model = build_scalar_model({});
  const RandomStream root(11);
  const ObservationGenerator gen = [&](int r) {
    return simulate_truth(model, {}, 8, 1, root.derive("data", r)).observations;
  };
  std::vector<double> levels;
  std::vector<double> logs;
  for (int l = 4; l <= 8; ++l) {
    const double v = variance_of_increment(model, {}, gen, l, 50, 200, Variant::vanilla, nullptr,
                                           root.derive("filter", l));
    levels.push_back(l);
    logs.push_back(std::log2(v));
  }
  const double lm = std::accumulate(levels.begin(), levels.end(), 0.0) / 5.0;
  const double ym = std::accumulate(logs.begin(), logs.end(), 0.0) / 5.0;
  double sxy = 0.0;
  double sxx = 0.0;
  for (int i = 0; i < 5; ++i) {
    sxy += (levels[i] - lm) * (logs[i] - ym);
    sxx += (levels[i] - lm) * (levels[i] - lm);
  }
  const double slope = sxy / sxx;
  EXPECT_GE(slope, -1.5);
  EXPECT_LE(slope, -0.6);
}

TEST(VarianceOfIncrement, FrozenDynamicsGiveZero) {
  const FilterModel still = FilterModel::linear(
      MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), MatrixXd::Identity(1, 1),
      VectorXd::Constant(1, 0.5), MatrixXd::Zero(1, 1));
  const ObservationGenerator gen = [](int r) {
    return ObservationPath(4, MatrixXd::Constant(1, 16, 0.1 * r));
  };
  EXPECT_EQ(variance_of_increment(still, {}, gen, 4, 10, 20, Variant::vanilla, nullptr,
                                  RandomStream(12)),
            0.0);
}

TEST(VarianceOfIncrement, NeedsTwentyRepeats) {
  const FilterModel model = build_scalar_model({});
  const ObservationGenerator gen = [](int) {
    return ObservationPath(4, MatrixXd::Zero(1, 16));
  };
  EXPECT_THROW(variance_of_increment(model, {}, gen, 4, 10, 19, Variant::vanilla, nullptr,
                                     RandomStream(12)),
               std::invalid_argument);
}

TEST(MlRun, TelescopingIdentityAndCost) {
  const FilterModel model = build_grid_model({});
  const TruthPath t = simulate_truth(model, {}, 4, 1, RandomStream(13));
  const LevelPlan plan(1, 4, {40, 20, 10, 6});
  const MlEstimate e =
      ml_run(model, {}, t.observations, plan, Variant::vanilla, nullptr, RandomStream(14));
  ASSERT_EQ(e.per_level_increments.size(), 3u);
  VectorXd sum = e.base;
  for (const VectorXd& inc : e.per_level_increments) sum += inc;
  EXPECT_EQ(sum, e.value);
  EXPECT_DOUBLE_EQ(e.total_cost, plan.cost_per_unit_time());
}

TEST(MlRun, FrozenIncrementLeavesBase) {
  // Identical particles without noise or drift never move.
  const FilterModel still = FilterModel::linear(
      MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), MatrixXd::Identity(1, 1),
      VectorXd::Constant(1, 2.0), MatrixXd::Zero(1, 1));
  const ObservationPath obs(3, MatrixXd::Constant(1, 8, 0.2));
  const MlEstimate e =
      ml_run(still, {}, obs, LevelPlan(2, 3, {4, 4}), Variant::vanilla, nullptr, RandomStream(15));
  EXPECT_EQ(e.per_level_increments[0](0), 0.0);
  EXPECT_EQ(e.value, e.base);
  EXPECT_EQ(e.value(0), 2.0);
}

TEST(MlRun, LevelIncrementsAreUncorrelated) {
  const FilterModel model = build_scalar_model({});
  const TruthPath t = simulate_truth(model, {}, 4, 1, RandomStream(16));
  const LevelPlan plan(2, 4, {20, 10, 10});
  const int repeats = 200;
  std::vector<double> a(repeats);
  std::vector<double> b(repeats);
  for (int r = 0; r < repeats; ++r) {
    const MlEstimate e = ml_run(model, {}, t.observations, plan, Variant::vanilla, nullptr,
                                RandomStream(17).derive("repeat", r));
    a[r] = e.per_level_increments[0](0);
    b[r] = e.per_level_increments[1](0);
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / repeats;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / repeats;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (int r = 0; r < repeats; ++r) {
    sab += (a[r] - ma) * (b[r] - mb);
    saa += (a[r] - ma) * (a[r] - ma);
    sbb += (b[r] - mb) * (b[r] - mb);
  }
  EXPECT_LT(std::abs(sab / std::sqrt(saa * sbb)), 0.2);
}

}  // namespace
}  // namespace kalbucy
