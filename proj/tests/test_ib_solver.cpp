#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ibpt/ib_solver.hpp"
#include "ibpt/oracles.hpp"
#include "ibpt/threshold_g.hpp"
#include "instances.hpp"

using namespace ibpt;
using ibpt::testing::pxy_of;

namespace {

bool rows_constant(const Encoder& e, double tol) {
  for (Eigen::Index i = 1; i < e.pzx().rows(); ++i) {
    if ((e.pzx().row(i) - e.pzx().row(0)).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

}  // namespace

TEST(BaStep, IndependentJointKeepsConstantRows) {
  const JointDistribution j = independent_dataset(3, 2).joint();
  Vector c(3);
  c << 0.2, 0.3, 0.5;
  const Encoder next = ba_step(j, Encoder::constant(3, c), 4.0);
  EXPECT_TRUE(rows_constant(next, 1e-15));
}

TEST(BaStep, BetaZeroCollapsesToMarginal) {
  std::mt19937_64 rng(1);
  const auto j = ibpt::testing::random_joint(3, 3, rng);
  const auto enc = ibpt::testing::random_encoder(3, 4, rng);
  const auto d = induce(j, enc);
  const Encoder next = ba_step(j, enc, 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(next.pzx()(i, k), d.pz(k), 1e-15);
  }
}

TEST(BaStep, ObjectiveIsMonotoneFromIdentity) {
  std::mt19937_64 rng(2);
  const auto j = ibpt::testing::random_joint(3, 3, rng);
  Encoder enc = Encoder(Matrix::Identity(3, 3) * 0.97 + Matrix::Constant(3, 3, 0.01));
  double prev = ib_objective(j, enc, 10.0);
  for (int it = 0; it < 500; ++it) {
    enc = ba_step(j, enc, 10.0);
    const double cur = ib_objective(j, enc, 10.0);
    EXPECT_LE(cur, prev + 1e-12);
    prev = cur;
  }
}

TEST(BaStep, RejectsBadInput) {
  const JointDistribution j = binary_symmetric(0.1).joint();
  EXPECT_THROW(ba_step(j, Encoder::uniform(3, 2), 1.0), Error);
  EXPECT_THROW(ba_step(j, Encoder::uniform(2, 2), -1.0), Error);
}

TEST(SolveIb, MatchesGridSearchOnTwoByTwo) {
  const JointDistribution j(pxy_of({{0.35, 0.15}, {0.1, 0.4}}));
  for (double beta : {1.0, 3.0, 10.0}) {
    double best = 1e300;
    double best_a = 0.0, best_b = 0.0;
    // Coarse grid, then a fine grid around the coarse winner.
    auto scan = [&](double a0, double b0, double half, int n) {
      for (int ia = 0; ia <= n; ++ia) {
        for (int ib = 0; ib <= n; ++ib) {
          const double a = std::clamp(a0 + half * (2.0 * ia / n - 1.0), 0.0, 1.0);
          const double b = std::clamp(b0 + half * (2.0 * ib / n - 1.0), 0.0, 1.0);
          const double v = ib_objective(j, Encoder(pxy_of({{a, 1.0 - a}, {b, 1.0 - b}})), beta);
          if (v < best) {
            best = v;
            best_a = a;
            best_b = b;
          }
        }
      }
    };
    scan(0.5, 0.5, 0.5, 100);
    scan(best_a, best_b, 0.01, 200);
    SolverConfig cfg;
    const IBSolution sol = solve_ib(j, 2, beta, cfg);
    EXPECT_LE(sol.objective, best + 1e-12) << beta;
    EXPECT_GE(sol.objective, best - 1e-4) << beta;
    const double a = sol.encoder(0, 0), b = sol.encoder(1, 0);
    if (sol.ixz > 1e-6) {
      const double direct = std::max(std::abs(a - best_a), std::abs(b - best_b));
      const double swapped = std::max(std::abs(1.0 - a - best_a), std::abs(1.0 - b - best_b));
      EXPECT_LE(std::min(direct, swapped), 0.02) << beta;
    }
  }
}

TEST(SolveIb, TrivialBelowLearnabilityThreshold) {
  std::mt19937_64 rng(4);
  const auto j = ibpt::testing::random_joint(3, 3, rng);
  const double g0 = g_svd(j, Encoder::uniform(3, 1)).g_value;
  const IBSolution sol = solve_ib(j, 4, 0.9 * g0, SolverConfig{});
  EXPECT_LE(sol.ixz, 1e-6);
}

TEST(SolveIb, LargeBetaRecoversAllInformation) {
  const JointDistribution j(pxy_of({{0.3, 0.0, 0.0}, {0.0, 0.5, 0.0}, {0.0, 0.0, 0.2}}));
  const IBSolution sol = solve_ib(j, 3, 1e4, SolverConfig{});
  EXPECT_NEAR(sol.iyz, mutual_info_xy(j), 1e-4);
}

TEST(SolveIb, InformationCurveIsStepLikeAndMonotone) {
  const JointDistribution j = random_categorical(3, 3, 1.0, 7).joint();
  double prev = -1.0;
  std::optional<Encoder> warm;
  for (int i = 1; i <= 40; ++i) {
    SolverConfig cfg;
    cfg.restarts = 3;
    cfg.warm_start = warm;
    const IBSolution sol = solve_ib(j, 4, 0.5 * i, cfg);
    EXPECT_GE(sol.iyz, prev - 1e-6) << "beta " << 0.5 * i;
    prev = sol.iyz;
    warm = sol.encoder;
  }
}

TEST(SolveIb, SolutionInvariants) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const auto j = ibpt::testing::random_joint(3, 3, rng);
    SolverConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const IBSolution sol = solve_ib(j, 3, 6.0, cfg);
    EXPECT_NEAR(sol.objective, sol.ixz - 6.0 * sol.iyz, 1e-10);
    EXPECT_GE(sol.residual, 0.0);
    if (sol.converged) {
      EXPECT_LE(sol.residual, 10.0 * cfg.tol);
    }
    ASSERT_EQ(sol.restart_objectives.size(), cfg.restarts);
    for (double o : sol.restart_objectives) EXPECT_LE(sol.objective, o);
    EXPECT_EQ(sol.restarts_used, cfg.restarts);
  }
}

TEST(SolveIb, WarmStartAgreesWithColdRestarts) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const auto j = ibpt::testing::random_joint(3, 3, rng);
    SolverConfig cold;
    cold.seed = 100 + static_cast<std::uint64_t>(trial);
    const IBSolution a = solve_ib(j, 3, 8.0, cold);
    SolverConfig warm = cold;
    warm.restarts = 1;
    warm.warm_start = solve_ib(j, 3, 7.5, cold).encoder;
    const IBSolution b = solve_ib(j, 3, 8.0, warm);
    EXPECT_NEAR(a.objective, b.objective, 1e-6);
  }
}

TEST(SolveIb, DeterministicUnderSeed) {
  const JointDistribution j = random_categorical(4, 3, 1.0, 3).joint();
  SolverConfig cfg;
  cfg.seed = 77;
  const IBSolution a = solve_ib(j, 4, 5.0, cfg);
  const IBSolution b = solve_ib(j, 4, 5.0, cfg);
  EXPECT_EQ(a.encoder.pzx(), b.encoder.pzx());
  EXPECT_EQ(a.objective, b.objective);
}

TEST(SolveIb, AnnealingReachesSameOptimum) {
  const JointDistribution j = random_categorical(3, 3, 1.0, 5).joint();
  SolverConfig cfg;
  const IBSolution plain = solve_ib(j, 3, 9.0, cfg);
  cfg.anneal_from = 1.0;
  const IBSolution annealed = solve_ib(j, 3, 9.0, cfg);
  EXPECT_NEAR(plain.objective, annealed.objective, 1e-6);
}

TEST(SolveIb, SurplusClustersDoNotBreakTheSolver) {
  const JointDistribution j = binary_symmetric(0.1).joint();
  const IBSolution sol = solve_ib(j, 6, 20.0, SolverConfig{});
  EXPECT_TRUE(std::isfinite(sol.objective));
  EXPECT_NEAR(sol.encoder.pzx().rowwise().sum().maxCoeff(), 1.0, 1e-12);
}

TEST(SolveIb, InvalidConfigurationsThrow) {
  const JointDistribution j = binary_symmetric(0.1).joint();
  SolverConfig bad;
  bad.tol = 0.0;
  EXPECT_THROW(solve_ib(j, 2, 1.0, bad), Error);
  bad = SolverConfig{};
  bad.restarts = 0;
  EXPECT_THROW(solve_ib(j, 2, 1.0, bad), Error);
  bad = SolverConfig{};
  bad.max_iters = 0;
  EXPECT_THROW(solve_ib(j, 2, 1.0, bad), Error);
  EXPECT_THROW(solve_ib(j, 0, 1.0, SolverConfig{}), Error);
  SolverConfig mismatch;
  mismatch.warm_start = Encoder::uniform(2, 3);
  EXPECT_THROW(solve_ib(j, 2, 1.0, mismatch), Error);
}

TEST(SolveIb, NonConvergenceIsAFlagNotAnError) {
  const JointDistribution j = binary_symmetric(0.1).joint();
  SolverConfig cfg;
  cfg.max_iters = 3;
  cfg.restarts = 1;
  const IBSolution sol = solve_ib(j, 2, 4.0, cfg);
  EXPECT_FALSE(sol.converged);
}

TEST(Seeds, DerivedSeedsAreDistinct) {
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
}
