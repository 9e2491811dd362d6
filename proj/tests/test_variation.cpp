#include <gtest/gtest.h>

#include <cmath>

#include "hp_oracle.hpp"
#include "ibpt/oracles.hpp"
#include "ibpt/threshold_g.hpp"
#include "ibpt/variation.hpp"
#include "instances.hpp"

using namespace ibpt;
using ibpt::testing::hp;

namespace {

struct Instance {
  JointDistribution joint;
  Encoder enc;
};

Instance make_instance(std::uint64_t seed, std::size_t nx = 3, std::size_t ny = 3, std::size_t nz = 3) {
  std::mt19937_64 rng(seed);
  auto j = ibpt::testing::random_joint(nx, ny, rng);
  auto e = ibpt::testing::random_encoder(nx, nz, rng);
  return {std::move(j), std::move(e)};
}

// IB[p(1 + eps r)] - IB[p] in 50-digit arithmetic.
hp exact_change(const Instance& in, const Matrix& r, double beta, double eps) {
  const auto pxy = ibpt::testing::to_hp(in.joint.pxy());
  const auto q = ibpt::testing::to_hp(in.enc.pzx());
  auto qp = q;
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t k = 0; k < q[i].size(); ++k) qp[i][k] = q[i][k] * (hp(1) + hp(eps) * hp(r(i, k)));
  }
  return ibpt::testing::hp_ib_objective(pxy, qp, hp(beta)) - ibpt::testing::hp_ib_objective(pxy, q, hp(beta));
}

double series_residual(const Instance& in, const Matrix& r, double beta, double eps, int order) {
  const SeriesExpansion s = expand_ib_series(in.joint, in.enc, PerturbationField(r, true), beta, eps, order);
  return std::abs(static_cast<double>(exact_change(in, r, beta, eps) - hp(s.correction())));
}

}  // namespace

TEST(Center, IdempotentAndKillsConstants) {
  const Instance in = make_instance(1);
  std::mt19937_64 rng(2);
  const PerturbationField r(ibpt::testing::random_field(3, 3, rng));
  const PerturbationField c = center(in.enc, r);
  EXPECT_TRUE(c.centered());
  EXPECT_LE((center(in.enc, c).r() - c.r()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(center(in.enc, PerturbationField(Matrix::Constant(3, 3, 2.5))).bound(), 1e-15);
}

TEST(Center, MatchesRowMeanOracle) {
  const Instance in = make_instance(3);
  std::mt19937_64 rng(4);
  const Matrix r = ibpt::testing::random_field(3, 3, rng);
  const Matrix c = center(in.enc, PerturbationField(r)).r();
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (int k = 0; k < 3; ++k) mean += in.enc(i, k) * r(i, k);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(c(i, k), r(i, k) - mean, 1e-15);
    double check = 0.0;
    for (int k = 0; k < 3; ++k) check += in.enc(i, k) * c(i, k);
    EXPECT_NEAR(check, 0.0, 1e-15);
  }
}

TEST(ReducedMoments, ConstantInXGivesEqualMoments) {
  const Instance in = make_instance(5);
  Vector s(3);
  s << 1.0, -2.0, 0.5;
  const auto m = reduced_moments(in.joint, in.enc, PerturbationField::pullback(3, s));
  EXPECT_NEAR(m.a, m.b, 1e-14);
  EXPECT_NEAR(m.b, m.c, 1e-14);
}

TEST(ReducedMoments, YConstantConditionalMeanGivesBEqualC) {
  // With X independent of Y, p(x|y,z) = p(x|z) so r(z|y) = r(z).
  const JointDistribution j = independent_dataset(3, 2).joint();
  std::mt19937_64 rng(6);
  const Encoder enc = ibpt::testing::random_encoder(3, 3, rng);
  const auto m = reduced_moments(j, enc, PerturbationField(ibpt::testing::random_field(3, 3, rng)));
  EXPECT_NEAR(m.b, m.c, 1e-14);
  EXPECT_GT(m.a, m.b);
}

TEST(ReducedMoments, MatchTripleSumOracle) {
  const Instance in = make_instance(7);
  std::mt19937_64 rng(8);
  const Matrix r = ibpt::testing::random_field(3, 3, rng);
  const auto m = reduced_moments(in.joint, in.enc, PerturbationField(r));
  // Direct sums over (x, y, z) from p(x, y) p(z|x).
  double a = 0.0, b = 0.0, c = 0.0;
  for (int z = 0; z < 3; ++z) {
    double pz = 0.0, num_z = 0.0;
    for (int x = 0; x < 3; ++x) {
      for (int y = 0; y < 3; ++y) {
        const double w = in.joint.pxy()(x, y) * in.enc(x, z);
        pz += w;
        num_z += w * r(x, z);
        a += w * r(x, z) * r(x, z);
      }
    }
    c += num_z * num_z / pz;
    for (int y = 0; y < 3; ++y) {
      double pyz = 0.0, num = 0.0;
      for (int x = 0; x < 3; ++x) {
        const double w = in.joint.pxy()(x, y) * in.enc(x, z);
        pyz += w;
        num += w * r(x, z);
      }
      b += num * num / pyz;
    }
  }
  EXPECT_NEAR(m.a, a, 1e-12);
  EXPECT_NEAR(m.b, b, 1e-12);
  EXPECT_NEAR(m.c, c, 1e-12);
}

TEST(ReducedMoments, DeadColumnsAreCounted) {
  const Instance in = make_instance(9);
  Matrix p(3, 4);
  p.leftCols(3) = in.enc.pzx();
  p.col(3).setZero();
  std::mt19937_64 rng(1);
  const auto m = reduced_moments(in.joint, Encoder(p), PerturbationField(ibpt::testing::random_field(3, 4, rng)));
  EXPECT_EQ(m.excluded_z, 1u);
}

TEST(GRatio, PullbackIsInfinite) {
  const Instance in = make_instance(10);
  std::mt19937_64 rng(11);
  const Vector s = ibpt::testing::random_vector(3, rng);
  EXPECT_TRUE(std::isinf(g_ratio(in.joint, in.enc, PerturbationField::pullback(3, s))));
}

TEST(GRatio, ZeroPerturbationIsAnError) {
  const Instance in = make_instance(12);
  try {
    g_ratio(in.joint, in.enc, PerturbationField(Matrix::Zero(3, 3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kZeroPerturbation);
  }
  EXPECT_THROW(g_ratio(in.joint, in.enc, PerturbationField(Matrix::Constant(3, 3, 1.0))), Error);
}

TEST(GRatio, TrivialEncoderProductFieldMatchesAce) {
  const JointDistribution j = random_categorical(4, 3, 1.0, 13).joint();
  const AceResult a = ace(j);
  const Encoder trivial = Encoder::uniform(4, 3);
  std::mt19937_64 rng(14);
  for (int t = 0; t < 5; ++t) {
    const Vector gz = ibpt::testing::random_vector(3, rng);
    const Matrix r = a.f * gz.transpose();
    EXPECT_NEAR(g_ratio(j, trivial, PerturbationField(r)), 1.0 / (a.correlation * a.correlation), 1e-8);
  }
}

TEST(GRatio, RandomFieldsAreBoundedBelowByG) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 20; ++t) {
    const Instance in = make_instance(100 + t);
    const double g = g_eigen(in.joint, in.enc).g_value;
    for (int f = 0; f < 20; ++f) {
      const double v = g_ratio(in.joint, in.enc, PerturbationField(ibpt::testing::random_field(3, 3, rng)));
      EXPECT_GE(v, g * (1.0 - 1e-9));
    }
  }
}

TEST(GRatio, ScaleInvariant) {
  const Instance in = make_instance(16);
  std::mt19937_64 rng(17);
  const Matrix r = ibpt::testing::random_field(3, 3, rng);
  const double base = g_ratio(in.joint, in.enc, PerturbationField(r));
  for (double c : {-3.0, 0.01, 250.0}) {
    EXPECT_NEAR(g_ratio(in.joint, in.enc, PerturbationField(c * r)), base, 1e-12 * base);
  }
}

TEST(SecondVariation, NonNegativeAtBetaZeroAndVanishesAtRatio) {
  const Instance in = make_instance(18);
  std::mt19937_64 rng(19);
  const PerturbationField r = center(in.enc, PerturbationField(ibpt::testing::random_field(3, 3, rng)));
  EXPECT_GE(second_variation(in.joint, in.enc, r, 0.0, 0.1), 0.0);
  const double g = g_ratio(in.joint, in.enc, r);
  EXPECT_NEAR(second_variation(in.joint, in.enc, r, g, 0.1), 0.0, 1e-12);
  EXPECT_GT(second_variation(in.joint, in.enc, r, 0.9 * g, 0.1), 0.0);
  EXPECT_LT(second_variation(in.joint, in.enc, r, 1.1 * g, 0.1), 0.0);
}

TEST(SecondVariation, MatchesSymmetricDifference) {
  const Instance in = make_instance(20);
  std::mt19937_64 rng(21);
  const Matrix r = center(in.enc, PerturbationField(ibpt::testing::random_field(3, 3, rng))).r();
  const double beta = 2.5;
  const double m = r.cwiseAbs().maxCoeff();
  for (double eps : {1e-2, 1e-3}) {
    const hp sym = (exact_change(in, r, beta, eps) + exact_change(in, -r, beta, eps)) / 2;
    const double d2 = second_variation(in.joint, in.enc, PerturbationField(r, true), beta, eps);
    EXPECT_LE(std::abs(static_cast<double>(sym) - d2), (1.0 + beta) * std::pow(m * eps, 4));
  }
}

TEST(Series, ZeroEpsilonIsTheBase) {
  const Instance in = make_instance(22);
  std::mt19937_64 rng(23);
  const PerturbationField r = center(in.enc, PerturbationField(ibpt::testing::random_field(3, 3, rng)));
  const SeriesExpansion s = expand_ib_series(in.joint, in.enc, r, 3.0, 0.0, 4);
  EXPECT_EQ(s.correction(), 0.0);
  EXPECT_EQ(s.total(), ib_objective(in.joint, in.enc, 3.0));
}

TEST(Series, ResidualOrderTwoAndFour) {
  const Instance in = make_instance(24);
  std::mt19937_64 rng(25);
  const Matrix r = center(in.enc, PerturbationField(ibpt::testing::random_field(3, 3, rng))).r();
  const double r2a = series_residual(in, r, 2.0, 1e-2, 2);
  const double r2b = series_residual(in, r, 2.0, 0.5e-2, 2);
  EXPECT_NEAR(r2a / r2b, 8.0, 8.0 * 0.2);
  const double r4a = series_residual(in, r, 2.0, 1e-2, 4);
  const double r4b = series_residual(in, r, 2.0, 0.5e-2, 4);
  EXPECT_NEAR(r4a / r4b, 32.0, 32.0 * 0.3);
}

TEST(Series, RequiresCenteredField) {
  const Instance in = make_instance(26);
  try {
    expand_ib_series(in.joint, in.enc, PerturbationField(Matrix::Constant(3, 3, 1.0)), 1.0, 0.1, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidArgument);
  }
}

TEST(Series, LeavingTheSimplexNamesTheCell) {
  const Instance in = make_instance(27);
  std::mt19937_64 rng(28);
  const PerturbationField r = center(in.enc, PerturbationField(ibpt::testing::random_field(3, 3, rng)));
  try {
    expand_ib_series(in.joint, in.enc, r, 1.0, 100.0, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kOutsideSimplex);
    EXPECT_NE(std::string(e.what()).find("x="), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("z="), std::string::npos);
  }
}

TEST(TBeta, ZeroAtBetaPrimeZero) {
  const Instance in = make_instance(29);
  EXPECT_NEAR(t_beta(in.joint, in.enc, 0.0).value, 0.0, 1e-12);
}

TEST(TBeta, SignFollowsThreshold) {
  for (int t = 0; t < 10; ++t) {
    const Instance in = make_instance(200 + t);
    const double g = g_eigen(in.joint, in.enc).g_value;
    EXPECT_GE(t_beta(in.joint, in.enc, 0.9 * g).value, -1e-12);
    EXPECT_LT(t_beta(in.joint, in.enc, 1.1 * g).value, 0.0);
    EXPECT_NEAR(t_beta(in.joint, in.enc, g).value, 0.0, 1e-10);
  }
}

TEST(TBeta, Continuity) {
  const Instance in = make_instance(30);
  const double g = g_eigen(in.joint, in.enc).g_value;
  for (double b : {0.5 * g, g, 2.0 * g}) {
    const double t0 = t_beta(in.joint, in.enc, b).value;
    for (double d : {1e-3, 1e-2, 0.1}) {
      const double t1 = t_beta(in.joint, in.enc, b + d).value;
      EXPECT_LE(std::abs(t1 - t0), d * (1.0 + 1e-9));
    }
  }
}

TEST(TBeta, FieldIsNormalizedAndAttains) {
  const Instance in = make_instance(31);
  const double g = g_eigen(in.joint, in.enc).g_value;
  const TBetaResult t = t_beta(in.joint, in.enc, 2.0 * g);
  const auto m = reduced_moments(in.joint, in.enc, t.field);
  EXPECT_NEAR(m.a, 1.0, 1e-10);
  EXPECT_NEAR((m.a - m.c) - 2.0 * g * (m.b - m.c), t.value, 1e-10);
}

TEST(GHat, AtomEnumerationIsExact) {
  for (int t = 0; t < 10; ++t) {
    const Instance in = make_instance(300 + t);
    const double g = g_eigen(in.joint, in.enc).g_value;
    const GHatResult est = estimate_g_hat(enumerate_atoms(in.joint, in.enc), in.enc, 3);
    EXPECT_NEAR(est.g_value, g, 1e-9 * g);
  }
}

TEST(GHat, MonteCarloCalibration) {
  const Instance in = make_instance(400);
  const double g = g_eigen(in.joint, in.enc).g_value;
  int within = 0;
  for (int t = 0; t < 100; ++t) {
    const auto samples = draw_samples(in.joint, in.enc, 4096, 1000 + static_cast<std::uint64_t>(t));
    const double est = estimate_g_hat(samples, in.enc, 3).g_value;
    if (std::abs(est - g) <= 0.1 * g) ++within;
  }
  EXPECT_GE(within, 90);
}

TEST(GHat, DegenerateBatches) {
  const Instance in = make_instance(401);
  try {
    estimate_g_hat({{0, 1, 0, 1.0}, {1, 1, 2, 1.0}}, in.enc, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateBatch);
    EXPECT_NE(std::string(e.what()).find("0"), std::string::npos);
  }
  EXPECT_THROW(estimate_g_hat({{0, 0, 0, 1.0}}, in.enc, 1), Error);
  EXPECT_THROW(estimate_g_hat({{0, 0, 0, 1.0}, {5, 0, 0, 1.0}}, in.enc, 1), Error);
}
