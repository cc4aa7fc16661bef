#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace drdid;

namespace {
constexpr std::size_t kDraws = 200000;
}

TEST(Bounds, HomogeneousPanelBoundIsFour) {
  const OracleDgp dgp = homogeneous_oracle(1.5, std::sqrt(0.5), std::sqrt(0.5));
  const McValue b = eff_bound_panel(dgp, kDraws, 1);
  EXPECT_NEAR(b.value, 4.0, 4 * b.mc_se);
  EXPECT_NEAR(b.value, 4.0, 0.05);
}

TEST(Bounds, HomogeneousRcEqualsPanelPlusGap) {
  const OracleDgp dgp = homogeneous_oracle(0.0, 1.0, 1.0);
  const McValue panel = eff_bound_panel(dgp, kDraws, 2);
  const McValue rc = eff_bound_rc(dgp, 0.5, kDraws, 2);
  const McValue gap = bound_gap_panel_rc(dgp, 0.5, kDraws, 2);
  const double joint = std::sqrt(panel.mc_se * panel.mc_se + rc.mc_se * rc.mc_se + gap.mc_se * gap.mc_se);
  EXPECT_NEAR(rc.value, panel.value + gap.value, 4 * joint);
  // closed form: panel 2 / 0.25, cross-section 4 per period over lambda^2, with p = 0.5
  EXPECT_NEAR(panel.value, 8.0, 0.15);
  EXPECT_NEAR(rc.value, 16.0, 0.3);
}

TEST(Bounds, GapVanishesWithoutResidualVariance) {
  const OracleDgp dgp = homogeneous_oracle(2.0, 0.0, 0.0);
  EXPECT_EQ(bound_gap_panel_rc(dgp, 0.3, 1000, 1).value, 0.0);
}

TEST(Bounds, OptimalLambda) {
  EXPECT_NEAR(optimal_lambda(homogeneous_oracle(0.0, 1.0, 1.0), kDraws, 3).lambda, 0.5, 0.005);
  EXPECT_NEAR(optimal_lambda(homogeneous_oracle(0.0, 1.0, 2.0), kDraws, 3).lambda, 2.0 / 3.0, 0.005);
}

TEST(Bounds, OptimalLambdaMinimizesRcBoundOnGrid) {
  const OracleDgp dgp = homogeneous_oracle(0.0, 1.0, 2.0);
  const double star = optimal_lambda(dgp, kDraws, 4).lambda;
  double best = 0.0, best_v = INFINITY;
  for (int g = 1; g < 20; ++g) {
    const double lam = 0.05 * g;
    const double v = eff_bound_rc(dgp, lam, kDraws, 4).value;
    if (v < best_v) {
      best_v = v;
      best = lam;
    }
  }
  EXPECT_NEAR(best, star, 0.05);
}

TEST(Bounds, Dr1Dr2GapZeroForConstantEffect) {
  const McValue g = dr1_dr2_gap_rc(homogeneous_oracle(3.0, 1.0, 1.0), 0.5, 20000, 5);
  EXPECT_NEAR(g.value, 0.0, 1e-10);
}

TEST(Bounds, Dgp1Dgp2HeadersAtModerateDraws) {
  const McValue p1 = eff_bound_panel(oracle_dgp(1), kDraws, 6);
  const McValue p2 = eff_bound_panel(oracle_dgp(2), kDraws, 6);
  EXPECT_NEAR(p1.value, 11.1, 0.03 * 11.1);
  EXPECT_NEAR(p2.value, 11.6, 0.03 * 11.6);
  const McValue r1 = eff_bound_rc(oracle_dgp(1), 0.5, kDraws, 6);
  EXPECT_NEAR(r1.value, 44.4, 0.03 * 44.4);
}

TEST(Bounds, RcDominatesPanelAndIsConvexInLambda) {
  for (int id = 1; id <= 4; ++id) {
    const OracleDgp dgp = oracle_dgp(id);
    const McValue panel = eff_bound_panel(dgp, 50000, 7);
    std::vector<McValue> rc;
    for (int g = 1; g <= 9; ++g) {
      rc.push_back(eff_bound_rc(dgp, 0.1 * g, 50000, 7));
      EXPECT_GE(rc.back().value, panel.value) << id;
      EXPECT_GE(bound_gap_panel_rc(dgp, 0.1 * g, 50000, 7).value, 0.0);
    }
    for (std::size_t g = 1; g + 1 < rc.size(); ++g) {
      const double second = rc[g - 1].value - 2 * rc[g].value + rc[g + 1].value;
      EXPECT_GE(second, -3 * (rc[g - 1].mc_se + 2 * rc[g].mc_se + rc[g + 1].mc_se)) << id << " " << g;
    }
    EXPECT_GE(dr1_dr2_gap_rc(dgp, 0.5, 50000, 7).value, 0.0);
  }
}

TEST(Bounds, GapConvexAroundHalf) {
  const OracleDgp dgp = oracle_dgp(1);
  const double g25 = bound_gap_panel_rc(dgp, 0.25, kDraws, 8).value;
  const double g50 = bound_gap_panel_rc(dgp, 0.5, kDraws, 8).value;
  const double g75 = bound_gap_panel_rc(dgp, 0.75, kDraws, 8).value;
  EXPECT_GT(g25, g50);
  EXPECT_GT(g75, g50);
}

TEST(Bounds, ThreadCountDoesNotChangeResult) {
  const OracleDgp dgp = oracle_dgp(3);
  const McValue a = eff_bound_rc(dgp, 0.4, 100000, 9, 1);
  const McValue b = eff_bound_rc(dgp, 0.4, 100000, 9, 4);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.mc_se, b.mc_se);
}

TEST(Bounds, InvalidArguments) {
  EXPECT_THROW(eff_bound_panel(oracle_dgp(1), 1, 0), Error);
  EXPECT_THROW(eff_bound_rc(oracle_dgp(1), 1.0, 100, 0), Error);
  EXPECT_THROW(oracle_dgp(5), Error);
}
