#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace drdid;
namespace ts = testing_support;

namespace {

EstimatorOptions quick(std::size_t draws = 0) {
  EstimatorOptions o;
  o.bootstrap_draws = draws;
  return o;
}

}  // namespace

TEST(RcData, EmptyCellAndLambda) {
  const Matrix x = ts::intercept_only(4);
  try {
    RcDataset(Vector{1, 2, 3, 4}, Vector{1, 1, 0, 1}, Vector{1, 1, 0, 0}, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCell);
  }
  const RcDataset r(Vector{1, 2, 3, 4}, Vector{1, 0, 0, 1}, Vector{1, 1, 0, 0}, x, Vector{1, 1, 1, 5});
  EXPECT_DOUBLE_EQ(r.lambda_hat, 0.75);
}

TEST(RcEstimators, TwelveRowFixtureMatchesFormulas) {
  const RcDataset r = ts::twelve_row_fixture();
  const ts::RcOracle o = ts::rc_oracle(r);
  const auto opts = quick();
  EXPECT_NEAR(att_twfe_rc(r, opts).att, o.twfe, 1e-12);
  EXPECT_NEAR(att_or_rc(r, opts).att, o.or_, 1e-12);
  EXPECT_NEAR(att_ipw_rc(r, opts).att, o.ipw, 1e-12);
  EXPECT_NEAR(att_ipw_std_rc(r, opts).att, o.ipw_std, 1e-12);
  EXPECT_NEAR(att_dr1_rc(r, opts).att, o.dr1, 1e-12);
  EXPECT_NEAR(att_dr2_rc(r, opts).att, o.dr2, 1e-12);
  EXPECT_NEAR(att_dr1_imp_rc(r, opts).att, o.dr1_imp, 1e-12);
  EXPECT_NEAR(att_dr2_imp_rc(r, opts).att, o.dr2_imp, 1e-12);
}

TEST(RcEstimators, RandomDatasetsMatchFormulas) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const RcDataset r = ts::random_rc(400, seed, 3, seed % 2 == 1, 0.4);
    const ts::RcOracle o = ts::rc_oracle(r);
    const auto opts = quick();
    EXPECT_NEAR(att_twfe_rc(r, opts).att, o.twfe, 1e-12);
    EXPECT_NEAR(att_or_rc(r, opts).att, o.or_, 1e-12);
    EXPECT_NEAR(att_ipw_rc(r, opts).att, o.ipw, 1e-12);
    EXPECT_NEAR(att_ipw_std_rc(r, opts).att, o.ipw_std, 1e-12);
    EXPECT_NEAR(att_dr1_rc(r, opts).att, o.dr1, 1e-12);
    EXPECT_NEAR(att_dr2_rc(r, opts).att, o.dr2, 1e-12);
    EXPECT_NEAR(att_dr1_imp_rc(r, opts).att, o.dr1_imp, 1e-12);
    EXPECT_NEAR(att_dr2_imp_rc(r, opts).att, o.dr2_imp, 1e-12);
  }
}

TEST(RcEstimators, InterceptOnlyCollapsesToCellMeanDid) {
  const RcDataset raw = ts::random_rc(300, 21, 2);
  const RcDataset r(raw.y, raw.t, raw.d, ts::intercept_only(300));
  double s[2][2] = {}, c[2][2] = {};
  for (std::size_t i = 0; i < 300; ++i) {
    s[int(r.d[i])][int(r.t[i])] += r.y[i];
    c[int(r.d[i])][int(r.t[i])] += 1;
  }
  const double did = (s[1][1] / c[1][1] - s[1][0] / c[1][0]) - (s[0][1] / c[0][1] - s[0][0] / c[0][0]);
  for (auto tag : kRcEstimators) {
    if (tag == std::string_view("ipw")) continue;  // needs proportional cells
    EXPECT_NEAR(estimate_rc(tag, r, quick()).att, did, 1e-10) << tag;
  }
}

TEST(RcEstimators, HorvitzThompsonEqualsDidWithProportionalCells) {
  // post share 1/2 in both groups
  const Vector y{3, 5, 1, 2, 9, 4, 2, 4};
  const Vector t{1, 1, 0, 0, 1, 1, 0, 0};
  const Vector d{1, 1, 1, 1, 0, 0, 0, 0};
  const RcDataset r(y, t, d, ts::intercept_only(8));
  const double did = (4.0 - 1.5) - (6.5 - 3.0);
  EXPECT_NEAR(att_ipw_rc(r, quick()).att, did, 1e-12);
  EXPECT_NEAR(att_dr2_rc(r, quick()).att, did, 1e-12);
}

TEST(RcEstimators, AllYZeroGivesZero) {
  const RcDataset f = ts::twelve_row_fixture();
  const RcDataset r(Vector(12, 0.0), f.t, f.d, f.x);
  for (auto tag : kRcEstimators) EXPECT_NEAR(estimate_rc(tag, r, quick()).att, 0.0, 1e-12) << tag;
}

TEST(RcEstimators, WeightsSumToOnePerCell) {
  const RcDataset r = ts::random_rc(200, 3);
  const RcWeights w = rc_weights(r, fit_logit_mle(r.x, r.d));
  EXPECT_NEAR(sum(w.w11), 1.0, 1e-12);
  EXPECT_NEAR(sum(w.w10), 1.0, 1e-12);
  EXPECT_NEAR(sum(w.w01), 1.0, 1e-12);
  EXPECT_NEAR(sum(w.w00), 1.0, 1e-12);
}

TEST(RcInfluence, EtaComponentsAreEmpiricalInfluenceWithFixedFits) {
  const RcDataset r = ts::random_rc(80, 5, 3, true);
  const PropensityFit ps = fit_logit_mle(r.x, r.d, r.weights);
  const RcOutcomeFits fits = fit_rc_cells(r, nullptr, true);
  for (int j = 1; j <= 2; ++j) {
    const double att = detail::dr_rc_value(j, r, ps, fits, r.weights);
    const EifVector eif = eif_dr_rc(j, r, ps, fits, att, false);
    const Vector emp = ts::empirical_influence(r.weights, [&](const Vector& w) {
      return detail::dr_rc_value(j, r, ps, fits, w);
    });
    EXPECT_LT(ts::max_abs_diff(emp, eif.values), 1e-6) << j;
  }
}

TEST(RcInfluence, PropensityEffectIsExactWithFixedRegressions) {
  const RcDataset r = ts::random_rc(80, 6, 3, true);
  const PropensityFit ps = fit_logit_mle(r.x, r.d, r.weights);
  const RcOutcomeFits fits = fit_rc_cells(r, nullptr, false);
  const double att = detail::dr_rc_value(1, r, ps, fits, r.weights);
  // zero regression linearizations isolate the propensity term
  RcOutcomeFits frozen = fits;
  frozen.control_pre.linearization = Matrix(r.n(), r.k());
  frozen.control_post.linearization = Matrix(r.n(), r.k());
  const EifVector eif = eif_dr_rc(1, r, ps, frozen, att, true);
  const Vector emp = ts::empirical_influence(r.weights, [&](const Vector& w) {
    const RcDataset b = r.reweighted(w);
    return detail::dr_rc_value(1, b, fit_logit_mle(b.x, b.d, b.weights), fits, b.weights);
  });
  EXPECT_LT(ts::max_abs_diff(emp, eif.values), 1e-5);
}

TEST(RcInfluence, EstimationEffectCloseToRefitInfluence) {
  // pooled regression gradients differ from the exact sample gradients by
  // O(n^-1/2), so the gap to the refit influence is small at large n
  const std::size_t n = 6400, m = 40;
  EstimatorOptions o;
  o.bootstrap_draws = 0;
  const RcDataset r = ts::random_rc(n, 6, 3);
  const AttEstimate e = att_dr1_rc(r, o);
  double gap = 0, scale = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double h = 1e-6;
    Vector up = r.weights, dn = r.weights;
    up[i] *= 1 + h;
    dn[i] *= 1 - h;
    const double emp =
        static_cast<double>(n) * (att_dr1_rc(r.reweighted(up), o).att - att_dr1_rc(r.reweighted(dn), o).att) / (2 * h);
    gap += std::pow(emp - e.if_values[i], 2);
    scale += emp * emp;
  }
  EXPECT_LT(std::sqrt(gap / scale), 0.05);
}

TEST(RcInfluence, TwfeHc0ScoreMatchesEmpiricalInfluence) {
  const RcDataset r = ts::random_rc(60, 7);
  const AttEstimate e = att_twfe_rc(r, quick());
  const Vector emp = ts::empirical_influence(r.weights, [&](const Vector& w) {
    return att_twfe_rc(r.reweighted(w), quick()).att;
  });
  EXPECT_LT(ts::max_abs_diff(emp, e.if_values), 1e-5);
  EXPECT_EQ(e.diagnostics.se_method, "hc0");
}

TEST(RcInfluence, InterceptOnlyJ1EqualsJ2) {
  const RcDataset raw = ts::random_rc(200, 8);
  const RcDataset r(raw.y, raw.t, raw.d, ts::intercept_only(200));
  const AttEstimate a = att_dr1_rc(r, quick()), b = att_dr2_rc(r, quick());
  EXPECT_LT(ts::max_abs_diff(a.if_values, b.if_values), 1e-10);
  EXPECT_NEAR(a.att, b.att, 1e-12);
}

TEST(RcInfluence, ImprovedFitsHaveNoEstimationEffect) {
  const RcDataset r = ts::random_rc(500, 9, 4);
  const PropensityFit ps = fit_logit_ipt(r.x, r.d, r.weights);
  const RcOutcomeFits fits = fit_rc_cells(r, &ps, true);
  for (int j = 1; j <= 2; ++j) {
    const double att = detail::dr_rc_value(j, r, ps, fits, r.weights);
    const EifVector with = eif_dr_rc(j, r, ps, fits, att, true);
    const EifVector without = eif_dr_rc(j, r, ps, fits, att, false);
    EXPECT_LT(ts::max_abs_diff(with.values, without.values), 1e-7);
    EXPECT_NEAR(mean(with.values), 0.0, 1e-12);
  }
  EXPECT_LT(rc_moments(r, ps, fits).sup_norm_all(), 1e-7);
  const AttEstimate e = att_dr2_imp_rc(r, quick());
  ASSERT_TRUE(e.diagnostics.moment_residual.has_value());
  EXPECT_LT(*e.diagnostics.moment_residual, 1e-8);
}

TEST(RcInfluence, MissingLinearizationReported) {
  const RcDataset r = ts::random_rc(100, 10);
  PropensityFit ps = fit_logit_mle(r.x, r.d);
  ps.linearization = Matrix();
  const RcOutcomeFits fits = fit_rc_cells(r, nullptr, false);
  try {
    eif_dr_rc(1, r, ps, fits, 0.0, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingLinearization);
  }
  EXPECT_THROW(eif_dr_rc(2, r, ps, fits, 0.0, false), Error);
}
