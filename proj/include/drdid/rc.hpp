#pragma once

// ATT estimators for pooled repeated cross-sections.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "drdid/data.hpp"
#include "drdid/error.hpp"
#include "drdid/estimate.hpp"
#include "drdid/inference.hpp"
#include "drdid/nuisance.hpp"
#include "drdid/numkit.hpp"
#include "drdid/panel.hpp"

namespace drdid {

/// Cell weights: treated-by-period Hajek weights and control-by-period odds
/// weights, each summing to one over the sample.
struct RcWeights {
  Vector w11, w10, w01, w00;
};

namespace detail {

struct RcCellWeights {
  Vector w11, w10, w01, w00, w1, w0;  // sample mean one
};

inline RcCellWeights rc_cell_weights(const RcDataset& data, const PropensityFit& ps, std::span<const double> w) {
  const std::size_t n = data.n();
  Vector r11(n), r10(n), r01(n), r00(n), r1(n), r0(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = data.d[i], t = data.t[i], odds = ps.odds(i);
    r11[i] = w[i] * d * t;
    r10[i] = w[i] * d * (1.0 - t);
    r01[i] = w[i] * (1.0 - d) * t * odds;
    r00[i] = w[i] * (1.0 - d) * (1.0 - t) * odds;
    r1[i] = w[i] * d;
    r0[i] = w[i] * (1.0 - d) * odds;
  }
  return {hajek(r11), hajek(r10), hajek(r01), hajek(r00), hajek(r1), hajek(r0)};
}

inline Vector cell_mask(const RcDataset& data, int d, int t) {
  Vector m(data.n());
  for (std::size_t i = 0; i < data.n(); ++i)
    m[i] = (data.d[i] == d && data.t[i] == t) ? 1.0 : 0.0;
  return m;
}

}  // namespace detail

inline RcWeights rc_weights(const RcDataset& data, const PropensityFit& ps) {
  const auto cw = detail::rc_cell_weights(data, ps, data.weights);
  const double inv_n = 1.0 / static_cast<double>(data.n());
  auto to_sum_one = [inv_n](Vector v) {
    for (double& x : v) x *= inv_n;
    return v;
  };
  return {to_sum_one(cw.w11), to_sum_one(cw.w10), to_sum_one(cw.w01), to_sum_one(cw.w00)};
}

/// Control-cell regressions by OLS (or odds-weighted WLS when `ps` is given),
/// plus treated-cell OLS fits when `treated` is set.
inline RcOutcomeFits fit_rc_cells(const RcDataset& data, const PropensityFit* ps, bool treated) {
  auto control = [&](int t) {
    const Vector mask = detail::cell_mask(data, 0, t);
    return ps ? fit_or_wls(data.x, data.y, mask, *ps, {0, t, false}, data.weights)
              : fit_or_ols(data.x, data.y, mask, {0, t, false}, data.weights);
  };
  RcOutcomeFits fits{control(0), control(1), std::nullopt, std::nullopt};
  if (treated) {
    fits.treated_pre = fit_or_ols(data.x, data.y, detail::cell_mask(data, 1, 0), {1, 0, false}, data.weights);
    fits.treated_post = fit_or_ols(data.x, data.y, detail::cell_mask(data, 1, 1), {1, 1, false}, data.weights);
  }
  return fits;
}

/// Cross-section analogues of the no-estimation-effect moments: pooled
/// covariate balance and the odds-weighted regression scores in each period.
struct RcMoments {
  Vector balance;
  Vector score_pre;
  Vector score_post;

  double sup_norm_all() const {
    return std::max({drdid::sup_norm(balance), drdid::sup_norm(score_pre), drdid::sup_norm(score_post)});
  }
};

inline RcMoments rc_moments(const RcDataset& data, const PropensityFit& ps, const RcOutcomeFits& fits) {
  const std::size_t n = data.n();
  const auto cw = detail::rc_cell_weights(data, ps, data.weights);
  Vector diff(n), s0(n), s1(n);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = cw.w1[i] - cw.w0[i];
    s0[i] = cw.w00[i] * (data.y[i] - fits.control_pre.fitted[i]);
    s1[i] = cw.w01[i] * (data.y[i] - fits.control_post.fitted[i]);
  }
  return {detail::weighted_column_means(data.x, diff), detail::weighted_column_means(data.x, s0),
          detail::weighted_column_means(data.x, s1)};
}

/// OLS of Y on (1, T, D, T D, X without the constant), HC0 standard error.
inline AttEstimate att_twfe_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  const std::size_t n = data.n(), k = data.k();
  Matrix z(n, 4 + (k - 1));
  for (std::size_t i = 0; i < n; ++i) {
    z(i, 0) = 1.0;
    z(i, 1) = data.t[i];
    z(i, 2) = data.d[i];
    z(i, 3) = data.t[i] * data.d[i];
    for (std::size_t j = 1; j < k; ++j) z(i, 3 + j) = data.x(i, j);
  }
  const detail::LinearFit fit = detail::linear_fit(z, data.y, data.weights);
  AttEstimate est;
  est.method = "twfe";
  est.att = fit.beta[3];
  est.if_values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    est.if_values[i] = data.weights[i] * fit.residuals[i] * dot(fit.bread.row(3), z.row(i));
  }
  est.diagnostics.se_method = "hc0";
  set_interval(est, se_from_eif(est.if_values), opts.level);
  return est;
}

/// Treated post mean minus treated pre mean minus the treated average of
/// the fitted control trend.
inline double or_rc_value(const RcDataset& data, const RcOutcomeFits& fits) {
  const std::size_t n = data.n();
  Vector r11(n), r10(n), r1(n), trend(n);
  for (std::size_t i = 0; i < n; ++i) {
    r11[i] = data.weights[i] * data.d[i] * data.t[i];
    r10[i] = data.weights[i] * data.d[i] * (1.0 - data.t[i]);
    r1[i] = data.weights[i] * data.d[i];
    trend[i] = fits.control_post.fitted[i] - fits.control_pre.fitted[i];
  }
  return detail::mean_product(detail::hajek(r11), data.y) - detail::mean_product(detail::hajek(r10), data.y) -
         detail::mean_product(detail::hajek(r1), trend);
}

inline AttEstimate att_or_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  const RcOutcomeFits fits = fit_rc_cells(data, nullptr, false);
  const double att = or_rc_value(data, fits);
  auto refit = [&](std::span<const double> v) {
    const RcDataset b = data.reweighted(detail::multiply_weights(data.weights, v));
    return or_rc_value(b, fit_rc_cells(b, nullptr, false));
  };
  AttEstimate est = detail::bootstrap_estimate("or", att, data.n(), refit, opts);
  est.diagnostics.outcome_fits = {fit_status(fits.control_pre), fit_status(fits.control_post)};
  return est;
}

/// Horvitz-Thompson IPW with lambda-hat = weighted post share.
inline double ipw_rc_value(const RcDataset& data, const PropensityFit& ps, std::optional<double> trim) {
  const auto step = detail::second_step_weights(data.weights, data.d, ps, trim);
  const double lam = data.lambda_hat;
  CompensatedSum num, den;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double a = data.d[i] - (1.0 - data.d[i]) * ps.odds(i);
    num += step.w[i] * a * (data.t[i] - lam) / (lam * (1.0 - lam)) * data.y[i];
    den += step.w[i] * data.d[i];
  }
  return num.value() / den.value();
}

/// Hajek IPW with the cell weights.
inline double ipw_std_rc_value(const RcDataset& data, const PropensityFit& ps, std::optional<double> trim) {
  const auto step = detail::second_step_weights(data.weights, data.d, ps, trim);
  const auto cw = detail::rc_cell_weights(data, ps, step.w);
  CompensatedSum acc;
  for (std::size_t i = 0; i < data.n(); ++i) acc += (cw.w11[i] - cw.w10[i] - cw.w01[i] + cw.w00[i]) * data.y[i];
  return acc.value() / static_cast<double>(data.n());
}

namespace detail {

inline AttEstimate ipw_rc_common(std::string method, const RcDataset& data, const PropensityFit& ps,
                                 const EstimatorOptions& opts,
                                 double (*value)(const RcDataset&, const PropensityFit&, std::optional<double>)) {
  const double att = value(data, ps, opts.trim_threshold);
  auto refit = [&](std::span<const double> v) {
    const RcDataset b = data.reweighted(multiply_weights(data.weights, v));
    return value(b, fit_propensity(b.x, b.d, ps.method, b.weights), opts.trim_threshold);
  };
  AttEstimate est = bootstrap_estimate(std::move(method), att, data.n(), refit, opts);
  const auto step = second_step_weights(data.weights, data.d, ps, opts.trim_threshold);
  est.diagnostics.propensity = summarize_propensity(ps, data.d, step.trimmed);
  return est;
}

inline double dr_rc_value(int j, const RcDataset& data, const PropensityFit& ps, const RcOutcomeFits& fits,
                          std::span<const double> w) {
  const std::size_t n = data.n();
  const auto cw = rc_cell_weights(data, ps, w);
  const Vector& mu01 = fits.control_post.fitted;
  const Vector& mu00 = fits.control_pre.fitted;
  CompensatedSum acc;
  for (std::size_t i = 0; i < n; ++i) {
    const double mu0y = data.t[i] * mu01[i] + (1.0 - data.t[i]) * mu00[i];
    acc += (cw.w11[i] - cw.w10[i] - cw.w01[i] + cw.w00[i]) * (data.y[i] - mu0y);
  }
  if (j == 2) {
    const Vector& mu11 = fits.treated_post->fitted;
    const Vector& mu10 = fits.treated_pre->fitted;
    for (std::size_t i = 0; i < n; ++i) {
      acc += (cw.w1[i] - cw.w11[i]) * (mu11[i] - mu01[i]);
      acc += -(cw.w1[i] - cw.w10[i]) * (mu10[i] - mu00[i]);
    }
  }
  return acc.value() / static_cast<double>(n);
}

inline AttEstimate dr_rc_estimate(int j, std::string method, const RcDataset& data, const PropensityFit& ps,
                                  const RcOutcomeFits& fits, bool est_effect, const EstimatorOptions& opts) {
  const auto step = second_step_weights(data.weights, data.d, ps, opts.trim_threshold);
  AttEstimate est;
  est.method = std::move(method);
  est.att = dr_rc_value(j, data, ps, fits, step.w);
  est.if_values = eif_dr_rc(j, data, ps, fits, est.att, est_effect, step.w).values;
  est.diagnostics.se_method = "influence";
  est.diagnostics.propensity = summarize_propensity(ps, data.d, step.trimmed);
  est.diagnostics.outcome_fits = {fit_status(fits.control_pre), fit_status(fits.control_post)};
  if (fits.treated_pre) est.diagnostics.outcome_fits.push_back(fit_status(*fits.treated_pre));
  if (fits.treated_post) est.diagnostics.outcome_fits.push_back(fit_status(*fits.treated_post));
  set_interval(est, se_from_eif(est.if_values), opts.level);
  return est;
}

}  // namespace detail

inline AttEstimate att_ipw_rc(const RcDataset& data, const PropensityFit& ps, const EstimatorOptions& opts = {}) {
  return detail::ipw_rc_common("ipw", data, ps, opts, &ipw_rc_value);
}

inline AttEstimate att_ipw_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  return att_ipw_rc(data, fit_propensity(data.x, data.d, opts.ps_method, data.weights), opts);
}

inline AttEstimate att_ipw_std_rc(const RcDataset& data, const PropensityFit& ps,
                                  const EstimatorOptions& opts = {}) {
  return detail::ipw_rc_common("ipw_std", data, ps, opts, &ipw_std_rc_value);
}

inline AttEstimate att_ipw_std_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  return att_ipw_std_rc(data, fit_propensity(data.x, data.d, opts.ps_method, data.weights), opts);
}

inline AttEstimate att_dr1_rc(const RcDataset& data, const PropensityFit& ps, const RcOutcomeFits& fits,
                              const EstimatorOptions& opts = {}) {
  return detail::dr_rc_estimate(1, "dr1", data, ps, fits, true, opts);
}

inline AttEstimate att_dr1_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  const PropensityFit ps = fit_propensity(data.x, data.d, opts.ps_method, data.weights);
  return att_dr1_rc(data, ps, fit_rc_cells(data, nullptr, false), opts);
}

inline AttEstimate att_dr2_rc(const RcDataset& data, const PropensityFit& ps, const RcOutcomeFits& fits,
                              const EstimatorOptions& opts = {}) {
  return detail::dr_rc_estimate(2, "dr2", data, ps, fits, true, opts);
}

inline AttEstimate att_dr2_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  const PropensityFit ps = fit_propensity(data.x, data.d, opts.ps_method, data.weights);
  return att_dr2_rc(data, ps, fit_rc_cells(data, nullptr, true), opts);
}

inline AttEstimate att_dr1_imp_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  const PropensityFit ps = fit_logit_ipt(data.x, data.d, data.weights);
  const RcOutcomeFits fits = fit_rc_cells(data, &ps, false);
  AttEstimate est = detail::dr_rc_estimate(1, "dr1_imp", data, ps, fits, false, opts);
  est.diagnostics.moment_residual = rc_moments(data, ps, fits).sup_norm_all();
  return est;
}

inline AttEstimate att_dr2_imp_rc(const RcDataset& data, const EstimatorOptions& opts = {}) {
  const PropensityFit ps = fit_logit_ipt(data.x, data.d, data.weights);
  const RcOutcomeFits fits = fit_rc_cells(data, &ps, true);
  AttEstimate est = detail::dr_rc_estimate(2, "dr2_imp", data, ps, fits, false, opts);
  est.diagnostics.moment_residual = rc_moments(data, ps, fits).sup_norm_all();
  return est;
}

inline constexpr std::string_view kRcEstimators[] = {"twfe", "or",  "ipw",     "ipw_std",
                                                     "dr1",  "dr2", "dr1_imp", "dr2_imp"};

inline AttEstimate estimate_rc(std::string_view tag, const RcDataset& data, const EstimatorOptions& opts = {}) {
  if (tag == "twfe") return att_twfe_rc(data, opts);
  if (tag == "or") return att_or_rc(data, opts);
  if (tag == "ipw") return att_ipw_rc(data, opts);
  if (tag == "ipw_std") return att_ipw_std_rc(data, opts);
  if (tag == "dr1") return att_dr1_rc(data, opts);
  if (tag == "dr2") return att_dr2_rc(data, opts);
  if (tag == "dr1_imp") return att_dr1_imp_rc(data, opts);
  if (tag == "dr2_imp") return att_dr2_imp_rc(data, opts);
  throw Error(ErrorKind::InvalidArgument, "unknown repeated cross-section estimator '" + std::string(tag) + "'");
}

}  // namespace drdid
