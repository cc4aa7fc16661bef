#pragma once

// ATT estimators for two-period panel data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drdid/data.hpp"
#include "drdid/error.hpp"
#include "drdid/estimate.hpp"
#include "drdid/inference.hpp"
#include "drdid/nuisance.hpp"
#include "drdid/numkit.hpp"

namespace drdid {

inline PropensityFit fit_propensity(const Matrix& x, std::span<const double> d, PsMethod method,
                                    std::span<const double> weights = {}) {
  return method == PsMethod::MLE ? fit_logit_mle(x, d, weights) : fit_logit_ipt(x, d, weights);
}

namespace detail {

struct SecondStepWeights {
  Vector w;
  std::size_t trimmed = 0;
};

// Observation weights for the weighting step: controls whose propensity
// exceeds the trim threshold get weight zero. Remaining controls must keep
// 1 - pi-hat away from zero.
inline SecondStepWeights second_step_weights(std::span<const double> weights, std::span<const double> d,
                                             const PropensityFit& ps, std::optional<double> trim) {
  SecondStepWeights out{Vector(weights.begin(), weights.end()), 0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 1.0) continue;
    if (trim && ps.fitted[i] > *trim) {
      out.w[i] = 0.0;
      ++out.trimmed;
      continue;
    }
    if (1.0 - ps.fitted[i] < kExtremePropensity) {
      throw Error(ErrorKind::ExtremePropensity,
                  "control row " + std::to_string(i) + " has 1 - pi-hat below 1e-6");
    }
  }
  return out;
}

inline Vector multiply_weights(std::span<const double> a, std::span<const double> b) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Vector controls_mask(std::span<const double> d) {
  Vector m(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m[i] = 1.0 - d[i];
  return m;
}

// E_n[(w1 - w0) r] with Hajek weights built from w and the odds.
inline double dr_panel_value(const PanelDataset& data, const PropensityFit& ps, const OutcomeFit& or_fit,
                             std::span<const double> w) {
  const std::size_t n = data.n();
  Vector raw1(n), raw0(n), r(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw1[i] = w[i] * data.d[i];
    raw0[i] = w[i] * (1.0 - data.d[i]) * ps.odds(i);
    r[i] = data.y1[i] - data.y0[i] - or_fit.fitted[i];
  }
  const Vector w1 = hajek(raw1), w0 = hajek(raw0);
  return mean_product(w1, r) - mean_product(w0, r);
}

inline AttEstimate bootstrap_estimate(std::string method, double att, std::size_t n,
                                      const std::function<double(std::span<const double>)>& refit,
                                      const EstimatorOptions& opts) {
  AttEstimate est;
  est.method = std::move(method);
  est.att = att;
  const BootstrapResult boot = multiplier_bootstrap(refit, n, opts.bootstrap_draws, opts.seed, opts.threads);
  est.diagnostics.se_method = opts.bootstrap_draws > 0 ? "bootstrap" : "none";
  est.diagnostics.bootstrap_draws = boot.draws;
  est.diagnostics.bootstrap_nonfinite_rate = boot.nonfinite_rate;
  set_interval(est, boot.se, opts.level);
  return est;
}

inline Vector scaled(std::span<const double> w, std::span<const double> v) {
  Vector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * v[i];
  return out;
}

// OLS of y on design z with weights w; returns (coefficients, A_n^{-1}) with
// A_n = E_n[w z z'] over the rows of z.
struct LinearFit {
  Vector beta;
  Matrix bread;
  Vector residuals;
};

inline LinearFit linear_fit(const Matrix& z, std::span<const double> y, std::span<const double> w) {
  LinearFit fit;
  Matrix gram = weighted_gram(z, w);
  gram *= 1.0 / static_cast<double>(z.rows());
  const Cholesky chol(gram);
  fit.bread = chol.inverse();
  Vector rhs = weighted_cross(z, w, y);
  for (double& v : rhs) v /= static_cast<double>(z.rows());
  fit.beta = solve_spd(gram, rhs);
  fit.residuals.resize(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) fit.residuals[i] = y[i] - dot(z.row(i), fit.beta);
  return fit;
}

}  // namespace detail

/// Sample analogues of the three no-estimation-effect moments for the
/// panel: covariate balance E_n[(w1 - w0) X], the odds-weighted regression
/// score E_n[w0 (dY - mu) X] and its mean E_n[w0 (dY - mu)].
struct PanelMoments {
  Vector balance;
  Vector score;
  double mean_residual = 0.0;

  double sup_norm_all() const {
    return std::max({drdid::sup_norm(balance), drdid::sup_norm(score), std::abs(mean_residual)});
  }
};

inline PanelMoments panel_moments(const PanelDataset& data, const PropensityFit& ps, const OutcomeFit& or_fit) {
  const std::size_t n = data.n();
  const Vector& w = data.weights;
  Vector raw1(n), raw0(n), r(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw1[i] = w[i] * data.d[i];
    raw0[i] = w[i] * (1.0 - data.d[i]) * ps.odds(i);
    r[i] = data.y1[i] - data.y0[i] - or_fit.fitted[i];
  }
  const Vector w1 = detail::hajek(raw1), w0 = detail::hajek(raw0);
  PanelMoments m;
  Vector diff(n), wr(n);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = w1[i] - w0[i];
    wr[i] = w0[i] * r[i];
  }
  m.balance = detail::weighted_column_means(data.x, diff);
  m.score = detail::weighted_column_means(data.x, wr);
  m.mean_residual = mean(wr);
  return m;
}

/// Stacked two-period regression of Y_it on (1, T, D, T D, X without the
/// constant); att is the interaction coefficient, SE clustered by unit.
inline AttEstimate att_twfe_panel(const PanelDataset& data, const EstimatorOptions& opts = {}) {
  const std::size_t n = data.n(), k = data.k();
  const std::size_t p = 4 + (k - 1);
  Matrix z(2 * n, p);
  Vector y(2 * n), w(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < 2; ++t) {
      const std::size_t row = 2 * i + static_cast<std::size_t>(t);
      z(row, 0) = 1.0;
      z(row, 1) = t;
      z(row, 2) = data.d[i];
      z(row, 3) = t * data.d[i];
      for (std::size_t j = 1; j < k; ++j) z(row, 3 + j) = data.x(i, j);
      y[row] = t == 1 ? data.y1[i] : data.y0[i];
      w[row] = data.weights[i];
    }
  }
  const detail::LinearFit fit = detail::linear_fit(z, y, w);
  AttEstimate est;
  est.method = "twfe";
  est.att = fit.beta[3];
  // unit scores, scaled so that se = sqrt(mean(psi^2) / n)
  est.if_values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int t = 0; t < 2; ++t) {
      const std::size_t row = 2 * i + static_cast<std::size_t>(t);
      s += w[row] * fit.residuals[row] * dot(fit.bread.row(3), z.row(row));
    }
    est.if_values[i] = 0.5 * s;  // A_n averages over 2n rows
  }
  est.diagnostics.se_method = "cluster";
  set_interval(est, se_from_eif(est.if_values), opts.level);
  return est;
}

/// Outcome-regression point estimate: treated mean of dY minus treated mean
/// of the control-fitted trend.
inline double or_panel_value(const PanelDataset& data, const OutcomeFit& or_fit) {
  const std::size_t n = data.n();
  Vector raw1(n), r(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw1[i] = data.weights[i] * data.d[i];
    r[i] = data.y1[i] - data.y0[i] - or_fit.fitted[i];
  }
  return detail::mean_product(detail::hajek(raw1), r);
}

inline OutcomeFit fit_panel_trend_ols(const PanelDataset& data) {
  return fit_or_ols(data.x, data.delta_y(), detail::controls_mask(data.d), {0, 0, true}, data.weights);
}

inline AttEstimate att_or_panel(const PanelDataset& data, const EstimatorOptions& opts = {}) {
  const OutcomeFit or_fit = fit_panel_trend_ols(data);
  const double att = or_panel_value(data, or_fit);
  auto refit = [&](std::span<const double> v) {
    const PanelDataset b = data.reweighted(detail::multiply_weights(data.weights, v));
    return or_panel_value(b, fit_panel_trend_ols(b));
  };
  AttEstimate est = detail::bootstrap_estimate("or", att, data.n(), refit, opts);
  est.diagnostics.outcome_fits.push_back(fit_status(or_fit));
  return est;
}

/// Horvitz-Thompson IPW: E_n[w (D - pi)/(1 - pi) dY] / E_n[w D].
inline double ipw_panel_value(const PanelDataset& data, const PropensityFit& ps, std::optional<double> trim) {
  const auto step = detail::second_step_weights(data.weights, data.d, ps, trim);
  CompensatedSum num, den;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double dy = data.y1[i] - data.y0[i];
    const double a = data.d[i] - (1.0 - data.d[i]) * ps.odds(i);
    num += step.w[i] * a * dy;
    den += step.w[i] * data.d[i];
  }
  return num.value() / den.value();
}

/// Hajek IPW: E_n[(w1 - w0) dY] with normalized weights.
inline double ipw_std_panel_value(const PanelDataset& data, const PropensityFit& ps, std::optional<double> trim) {
  const auto step = detail::second_step_weights(data.weights, data.d, ps, trim);
  const std::size_t n = data.n();
  Vector raw1(n), raw0(n), dy = data.delta_y();
  for (std::size_t i = 0; i < n; ++i) {
    raw1[i] = step.w[i] * data.d[i];
    raw0[i] = step.w[i] * (1.0 - data.d[i]) * ps.odds(i);
  }
  return detail::mean_product(detail::hajek(raw1), dy) - detail::mean_product(detail::hajek(raw0), dy);
}

namespace detail {

inline AttEstimate ipw_panel_common(std::string method, const PanelDataset& data, const PropensityFit& ps,
                                    const EstimatorOptions& opts,
                                    double (*value)(const PanelDataset&, const PropensityFit&, std::optional<double>)) {
  const double att = value(data, ps, opts.trim_threshold);
  auto refit = [&](std::span<const double> v) {
    const PanelDataset b = data.reweighted(multiply_weights(data.weights, v));
    return value(b, fit_propensity(b.x, b.d, ps.method, b.weights), opts.trim_threshold);
  };
  AttEstimate est = bootstrap_estimate(std::move(method), att, data.n(), refit, opts);
  const auto step = second_step_weights(data.weights, data.d, ps, opts.trim_threshold);
  est.diagnostics.propensity = summarize_propensity(ps, data.d, step.trimmed);
  return est;
}

}  // namespace detail

inline AttEstimate att_ipw_panel(const PanelDataset& data, const PropensityFit& ps,
                                 const EstimatorOptions& opts = {}) {
  return detail::ipw_panel_common("ipw", data, ps, opts, &ipw_panel_value);
}

inline AttEstimate att_ipw_panel(const PanelDataset& data, const EstimatorOptions& opts = {}) {
  return att_ipw_panel(data, fit_propensity(data.x, data.d, opts.ps_method, data.weights), opts);
}

inline AttEstimate att_ipw_std_panel(const PanelDataset& data, const PropensityFit& ps,
                                     const EstimatorOptions& opts = {}) {
  return detail::ipw_panel_common("ipw_std", data, ps, opts, &ipw_std_panel_value);
}

inline AttEstimate att_ipw_std_panel(const PanelDataset& data, const EstimatorOptions& opts = {}) {
  return att_ipw_std_panel(data, fit_propensity(data.x, data.d, opts.ps_method, data.weights), opts);
}

/// Generic DR estimator with influence-function SE including the
/// first-step estimation effect.
inline AttEstimate att_dr_panel(const PanelDataset& data, const PropensityFit& ps, const OutcomeFit& or_fit,
                                const EstimatorOptions& opts = {}) {
  const auto step = detail::second_step_weights(data.weights, data.d, ps, opts.trim_threshold);
  AttEstimate est;
  est.method = "dr";
  est.att = detail::dr_panel_value(data, ps, or_fit, step.w);
  const EifVector eif = eif_dr_panel(data, ps, or_fit, est.att, true, step.w);
  est.if_values = eif.values;
  est.diagnostics.se_method = "influence";
  est.diagnostics.propensity = summarize_propensity(ps, data.d, step.trimmed);
  est.diagnostics.outcome_fits.push_back(fit_status(or_fit));
  set_interval(est, se_from_eif(est.if_values), opts.level);
  return est;
}

inline AttEstimate att_dr_panel(const PanelDataset& data, const EstimatorOptions& opts = {}) {
  const PropensityFit ps = fit_propensity(data.x, data.d, opts.ps_method, data.weights);
  return att_dr_panel(data, ps, fit_panel_trend_ols(data), opts);
}

/// Improved DR: tilting propensity fit and odds-weighted trend regression,
/// whose first-order conditions remove the first-step estimation effect.
inline AttEstimate att_dr_imp_panel(const PanelDataset& data, const EstimatorOptions& opts = {}) {
  const PropensityFit ps = fit_logit_ipt(data.x, data.d, data.weights);
  const OutcomeFit or_fit =
      fit_or_wls(data.x, data.delta_y(), detail::controls_mask(data.d), ps, {0, 0, true}, data.weights);
  const auto step = detail::second_step_weights(data.weights, data.d, ps, opts.trim_threshold);
  AttEstimate est;
  est.method = "dr_imp";
  est.att = detail::dr_panel_value(data, ps, or_fit, step.w);
  est.if_values = eif_dr_imp_panel(data, ps, or_fit, est.att, step.w).values;
  est.diagnostics.se_method = "influence";
  est.diagnostics.propensity = summarize_propensity(ps, data.d, step.trimmed);
  est.diagnostics.outcome_fits.push_back(fit_status(or_fit));
  est.diagnostics.moment_residual = panel_moments(data, ps, or_fit).sup_norm_all();
  set_interval(est, se_from_eif(est.if_values), opts.level);
  return est;
}

inline constexpr std::string_view kPanelEstimators[] = {"twfe", "or", "ipw", "ipw_std", "dr", "dr_imp"};

inline AttEstimate estimate_panel(std::string_view tag, const PanelDataset& data, const EstimatorOptions& opts = {}) {
  if (tag == "twfe") return att_twfe_panel(data, opts);
  if (tag == "or") return att_or_panel(data, opts);
  if (tag == "ipw") return att_ipw_panel(data, opts);
  if (tag == "ipw_std") return att_ipw_std_panel(data, opts);
  if (tag == "dr") return att_dr_panel(data, opts);
  if (tag == "dr_imp") return att_dr_imp_panel(data, opts);
  throw Error(ErrorKind::InvalidArgument, "unknown panel estimator '" + std::string(tag) + "'");
}

}  // namespace drdid
