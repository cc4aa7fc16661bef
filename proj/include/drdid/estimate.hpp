#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "drdid/error.hpp"
#include "drdid/nuisance.hpp"
#include "drdid/numkit.hpp"

namespace drdid {

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(Vector v, double p) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Two-sided standard normal critical value for confidence `level`.
inline double critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "confidence level must lie in (0, 1)");
  }
  const double upper = 1.0 - (1.0 - level) / 2.0;
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * upper);
}

struct EstimatorOptions {
  PsMethod ps_method = PsMethod::MLE;          // generic estimators only
  std::optional<double> trim_threshold;        // drop controls with pi-hat above this
  double level = 0.95;
  std::size_t bootstrap_draws = 999;           // 0 skips bootstrap SEs
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct PsDiagnostics {
  std::string method;
  bool converged = false;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  double control_min = 0.0;
  double control_max = 0.0;
  Vector control_deciles;  // 10%, 20%, ..., 90%
  std::size_t trimmed = 0;
};

struct FitStatus {
  std::string label;
  std::string method;
  bool converged = true;
};

struct Diagnostics {
  std::optional<PsDiagnostics> propensity;
  std::vector<FitStatus> outcome_fits;
  std::string se_method;  // influence, cluster, hc0, bootstrap, none
  std::size_t bootstrap_draws = 0;
  double bootstrap_nonfinite_rate = 0.0;
  std::optional<double> moment_residual;  // improved estimators only
};

struct AttEstimate {
  std::string method;
  double att = 0.0;
  double se = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
  double level = 0.95;
  Vector if_values;
  Diagnostics diagnostics;
};

inline PsDiagnostics summarize_propensity(const PropensityFit& ps, std::span<const double> d,
                                          std::size_t trimmed = 0) {
  PsDiagnostics out;
  out.method = std::string(to_string(ps.method));
  out.converged = ps.converged;
  out.iterations = ps.iterations;
  out.gradient_norm = ps.gradient_norm;
  out.trimmed = trimmed;
  Vector controls;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] == 0.0) controls.push_back(ps.fitted[i]);
  if (!controls.empty()) {
    out.control_min = *std::min_element(controls.begin(), controls.end());
    out.control_max = *std::max_element(controls.begin(), controls.end());
    for (int q = 1; q <= 9; ++q) out.control_deciles.push_back(quantile(controls, q / 10.0));
  }
  return out;
}

inline FitStatus fit_status(const OutcomeFit& fit) {
  return {fit.subgroup.label(), std::string(to_string(fit.method)), true};
}

/// Fills se and ci given att and an already-known se.
inline void set_interval(AttEstimate& est, double se, double level) {
  const double z = critical_value(level);
  est.se = se;
  est.level = level;
  est.ci = {est.att - z * se, est.att + z * se};
}

}  // namespace drdid
