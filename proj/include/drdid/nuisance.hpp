#pragma once

// First-step working models: logistic propensity score (maximum likelihood
// or inverse probability tilting) and linear outcome regressions (OLS or
// propensity-odds weighted least squares), each carrying its per-observation
// linearization so downstream influence functions can add estimation effects.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "drdid/error.hpp"
#include "drdid/numkit.hpp"

namespace drdid {

enum class PsMethod { MLE, IPT };
enum class OrMethod { OLS, WLS };

constexpr std::string_view to_string(PsMethod m) { return m == PsMethod::MLE ? "mle" : "ipt"; }
constexpr std::string_view to_string(OrMethod m) { return m == OrMethod::OLS ? "ols" : "wls"; }

/// Linear index beyond which exp() is clamped while iterating.
inline constexpr double kIndexClamp = 700.0;
/// A converged logit index this large means fitted values are pinned to 0 or 1.
inline constexpr double kPinnedIndex = 25.0;
/// Controls with 1 - pi below this make odds weights unusable.
inline constexpr double kExtremePropensity = 1e-6;

struct PropensityFit {
  PsMethod method = PsMethod::MLE;
  Vector gamma;
  Vector fitted;          // Lambda(X_i' gamma)
  Matrix linearization;   // n x k, row i is l_ps(W_i)
  bool converged = false;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;

  /// pi/(1-pi) = exp(X'gamma) for row i.
  double odds(std::size_t i) const { return fitted[i] / (1.0 - fitted[i]); }
};

/// Identifies which conditional mean a fit targets: cell (d, t) or the
/// change in outcomes for group d when `delta` is set.
struct Subgroup {
  int d = 0;
  int t = 0;
  bool delta = false;

  std::string label() const {
    return delta ? "(d=" + std::to_string(d) + ", delta)"
                 : "(d=" + std::to_string(d) + ", t=" + std::to_string(t) + ")";
  }
};

struct OutcomeFit {
  OrMethod method = OrMethod::OLS;
  Vector beta;
  Subgroup subgroup;
  Vector fitted;          // X_i' beta over the full sample
  Matrix linearization;   // n x k, zero rows off the subsample
};

namespace detail {

inline Vector unit_or(std::span<const double> w, std::size_t n) {
  return w.empty() ? Vector(n, 1.0) : Vector(w.begin(), w.end());
}

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double clamp_index(double z) { return std::clamp(z, -kIndexClamp, kIndexClamp); }

inline void check_classes(std::span<const double> d, std::span<const double> w) {
  double treated = 0.0, control = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] == 1.0 ? treated : control) += w[i];
  if (!(treated > 0.0) || !(control > 0.0)) {
    throw Error(ErrorKind::AllTreatedOrAllControl, "propensity fit needs both treatment classes");
  }
}

// Rows l_i = A^{-1} s_i for per-observation scores s_i = c_i X_i.
inline Matrix linearize(const Matrix& x, const Matrix& a, std::span<const double> c) {
  const Matrix a_inv = Cholesky(a).inverse();
  const std::size_t n = x.rows(), k = x.cols();
  Matrix l(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    if (c[i] == 0.0) continue;
    const auto xi = x.row(i);
    for (std::size_t a_ = 0; a_ < k; ++a_) {
      double s = 0.0;
      for (std::size_t b = 0; b < k; ++b) s += a_inv(a_, b) * xi[b];
      l(i, a_) = c[i] * s;
    }
  }
  return l;
}

inline Matrix scaled_gram(const Matrix& x, std::span<const double> w) {
  Matrix g = weighted_gram(x, w);
  g *= 1.0 / static_cast<double>(x.rows());
  return g;
}

inline void check_pinned(const Matrix& x, std::span<const double> gamma) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double z = dot(x.row(i), gamma);
    if (std::abs(z) >= kPinnedIndex) {
      throw Error(ErrorKind::Separation, "fitted propensity pinned to 0/1 at row " +
                                             std::to_string(i) + " (separation)");
    }
  }
}

}  // namespace detail

/// Logit by maximum likelihood (Newton-Raphson from zero).
inline PropensityFit fit_logit_mle(const Matrix& x, std::span<const double> d,
                                   std::span<const double> weights = {}) {
  const std::size_t n = x.rows(), k = x.cols();
  const Vector w = detail::unit_or(weights, n);
  detail::check_classes(d, w);
  const double inv_n = 1.0 / static_cast<double>(n);

  const Objective loglik = [&](std::span<const double> g) {
    ObjectiveEval ev;
    ev.gradient.assign(k, 0.0);
    CompensatedSum value;
    std::vector<CompensatedSum> grad(k);
    Vector curv(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = detail::clamp_index(dot(x.row(i), g));
      const double p = detail::logistic(z);
      // log(1 + e^z) computed stably
      const double log1pexp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      value += w[i] * (d[i] * z - log1pexp);
      const double resid = w[i] * (d[i] - p);
      const auto xi = x.row(i);
      for (std::size_t a = 0; a < k; ++a) grad[a] += resid * xi[a];
      curv[i] = w[i] * p * (1.0 - p);
    }
    ev.value = value.value() * inv_n;
    for (std::size_t a = 0; a < k; ++a) ev.gradient[a] = grad[a].value() * inv_n;
    ev.hessian = detail::scaled_gram(x, curv);
    ev.hessian *= -1.0;
    return ev;
  };

  NewtonReport rep;
  try {
    rep = newton_maximize(loglik, Vector(k, 0.0));
  } catch (const Error& e) {
    throw Error(ErrorKind::Separation, std::string("logit MLE diverged: ") + e.what());
  }
  detail::check_pinned(x, rep.solution);

  PropensityFit fit;
  fit.method = PsMethod::MLE;
  fit.gamma = rep.solution;
  fit.converged = rep.converged;
  fit.iterations = rep.iterations;
  fit.gradient_norm = rep.final_gradient_norm;
  fit.fitted.resize(n);
  Vector curv(n), score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = detail::logistic(dot(x.row(i), fit.gamma));
    fit.fitted[i] = p;
    curv[i] = w[i] * p * (1.0 - p);
    score[i] = w[i] * (d[i] - p);
  }
  fit.linearization = detail::linearize(x, detail::scaled_gram(x, curv), score);
  return fit;
}

/// Logit by inverse probability tilting: maximizes
/// E_n[w (D X'g - (1-D) exp(X'g))], which balances covariates exactly.
inline PropensityFit fit_logit_ipt(const Matrix& x, std::span<const double> d,
                                   std::span<const double> weights = {}) {
  const std::size_t n = x.rows(), k = x.cols();
  const Vector w = detail::unit_or(weights, n);
  detail::check_classes(d, w);
  const double inv_n = 1.0 / static_cast<double>(n);

  bool clamped = false;
  const Objective tilt = [&](std::span<const double> g) {
    ObjectiveEval ev;
    ev.gradient.assign(k, 0.0);
    CompensatedSum value;
    std::vector<CompensatedSum> grad(k);
    Vector curv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = dot(x.row(i), g);
      const double z = detail::clamp_index(raw);
      if (z != raw) clamped = true;
      const auto xi = x.row(i);
      if (d[i] == 1.0) {
        value += w[i] * z;
        for (std::size_t a = 0; a < k; ++a) grad[a] += w[i] * xi[a];
      } else {
        const double e = w[i] * std::exp(z);
        value += -e;
        for (std::size_t a = 0; a < k; ++a) grad[a] += -e * xi[a];
        curv[i] = e;
      }
    }
    ev.value = value.value() * inv_n;
    for (std::size_t a = 0; a < k; ++a) ev.gradient[a] = grad[a].value() * inv_n;
    ev.hessian = detail::scaled_gram(x, curv);
    ev.hessian *= -1.0;
    return ev;
  };

  Vector start(k, 0.0);
  try {
    start = fit_logit_mle(x, d, w).gamma;
  } catch (const Error&) {
  }

  NewtonReport rep;
  auto attempt = [&](Vector init) {
    clamped = false;
    rep = newton_maximize(tilt, std::move(init));
    if (clamped) {
      throw Error(ErrorKind::ObjectiveUnbounded, "exp overflow along tilting iterates");
    }
  };
  try {
    try {
      attempt(start);
    } catch (const Error&) {
      attempt(Vector(k, 0.0));
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ObjectiveUnbounded) throw;
    throw Error(ErrorKind::Separation, std::string("tilting fit diverged: ") + e.what());
  }
  detail::check_pinned(x, rep.solution);

  PropensityFit fit;
  fit.method = PsMethod::IPT;
  fit.gamma = rep.solution;
  fit.converged = rep.converged;
  fit.iterations = rep.iterations;
  fit.gradient_norm = rep.final_gradient_norm;
  fit.fitted.resize(n);
  Vector curv(n, 0.0), score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = dot(x.row(i), fit.gamma);
    fit.fitted[i] = detail::logistic(z);
    const double e = std::exp(z);
    if (d[i] == 0.0) curv[i] = w[i] * e;
    score[i] = w[i] * (d[i] - (1.0 - d[i]) * e);
  }
  fit.linearization = detail::linearize(x, detail::scaled_gram(x, curv), score);
  return fit;
}

namespace detail {

inline OutcomeFit fit_linear(const Matrix& x, std::span<const double> y, std::span<const double> omega,
                             OrMethod method, Subgroup subgroup) {
  const std::size_t n = x.rows(), k = x.cols();
  std::size_t selected = 0;
  for (double o : omega) selected += o > 0.0 ? 1 : 0;
  if (selected < k) {
    throw Error(ErrorKind::InsufficientSubsample,
                "outcome regression " + subgroup.label() + " has " + std::to_string(selected) +
                    " usable rows for " + std::to_string(k) + " coefficients");
  }
  OutcomeFit fit;
  fit.method = method;
  fit.subgroup = subgroup;
  const Matrix gram = scaled_gram(x, omega);
  const Vector rhs = weighted_cross(x, omega, y);
  Vector scaled_rhs(k);
  for (std::size_t a = 0; a < k; ++a) scaled_rhs[a] = rhs[a] / static_cast<double>(n);
  try {
    fit.beta = solve_spd(gram, scaled_rhs);
  } catch (const Error& e) {
    throw Error(e.kind(), "outcome regression " + subgroup.label() + ": " + e.what());
  }
  fit.fitted = multiply(x, fit.beta);
  Vector c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = omega[i] * (y[i] - fit.fitted[i]);
  fit.linearization = linearize(x, gram, c);
  return fit;
}

}  // namespace detail

/// OLS of y on X over rows with mask == 1; fitted values cover all rows.
inline OutcomeFit fit_or_ols(const Matrix& x, std::span<const double> y, std::span<const double> mask,
                             Subgroup subgroup = {}, std::span<const double> weights = {}) {
  const std::size_t n = x.rows();
  const Vector w = detail::unit_or(weights, n);
  Vector omega(n);
  for (std::size_t i = 0; i < n; ++i) omega[i] = w[i] * mask[i];
  return detail::fit_linear(x, y, omega, OrMethod::OLS, subgroup);
}

/// WLS over masked rows with propensity-odds weights pi/(1-pi).
inline OutcomeFit fit_or_wls(const Matrix& x, std::span<const double> y, std::span<const double> mask,
                             const PropensityFit& ps, Subgroup subgroup = {},
                             std::span<const double> weights = {}) {
  const std::size_t n = x.rows();
  const Vector w = detail::unit_or(weights, n);
  Vector omega(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    if (1.0 - ps.fitted[i] < kExtremePropensity) {
      throw Error(ErrorKind::ExtremePropensity,
                  "1 - pi below 1e-6 at row " + std::to_string(i) + " in weighted regression");
    }
    omega[i] = w[i] * mask[i] * ps.odds(i);
  }
  return detail::fit_linear(x, y, omega, OrMethod::WLS, subgroup);
}

}  // namespace drdid
