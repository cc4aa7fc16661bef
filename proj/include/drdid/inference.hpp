#pragma once

// Influence functions of the doubly robust estimators, plug-in standard
// errors, and the multiplier bootstrap used for the comparison estimators.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drdid/data.hpp"
#include "drdid/error.hpp"
#include "drdid/estimate.hpp"
#include "drdid/nuisance.hpp"
#include "drdid/numkit.hpp"
#include "drdid/parallel.hpp"
#include "drdid/rng.hpp"

namespace drdid {

struct EifVector {
  Vector values;
  std::vector<std::pair<std::string, Vector>> components;

  const Vector* component(std::string_view name) const {
    for (const auto& [k, v] : components)
      if (k == name) return &v;
    return nullptr;
  }
};

/// Control and (optionally) treated cell regressions for cross-sections.
struct RcOutcomeFits {
  OutcomeFit control_pre;   // (d=0, t=0)
  OutcomeFit control_post;  // (d=0, t=1)
  std::optional<OutcomeFit> treated_pre;
  std::optional<OutcomeFit> treated_post;
};

namespace detail {

// Rescales v so that its sample mean is one.
inline Vector hajek(Vector v) {
  const double s = sum(v);
  if (!(s > 0.0)) throw Error(ErrorKind::EmptyCell, "weights vanish on a required subsample");
  const double scale = static_cast<double>(v.size()) / s;
  for (double& x : v) x *= scale;
  return v;
}

inline double mean_product(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / static_cast<double>(a.size());
}

// E_n[c_i X_i]
inline Vector weighted_column_means(const Matrix& x, std::span<const double> c) {
  Vector ones(c.size(), 1.0);
  Vector out = weighted_cross(x, c, ones);
  for (double& v : out) v /= static_cast<double>(x.rows());
  return out;
}

inline const Vector& weights_or(const Vector& fallback, std::span<const double> w, Vector& storage) {
  if (w.empty()) return fallback;
  storage.assign(w.begin(), w.end());
  return storage;
}

inline void require_linearization(const Matrix& l, std::size_t n, const char* what) {
  if (l.rows() != n || l.cols() == 0) {
    throw Error(ErrorKind::MissingLinearization, std::string(what) + " fit carries no linearization");
  }
}

}  // namespace detail

/// Influence values of the panel DR estimator: eta1 - eta0 - eta_est, every
/// population moment replaced by its sample analogue. `weights` defaults to
/// the dataset weights; zero entries exclude (trimmed) observations.
inline EifVector eif_dr_panel(const PanelDataset& data, const PropensityFit& ps, const OutcomeFit& or_fit,
                              double att, bool include_est_effect, std::span<const double> weights = {}) {
  (void)att;
  const std::size_t n = data.n();
  Vector storage;
  const Vector& w = detail::weights_or(data.weights, weights, storage);
  const Vector dy = data.delta_y();

  Vector raw1(n), raw0(n), r(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw1[i] = w[i] * data.d[i];
    raw0[i] = w[i] * (1.0 - data.d[i]) * ps.odds(i);
    r[i] = dy[i] - or_fit.fitted[i];
  }
  const Vector w1 = detail::hajek(raw1), w0 = detail::hajek(raw0);
  const double a1 = detail::mean_product(w1, r), a0 = detail::mean_product(w0, r);

  EifVector out;
  Vector eta1(n), eta0(n), est(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    eta1[i] = w1[i] * (r[i] - a1);
    eta0[i] = w0[i] * (r[i] - a0);
  }
  if (include_est_effect) {
    detail::require_linearization(ps.linearization, n, "propensity");
    detail::require_linearization(or_fit.linearization, n, "outcome");
    Vector diff(n), centred(n);
    for (std::size_t i = 0; i < n; ++i) {
      diff[i] = w1[i] - w0[i];
      centred[i] = w0[i] * (r[i] - a0);
    }
    const Vector reg_grad = detail::weighted_column_means(data.x, diff);
    const Vector ps_grad = detail::weighted_column_means(data.x, centred);
    for (std::size_t i = 0; i < n; ++i) {
      est[i] = dot(or_fit.linearization.row(i), reg_grad) + dot(ps.linearization.row(i), ps_grad);
    }
  }
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = eta1[i] - eta0[i] - est[i];
  out.components = {{"eta1", std::move(eta1)}, {"eta0", std::move(eta0)}, {"eta_est", std::move(est)}};
  return out;
}

/// Influence values of the improved panel estimator: (w1 - w0)(dY - mu) - w1 att.
inline EifVector eif_dr_imp_panel(const PanelDataset& data, const PropensityFit& ps, const OutcomeFit& or_fit,
                                  double att, std::span<const double> weights = {}) {
  const std::size_t n = data.n();
  Vector storage;
  const Vector& w = detail::weights_or(data.weights, weights, storage);
  const Vector dy = data.delta_y();
  Vector raw1(n), raw0(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw1[i] = w[i] * data.d[i];
    raw0[i] = w[i] * (1.0 - data.d[i]) * ps.odds(i);
  }
  const Vector w1 = detail::hajek(raw1), w0 = detail::hajek(raw0);
  EifVector out;
  out.values.resize(n);
  Vector eta1(n), eta0(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = dy[i] - or_fit.fitted[i];
    eta1[i] = w1[i] * (r - att);
    eta0[i] = w0[i] * r;
    out.values[i] = eta1[i] - eta0[i];
  }
  out.components = {{"eta1", std::move(eta1)}, {"eta0", std::move(eta0)}, {"eta_est", Vector(n, 0.0)}};
  return out;
}

/// Influence values of the cross-section DR estimators, j = 1 or 2.
/// Gradients of the estimate with respect to the control-cell coefficients
/// use pooled treated/control covariate means, which equal their cell
/// counterparts in population because (D, X) does not depend on T.
inline EifVector eif_dr_rc(int j, const RcDataset& data, const PropensityFit& ps, const RcOutcomeFits& fits,
                           double att, bool include_est_effect, std::span<const double> weights = {}) {
  (void)att;
  if (j != 1 && j != 2) throw Error(ErrorKind::InvalidArgument, "eif_dr_rc: j must be 1 or 2");
  if (j == 2 && (!fits.treated_pre || !fits.treated_post)) {
    throw Error(ErrorKind::InvalidArgument, "eif_dr_rc: j = 2 needs treated-cell regressions");
  }
  const std::size_t n = data.n();
  Vector storage;
  const Vector& w = detail::weights_or(data.weights, weights, storage);

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
  const Vector w11 = detail::hajek(r11), w10 = detail::hajek(r10), w01 = detail::hajek(r01),
               w00 = detail::hajek(r00), w1 = detail::hajek(r1), w0 = detail::hajek(r0);

  const Vector& mu01 = fits.control_post.fitted;
  const Vector& mu00 = fits.control_pre.fitted;
  Vector e01(n), e00(n);
  for (std::size_t i = 0; i < n; ++i) {
    e01[i] = data.y[i] - mu01[i];
    e00[i] = data.y[i] - mu00[i];
  }
  const double c01 = detail::mean_product(w01, e01), c00 = detail::mean_product(w00, e00);

  Vector eta1(n), eta0(n), est(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eta0[i] = w01[i] * (e01[i] - c01) - w00[i] * (e00[i] - c00);

  if (j == 1) {
    const double a11 = detail::mean_product(w11, e01), a10 = detail::mean_product(w10, e00);
    for (std::size_t i = 0; i < n; ++i) eta1[i] = w11[i] * (e01[i] - a11) - w10[i] * (e00[i] - a10);
  } else {
    const Vector& mu11 = fits.treated_post->fitted;
    const Vector& mu10 = fits.treated_pre->fitted;
    Vector m1(n), m0(n), e11(n), e10(n);
    for (std::size_t i = 0; i < n; ++i) {
      m1[i] = mu11[i] - mu10[i];
      m0[i] = mu01[i] - mu00[i];
      e11[i] = data.y[i] - mu11[i];
      e10[i] = data.y[i] - mu10[i];
    }
    const double b1 = detail::mean_product(w1, m1), b0 = detail::mean_product(w1, m0);
    const double a11 = detail::mean_product(w11, e11), a10 = detail::mean_product(w10, e10);
    for (std::size_t i = 0; i < n; ++i) {
      const double eta11 = w1[i] * (m1[i] - b1) + w11[i] * (e11[i] - a11);
      const double eta10 = w1[i] * (m0[i] - b0) + w10[i] * (e10[i] - a10);
      eta1[i] = eta11 - eta10;
    }
  }

  if (include_est_effect) {
    detail::require_linearization(ps.linearization, n, "propensity");
    detail::require_linearization(fits.control_post.linearization, n, "outcome (d=0, t=1)");
    detail::require_linearization(fits.control_pre.linearization, n, "outcome (d=0, t=0)");
    Vector diff(n), centred(n);
    for (std::size_t i = 0; i < n; ++i) {
      diff[i] = w1[i] - w0[i];
      centred[i] = w01[i] * (e01[i] - c01) - w00[i] * (e00[i] - c00);
    }
    const Vector reg_grad = detail::weighted_column_means(data.x, diff);
    const Vector ps_grad = detail::weighted_column_means(data.x, centred);
    for (std::size_t i = 0; i < n; ++i) {
      est[i] = dot(fits.control_post.linearization.row(i), reg_grad) -
               dot(fits.control_pre.linearization.row(i), reg_grad) +
               dot(ps.linearization.row(i), ps_grad);
    }
  }

  EifVector out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = eta1[i] - eta0[i] - est[i];
  out.components = {{"eta1", std::move(eta1)}, {"eta0", std::move(eta0)}, {"eta_est", std::move(est)}};
  return out;
}

/// sqrt(mean(values^2) / n)
inline double se_from_eif(std::span<const double> values) {
  if (values.empty()) return 0.0;
  CompensatedSum sq;
  for (double v : values) sq += v * v;
  const double n = static_cast<double>(values.size());
  return std::sqrt(sq.value() / n / n);
}

inline std::pair<double, std::pair<double, double>> se_ci_from_eif(const EifVector& eif, double att,
                                                                  double level = 0.95) {
  const double se = se_from_eif(eif.values);
  const double z = critical_value(level);
  return {se, {att - z * se, att + z * se}};
}

struct BootstrapResult {
  double se = 0.0;
  std::size_t draws = 0;
  double nonfinite_rate = 0.0;
};

/// Normal IQR, q75 - q25 of N(0, 1).
inline constexpr double kNormalIqr = 1.3489795003921634;

/// Multiplier bootstrap: draw b feeds iid standard exponential multipliers
/// from stream (seed, b) to `estimator`; se = IQR of the finite draws over
/// the normal IQR.
inline BootstrapResult multiplier_bootstrap(const std::function<double(std::span<const double>)>& estimator,
                                            std::size_t n, std::size_t draws, std::uint64_t seed,
                                            std::size_t threads = 1) {
  BootstrapResult out;
  out.draws = draws;
  if (draws == 0) {
    out.se = std::nan("");
    return out;
  }
  Vector estimates(draws, std::nan(""));
  parallel_for(draws, threads, [&](std::size_t b) {
    RngStream rng(seed, b, stream::bootstrap);
    Vector v(n);
    for (double& x : v) x = rng.exponential();
    try {
      estimates[b] = estimator(v);
    } catch (const Error&) {
    }
  });
  Vector finite;
  for (double e : estimates)
    if (std::isfinite(e)) finite.push_back(e);
  out.nonfinite_rate = 1.0 - static_cast<double>(finite.size()) / static_cast<double>(draws);
  if (finite.size() < 2 || out.nonfinite_rate > 0.5) {
    throw Error(ErrorKind::NonFiniteDraw, "bootstrap produced " + std::to_string(draws - finite.size()) +
                                              " non-finite draws out of " + std::to_string(draws));
  }
  out.se = (quantile(finite, 0.75) - quantile(finite, 0.25)) / kNormalIqr;
  return out;
}

}  // namespace drdid
