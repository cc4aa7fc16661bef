#pragma once

// Kang-Schafer style designs with a time-invariant unobservable, their
// panel and repeated cross-section samplers, and the Monte Carlo runner.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "drdid/data.hpp"
#include "drdid/efficiency.hpp"
#include "drdid/error.hpp"
#include "drdid/estimate.hpp"
#include "drdid/numkit.hpp"
#include "drdid/panel.hpp"
#include "drdid/parallel.hpp"
#include "drdid/rc.hpp"
#include "drdid/rng.hpp"

namespace drdid {

enum class Design { Panel, Rc };

constexpr std::string_view to_string(Design d) { return d == Design::Panel ? "panel" : "rc"; }

struct DgpSpec {
  int dgp_id = 1;
  Design design = Design::Panel;
  std::size_t n = 1000;
  double lambda = 0.5;
  std::uint64_t seed = 0;
};

inline double f_reg(std::span<const double> w) { return 210.0 + 27.4 * w[0] + 13.7 * (w[1] + w[2] + w[3]); }

inline double f_ps(std::span<const double> w) {
  return 0.75 * (-w[0] + 0.5 * w[1] - 0.25 * w[2] - 0.1 * w[3]);
}

/// Population mean and sd of the raw transforms from their closed-form
/// moments (Z2 needs one quadrature, E[(1 + e^{X1})^{-2}]):
///   Z1 lognormal: mean e^{1/8}, var e^{1/2} - e^{1/4}
///   Z3 = (0.6 + W)^3, W = X1 X3 / 25 with E W^{2k} = ((2k-1)!!)^2 / 25^{2k}
///   Z4 = S^2, S ~ N(20, 2): mean 402, var 4 (20^2)(2) + 2 (2^2) = 3208
inline constexpr std::array<double, 4> kZMean = {1.1331484530668263, 10.0, 0.21888, 402.0};
inline constexpr std::array<double, 4> kZSd = {0.60390053321088123, 0.54164475060512953,
                                               0.044534067858213773, 56.639209034025184};

inline std::array<double, 4> z_transform(const std::array<double, 4>& x) {
  const std::array<double, 4> raw = {std::exp(0.5 * x[0]), 10.0 + x[1] / (1.0 + std::exp(x[0])),
                                     std::pow(0.6 + x[0] * x[2] / 25.0, 3), std::pow(20.0 + x[0] + x[3], 2)};
  std::array<double, 4> z{};
  for (int j = 0; j < 4; ++j) z[j] = (raw[j] - kZMean[j]) / kZSd[j];
  return z;
}

/// Recovers latent X from standardized Z; used to spot-check that the
/// transform is one-to-one on the sampled support.
inline std::array<double, 4> z_inverse(const std::array<double, 4>& z) {
  std::array<double, 4> raw{};
  for (int j = 0; j < 4; ++j) raw[j] = z[j] * kZSd[j] + kZMean[j];
  std::array<double, 4> x{};
  x[0] = 2.0 * std::log(raw[0]);
  x[1] = (raw[1] - 10.0) * (1.0 + std::exp(x[0]));
  x[2] = 25.0 * (std::cbrt(raw[2]) - 0.6) / x[0];
  x[3] = std::sqrt(raw[3]) - 20.0 - x[0];
  return x;
}

struct Latent {
  Matrix x;  // n x 4 standard normal
  Matrix z;  // n x 4 standardized transforms
};

inline Latent gen_latent(std::size_t n, RngStream& rng) {
  Latent out{Matrix(n, 4), Matrix(n, 4)};
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 4> x{};
    for (double& v : x) v = rng.normal();
    const auto z = z_transform(x);
    for (int j = 0; j < 4; ++j) {
      out.x(i, j) = x[j];
      out.z(i, j) = z[j];
    }
  }
  return out;
}

namespace detail {

inline void check_dgp_id(int id) {
  if (id < 1 || id > 4) throw Error(ErrorKind::InvalidArgument, "dgp id must be 1, 2, 3 or 4");
}

// DGP1/2 put Z in the outcome equation, DGP3/4 put X there; DGP1/3 put Z in
// the propensity, DGP2/4 put X there.
inline bool reg_uses_z(int id) { return id <= 2; }
inline bool ps_uses_z(int id) { return id == 1 || id == 3; }

inline std::span<const double> reg_index(int id, const OracleDraw& w) {
  return reg_uses_z(id) ? std::span<const double>(w.z) : std::span<const double>(w.x);
}

inline std::span<const double> ps_index(int id, const OracleDraw& w) {
  return ps_uses_z(id) ? std::span<const double>(w.z) : std::span<const double>(w.x);
}

// Fixed draw order per unit: X (4 normals), U, v, e0, e1.
inline OracleDraw draw_unit(int id, RngStream& rng) {
  OracleDraw w;
  for (double& v : w.x) v = rng.normal();
  w.z = z_transform(w.x);
  const double p = logistic(f_ps(ps_index(id, w)));
  w.d = p >= rng.uniform() ? 1.0 : 0.0;
  const double f = f_reg(reg_index(id, w));
  const double v = w.d * f + rng.normal();
  w.y0 = f + v + rng.normal();
  w.y1 = 2.0 * f + v + rng.normal();
  return w;
}

inline Matrix observed_design(const std::vector<OracleDraw>& units) {
  Matrix x(units.size(), 5);
  for (std::size_t i = 0; i < units.size(); ++i) {
    x(i, 0) = 1.0;
    for (int j = 0; j < 4; ++j) x(i, 1 + j) = units[i].z[j];
  }
  return x;
}

inline constexpr std::size_t kMaxResamples = 100;

}  // namespace detail

/// Panel sample observing (Y0, Y1, D, Z). `resamples` counts redraws forced
/// by a single-class treatment vector.
inline PanelDataset gen_dgp_panel(const DgpSpec& spec, RngStream& rng, std::size_t* resamples = nullptr) {
  detail::check_dgp_id(spec.dgp_id);
  for (std::size_t attempt = 0; attempt < detail::kMaxResamples; ++attempt) {
    std::vector<OracleDraw> units(spec.n);
    double treated = 0.0;
    for (auto& u : units) {
      u = detail::draw_unit(spec.dgp_id, rng);
      treated += u.d;
    }
    if (treated == 0.0 || treated == static_cast<double>(spec.n)) {
      if (resamples) ++*resamples;
      continue;
    }
    Vector y0(spec.n), y1(spec.n), d(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      y0[i] = units[i].y0;
      y1[i] = units[i].y1;
      d[i] = units[i].d;
    }
    return {std::move(y0), std::move(y1), std::move(d), detail::observed_design(units)};
  }
  throw Error(ErrorKind::DegenerateTreatment, "treatment stayed single-class after repeated draws");
}

/// Repeated cross-section sample: T = 1{U_T <= lambda}, Y = T Y1 + (1-T) Y0.
inline RcDataset gen_dgp_rc(const DgpSpec& spec, RngStream& rng, std::size_t* resamples = nullptr) {
  detail::check_dgp_id(spec.dgp_id);
  detail::check_lambda(spec.lambda);
  for (std::size_t attempt = 0; attempt < detail::kMaxResamples; ++attempt) {
    std::vector<OracleDraw> units(spec.n);
    Vector y(spec.n), t(spec.n), d(spec.n);
    std::array<std::size_t, 4> cells{};
    for (std::size_t i = 0; i < spec.n; ++i) {
      units[i] = detail::draw_unit(spec.dgp_id, rng);
      t[i] = rng.uniform() <= spec.lambda ? 1.0 : 0.0;
      d[i] = units[i].d;
      y[i] = t[i] == 1.0 ? units[i].y1 : units[i].y0;
      ++cells[static_cast<std::size_t>(2 * d[i] + t[i])];
    }
    if (std::find(cells.begin(), cells.end(), 0u) != cells.end()) {
      if (resamples) ++*resamples;
      continue;
    }
    return {std::move(y), std::move(t), std::move(d), detail::observed_design(units)};
  }
  throw Error(ErrorKind::EmptyCell, "a (d, post) cell stayed empty after repeated draws");
}

/// True nuisance functions of DGP `id`, evaluated on the latent draw.
inline OracleDgp oracle_dgp(int id, double lambda = 0.5) {
  detail::check_dgp_id(id);
  OracleDgp dgp;
  dgp.name = "dgp" + std::to_string(id);
  dgp.lambda = lambda;
  dgp.att = 0.0;
  dgp.draw = [id](RngStream& rng) { return detail::draw_unit(id, rng); };
  auto f = [id](const OracleDraw& w) { return f_reg(detail::reg_index(id, w)); };
  dgp.m11 = [f](const OracleDraw& w) { return 3.0 * f(w); };
  dgp.m10 = [f](const OracleDraw& w) { return 2.0 * f(w); };
  dgp.m01 = [f](const OracleDraw& w) { return 2.0 * f(w); };
  dgp.m00 = [f](const OracleDraw& w) { return f(w); };
  dgp.p = [id](const OracleDraw& w) { return detail::logistic(f_ps(detail::ps_index(id, w))); };
  return dgp;
}

struct McSummary {
  std::string estimator;
  std::size_t reps = 0;      // successful replications
  std::size_t failures = 0;
  double avg_bias = 0.0;
  double med_bias = 0.0;
  double rmse = 0.0;
  double mean_asy_var = 0.0;  // mean of n se^2; NaN without SEs
  double coverage = 0.0;      // NaN without SEs
  double ci_length = 0.0;     // NaN without SEs
  double mc_se_of_bias = 0.0;
};

struct McOptions {
  std::size_t reps = 1000;
  std::size_t threads = 1;
  EstimatorOptions estimator;  // seed is replaced per replication
  double max_failure_rate = 0.01;
};

struct McRun {
  std::vector<McSummary> rows;
  std::size_t resamples = 0;
};

/// Per-replication draws of a single estimator.
struct McDraws {
  Vector att, se;
  std::vector<char> ok;
  std::vector<std::string> errors;
};

inline McSummary summarize_mc(std::string estimator, const McDraws& draws, std::size_t n, double level,
                              double truth = 0.0) {
  McSummary s;
  s.estimator = std::move(estimator);
  Vector att, se;
  for (std::size_t r = 0; r < draws.ok.size(); ++r) {
    if (!draws.ok[r]) {
      ++s.failures;
      continue;
    }
    att.push_back(draws.att[r] - truth);
    se.push_back(draws.se[r]);
  }
  s.reps = att.size();
  if (att.empty()) {
    s.avg_bias = s.med_bias = s.rmse = s.mean_asy_var = s.coverage = s.ci_length = s.mc_se_of_bias =
        std::nan("");
    return s;
  }
  const double m = static_cast<double>(att.size());
  s.avg_bias = mean(att);
  s.med_bias = quantile(att, 0.5);
  CompensatedSum sq, dev;
  for (double a : att) {
    sq += a * a;
    dev += (a - s.avg_bias) * (a - s.avg_bias);
  }
  s.rmse = std::sqrt(sq.value() / m);
  s.mc_se_of_bias = att.size() > 1 ? std::sqrt(dev.value() / (m - 1.0) / m) : std::nan("");
  const bool have_se = std::all_of(se.begin(), se.end(), [](double v) { return std::isfinite(v); });
  if (!have_se) {
    s.mean_asy_var = s.coverage = s.ci_length = std::nan("");
    return s;
  }
  const double z = critical_value(level);
  CompensatedSum asy, covered, length;
  for (std::size_t r = 0; r < att.size(); ++r) {
    asy += static_cast<double>(n) * se[r] * se[r];
    covered += std::abs(att[r]) <= z * se[r] ? 1.0 : 0.0;
    length += 2.0 * z * se[r];
  }
  s.mean_asy_var = asy.value() / m;
  s.coverage = covered.value() / m;
  s.ci_length = length.value() / m;
  return s;
}

/// Runs `reps` replications of the design; replication r uses data stream
/// (seed, r) and bootstrap seed derived from (seed, r), so results do not
/// depend on the thread count.
inline McRun run_mc(const DgpSpec& spec, const std::vector<std::string>& estimators, const McOptions& opts) {
  for (const auto& e : estimators) {
    const auto& catalog = spec.design == Design::Panel ? std::span<const std::string_view>(kPanelEstimators)
                                                       : std::span<const std::string_view>(kRcEstimators);
    if (std::find(catalog.begin(), catalog.end(), e) == catalog.end()) {
      throw Error(ErrorKind::InvalidArgument, "unknown estimator '" + e + "' for design " +
                                                  std::string(to_string(spec.design)));
    }
  }
  const std::size_t k = estimators.size();
  std::vector<McDraws> draws(k);
  for (auto& d : draws) {
    d.att.assign(opts.reps, std::nan(""));
    d.se.assign(opts.reps, std::nan(""));
    d.ok.assign(opts.reps, 0);
    d.errors.assign(opts.reps, {});
  }
  std::vector<std::size_t> resamples(opts.reps, 0);

  parallel_for(opts.reps, opts.threads, [&](std::size_t r) {
    RngStream rng(spec.seed, r, stream::data);
    EstimatorOptions eo = opts.estimator;
    eo.seed = detail::splitmix64(spec.seed ^ detail::splitmix64(r + 1));
    eo.threads = 1;
    if (spec.design == Design::Panel) {
      const PanelDataset data = gen_dgp_panel(spec, rng, &resamples[r]);
      for (std::size_t e = 0; e < k; ++e) {
        try {
          const AttEstimate est = estimate_panel(estimators[e], data, eo);
          draws[e].att[r] = est.att;
          draws[e].se[r] = est.se;
          draws[e].ok[r] = std::isfinite(est.att) ? 1 : 0;
        } catch (const Error& err) {
          draws[e].errors[r] = err.what();
        }
      }
    } else {
      const RcDataset data = gen_dgp_rc(spec, rng, &resamples[r]);
      for (std::size_t e = 0; e < k; ++e) {
        try {
          const AttEstimate est = estimate_rc(estimators[e], data, eo);
          draws[e].att[r] = est.att;
          draws[e].se[r] = est.se;
          draws[e].ok[r] = std::isfinite(est.att) ? 1 : 0;
        } catch (const Error& err) {
          draws[e].errors[r] = err.what();
        }
      }
    }
  });

  McRun run;
  for (std::size_t r : resamples) run.resamples += r;
  for (std::size_t e = 0; e < k; ++e) {
    McSummary s = summarize_mc(estimators[e], draws[e], spec.n, opts.estimator.level);
    const double rate = static_cast<double>(s.failures) / static_cast<double>(std::max<std::size_t>(opts.reps, 1));
    if (rate > opts.max_failure_rate) {
      std::string first;
      for (const auto& msg : draws[e].errors)
        if (!msg.empty()) {
          first = msg;
          break;
        }
      throw Error(ErrorKind::FailureRateExceeded,
                  estimators[e] + " failed in " + std::to_string(s.failures) + " of " +
                      std::to_string(opts.reps) + " replications (first: " + first + ")");
    }
    run.rows.push_back(std::move(s));
  }
  return run;
}

}  // namespace drdid
