#pragma once

// Monte Carlo evaluation of the semiparametric efficiency bounds for the
// ATT under panel and repeated cross-section sampling, given the true
// nuisance functions of a data generating process.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "drdid/error.hpp"
#include "drdid/numkit.hpp"
#include "drdid/parallel.hpp"
#include "drdid/rng.hpp"

namespace drdid {

/// One draw of potential outcomes with its latent covariates.
struct OracleDraw {
  std::array<double, 4> x{};  // latent
  std::array<double, 4> z{};  // standardized transforms (when used)
  double d = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
};

struct OracleDgp {
  std::string name;
  std::function<OracleDraw(RngStream&)> draw;
  std::function<double(const OracleDraw&)> m11, m10, m01, m00, p;
  double lambda = 0.5;
  double att = 0.0;
};

/// Monte Carlo estimate with its standard error.
struct McValue {
  double value = 0.0;
  double mc_se = 0.0;
};

inline constexpr std::size_t kBoundChunk = 1u << 15;

namespace detail {

// Per-chunk moments of (a, b) where the target is E[a] / E[b]^2.
struct RatioMoments {
  CompensatedSum a, aa, b, bb, ab;
  std::size_t count = 0;
};

// Evaluates `integrand(draw, rng) -> (a, b)` over `draws` draws split into
// fixed chunks, each with its own stream, so the result does not depend on
// the thread count.
template <class Integrand>
std::vector<RatioMoments> chunked_moments(const OracleDgp& dgp, std::size_t draws, std::uint64_t seed,
                                          std::size_t threads, Integrand integrand) {
  const std::size_t chunks = (draws + kBoundChunk - 1) / kBoundChunk;
  std::vector<RatioMoments> parts(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    RngStream rng(seed, c, stream::bound);
    const std::size_t m = std::min(kBoundChunk, draws - c * kBoundChunk);
    RatioMoments& r = parts[c];
    for (std::size_t i = 0; i < m; ++i) {
      const OracleDraw w = dgp.draw(rng);
      const auto [a, b] = integrand(w, rng);
      r.a += a;
      r.aa += a * a;
      r.b += b;
      r.bb += b * b;
      r.ab += a * b;
    }
    r.count = m;
  });
  return parts;
}

// E[a] / E[b]^2 with a delta-method standard error.
inline McValue ratio_over_square(const std::vector<RatioMoments>& parts) {
  CompensatedSum a, aa, b, bb, ab;
  double n = 0.0;
  for (const auto& p : parts) {
    a += p.a.value();
    aa += p.aa.value();
    b += p.b.value();
    bb += p.bb.value();
    ab += p.ab.value();
    n += static_cast<double>(p.count);
  }
  const double ma = a.value() / n, mb = b.value() / n;
  const double va = aa.value() / n - ma * ma, vb = bb.value() / n - mb * mb;
  const double cab = ab.value() / n - ma * mb;
  const double theta = ma / (mb * mb);
  const double ga = 1.0 / (mb * mb), gb = -2.0 * theta / mb;
  const double var = ga * ga * va + gb * gb * vb + 2.0 * ga * gb * cab;
  return {theta, std::sqrt(std::max(var, 0.0) / n)};
}

inline void check_draws(std::size_t draws) {
  if (draws < 2) throw Error(ErrorKind::InvalidArgument, "bound integration needs at least two draws");
}

inline void check_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorKind::InvalidArgument, "lambda must lie in (0, 1)");
}

}  // namespace detail

/// Panel bound: E[D (cATT - att)^2 + D (dY - m1d)^2 + (1-D) odds^2 (dY - m0d)^2] / E[D]^2.
inline McValue eff_bound_panel(const OracleDgp& dgp, std::size_t draws, std::uint64_t seed,
                               std::size_t threads = 1) {
  detail::check_draws(draws);
  auto parts = detail::chunked_moments(dgp, draws, seed, threads, [&](const OracleDraw& w, RngStream&) {
    const double m1d = dgp.m11(w) - dgp.m10(w), m0d = dgp.m01(w) - dgp.m00(w);
    const double dy = w.y1 - w.y0;
    const double p = dgp.p(w), odds = p / (1.0 - p);
    const double c = m1d - m0d - dgp.att;
    const double a = w.d * (c * c + (dy - m1d) * (dy - m1d)) +
                     (1.0 - w.d) * odds * odds * (dy - m0d) * (dy - m0d);
    return std::pair{a, w.d};
  });
  return detail::ratio_over_square(parts);
}

/// Cross-section bound with T ~ Bernoulli(lambda) drawn independently.
inline McValue eff_bound_rc(const OracleDgp& dgp, double lambda, std::size_t draws, std::uint64_t seed,
                            std::size_t threads = 1) {
  detail::check_draws(draws);
  detail::check_lambda(lambda);
  auto parts = detail::chunked_moments(dgp, draws, seed, threads, [&](const OracleDraw& w, RngStream& rng) {
    const double t = rng.uniform() <= lambda ? 1.0 : 0.0;
    const double y = t * w.y1 + (1.0 - t) * w.y0;
    const double m11 = dgp.m11(w), m10 = dgp.m10(w), m01 = dgp.m01(w), m00 = dgp.m00(w);
    const double p = dgp.p(w), odds = p / (1.0 - p);
    const double c = (m11 - m10) - (m01 - m00) - dgp.att;
    const double l1 = 1.0 / (lambda * lambda), l0 = 1.0 / ((1.0 - lambda) * (1.0 - lambda));
    const double treated = c * c + t * l1 * (y - m11) * (y - m11) + (1.0 - t) * l0 * (y - m10) * (y - m10);
    const double control = odds * odds * (t * l1 * (y - m01) * (y - m01) + (1.0 - t) * l0 * (y - m00) * (y - m00));
    return std::pair{w.d * treated + (1.0 - w.d) * control, w.d};
  });
  return detail::ratio_over_square(parts);
}

/// Gap between the cross-section and panel bounds when T is independent of
/// everything else; nonnegative by construction.
inline McValue bound_gap_panel_rc(const OracleDgp& dgp, double lambda, std::size_t draws, std::uint64_t seed,
                                  std::size_t threads = 1) {
  detail::check_draws(draws);
  detail::check_lambda(lambda);
  const double a1 = std::sqrt((1.0 - lambda) / lambda), a0 = std::sqrt(lambda / (1.0 - lambda));
  auto parts = detail::chunked_moments(dgp, draws, seed, threads, [&](const OracleDraw& w, RngStream&) {
    const double p = dgp.p(w), odds = p / (1.0 - p);
    const double s1 = a1 * (w.y1 - dgp.m11(w)) + a0 * (w.y0 - dgp.m10(w));
    const double s0 = a1 * (w.y1 - dgp.m01(w)) + a0 * (w.y0 - dgp.m00(w));
    return std::pair{w.d * s1 * s1 + (1.0 - w.d) * odds * odds * s0 * s0, w.d};
  });
  return detail::ratio_over_square(parts);
}

/// Period-specific residual scales sigma_t^2 and the bound-minimizing
/// lambda = sigma_1 / (sigma_0 + sigma_1).
struct OptimalLambda {
  double lambda = 0.5;
  double sigma0_sq = 0.0;
  double sigma1_sq = 0.0;
};

inline OptimalLambda optimal_lambda(const OracleDgp& dgp, std::size_t draws, std::uint64_t seed,
                                    std::size_t threads = 1) {
  detail::check_draws(draws);
  // a carries sigma_1^2 terms, b carries sigma_0^2 terms
  auto parts = detail::chunked_moments(dgp, draws, seed, threads, [&](const OracleDraw& w, RngStream&) {
    const double p = dgp.p(w), odds = p / (1.0 - p);
    const double e11 = w.y1 - dgp.m11(w), e01 = w.y1 - dgp.m01(w);
    const double e10 = w.y0 - dgp.m10(w), e00 = w.y0 - dgp.m00(w);
    const double s1 = w.d * e11 * e11 + (1.0 - w.d) * odds * odds * e01 * e01;
    const double s0 = w.d * e10 * e10 + (1.0 - w.d) * odds * odds * e00 * e00;
    return std::pair{s1, s0};
  });
  CompensatedSum a, b;
  double n = 0.0;
  for (const auto& p : parts) {
    a += p.a.value();
    b += p.b.value();
    n += static_cast<double>(p.count);
  }
  OptimalLambda out;
  out.sigma1_sq = a.value() / n;
  out.sigma0_sq = b.value() / n;
  const double s1 = std::sqrt(out.sigma1_sq), s0 = std::sqrt(out.sigma0_sq);
  out.lambda = (s0 + s1) > 0.0 ? s1 / (s0 + s1) : 0.5;
  return out;
}

/// Efficiency loss of the first cross-section DR estimand relative to the
/// second: Var[a1 (m11 - m01) + a0 (m10 - m00) | D = 1] / E[D].
inline McValue dr1_dr2_gap_rc(const OracleDgp& dgp, double lambda, std::size_t draws, std::uint64_t seed,
                              std::size_t threads = 1) {
  detail::check_draws(draws);
  detail::check_lambda(lambda);
  const double a1 = std::sqrt((1.0 - lambda) / lambda), a0 = std::sqrt(lambda / (1.0 - lambda));
  struct Sums {
    CompensatedSum g1, g2, g3, g4;
    double treated = 0.0;
  };
  const std::size_t chunks = (draws + kBoundChunk - 1) / kBoundChunk;
  std::vector<Sums> parts(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    RngStream rng(seed, c, stream::bound);
    const std::size_t m = std::min(kBoundChunk, draws - c * kBoundChunk);
    for (std::size_t i = 0; i < m; ++i) {
      const OracleDraw w = dgp.draw(rng);
      if (w.d != 1.0) continue;
      const double g = a1 * (dgp.m11(w) - dgp.m01(w)) + a0 * (dgp.m10(w) - dgp.m00(w));
      parts[c].g1 += g;
      parts[c].g2 += g * g;
      parts[c].g3 += g * g * g;
      parts[c].g4 += g * g * g * g;
      parts[c].treated += 1.0;
    }
  });
  CompensatedSum s1, s2, s3, s4;
  double n1 = 0.0;
  for (const auto& p : parts) {
    s1 += p.g1.value();
    s2 += p.g2.value();
    s3 += p.g3.value();
    s4 += p.g4.value();
    n1 += p.treated;
  }
  if (n1 < 2.0) throw Error(ErrorKind::DegenerateTreatment, "too few treated draws for the variance");
  const double mu = s1.value() / n1, e2 = s2.value() / n1, e3 = s3.value() / n1, e4 = s4.value() / n1;
  const double var = std::max(e2 - mu * mu, 0.0);
  const double m4 = e4 - 4.0 * mu * e3 + 6.0 * mu * mu * e2 - 3.0 * mu * mu * mu * mu;
  const double share = n1 / static_cast<double>(draws);
  return {var / share, std::sqrt(std::max(m4 - var * var, 0.0) / n1) / share};
}

/// Oracle with constant conditional ATT `effect`, latent X ~ N(0, 1),
/// p = 0.5, Y0 = X + sd0 e0 and Y1 = 2X + effect D + sd1 e1.
inline OracleDgp homogeneous_oracle(double effect, double sd0, double sd1) {
  OracleDgp dgp;
  dgp.name = "homogeneous";
  dgp.att = effect;
  dgp.draw = [=](RngStream& rng) {
    OracleDraw w;
    w.x[0] = rng.normal();
    w.d = rng.uniform() <= 0.5 ? 1.0 : 0.0;
    w.y0 = w.x[0] + sd0 * rng.normal();
    w.y1 = 2.0 * w.x[0] + effect * w.d + sd1 * rng.normal();
    return w;
  };
  dgp.m10 = [](const OracleDraw& w) { return w.x[0]; };
  dgp.m00 = dgp.m10;
  dgp.m11 = [=](const OracleDraw& w) { return 2.0 * w.x[0] + effect; };
  dgp.m01 = [](const OracleDraw& w) { return 2.0 * w.x[0]; };
  dgp.p = [](const OracleDraw&) { return 0.5; };
  return dgp;
}

}  // namespace drdid
