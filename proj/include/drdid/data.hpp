#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "drdid/error.hpp"
#include "drdid/numkit.hpp"

namespace drdid {

namespace detail {

inline void check_binary(std::span<const double> v, const char* name) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) {
      throw Error(ErrorKind::InvalidArgument,
                  std::string(name) + " must be 0/1 (row " + std::to_string(i) + ")");
    }
  }
}

inline void check_design(const Matrix& x, std::size_t n) {
  if (x.rows() != n || x.cols() == 0) {
    throw Error(ErrorKind::InvalidArgument, "design matrix must have one row per observation");
  }
  if (!x.all_finite()) throw Error(ErrorKind::InvalidArgument, "design matrix has non-finite entries");
  for (std::size_t i = 0; i < n; ++i) {
    if (x(i, 0) != 1.0) {
      throw Error(ErrorKind::InvalidArgument, "first design column must be the constant 1");
    }
  }
}

// Observation weights normalised to mean one; empty means unit weights.
inline Vector normalized_weights(Vector w, std::size_t n) {
  if (w.empty()) return Vector(n, 1.0);
  if (w.size() != n) throw Error(ErrorKind::InvalidArgument, "weight vector length mismatch");
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw Error(ErrorKind::InvalidArgument, "observation weights must be finite and nonnegative");
    }
  }
  const double m = mean(w);
  if (!(m > 0.0)) throw Error(ErrorKind::InvalidArgument, "observation weights sum to zero");
  for (double& x : w) x /= m;
  return w;
}

}  // namespace detail

/// Two-period panel: both outcomes observed for every unit.
struct PanelDataset {
  Vector y0;
  Vector y1;
  Vector d;
  Matrix x;        // first column is the constant
  Vector weights;  // mean one

  PanelDataset() = default;
  PanelDataset(Vector y0_, Vector y1_, Vector d_, Matrix x_, Vector weights_ = {})
      : y0(std::move(y0_)), y1(std::move(y1_)), d(std::move(d_)), x(std::move(x_)) {
    const std::size_t n = d.size();
    if (y0.size() != n || y1.size() != n) {
      throw Error(ErrorKind::InvalidArgument, "panel vectors must share one length");
    }
    detail::check_binary(d, "d");
    detail::check_design(x, n);
    weights = detail::normalized_weights(std::move(weights_), n);
    double treated = 0.0;
    for (std::size_t i = 0; i < n; ++i) treated += weights[i] * d[i];
    if (treated <= 0.0 || treated >= static_cast<double>(n) - 1e-12 * static_cast<double>(n)) {
      throw Error(ErrorKind::AllTreatedOrAllControl, "panel needs both treated and control units");
    }
  }

  std::size_t n() const noexcept { return d.size(); }
  std::size_t k() const noexcept { return x.cols(); }

  Vector delta_y() const {
    Vector out(n());
    for (std::size_t i = 0; i < n(); ++i) out[i] = y1[i] - y0[i];
    return out;
  }

  PanelDataset reweighted(Vector w) const { return {y0, y1, d, x, std::move(w)}; }
};

/// Pooled repeated cross-sections: each observation seen in one period.
struct RcDataset {
  Vector y;
  Vector t;  // 1 = post-treatment period
  Vector d;
  Matrix x;
  Vector weights;
  double lambda_hat = 0.0;  // weighted share of post-period observations

  RcDataset() = default;
  RcDataset(Vector y_, Vector t_, Vector d_, Matrix x_, Vector weights_ = {})
      : y(std::move(y_)), t(std::move(t_)), d(std::move(d_)), x(std::move(x_)) {
    const std::size_t n = d.size();
    if (y.size() != n || t.size() != n) {
      throw Error(ErrorKind::InvalidArgument, "cross-section vectors must share one length");
    }
    detail::check_binary(d, "d");
    detail::check_binary(t, "post");
    detail::check_design(x, n);
    weights = detail::normalized_weights(std::move(weights_), n);
    double cells[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    CompensatedSum post;
    for (std::size_t i = 0; i < n; ++i) {
      cells[static_cast<int>(d[i])][static_cast<int>(t[i])] += weights[i];
      post += weights[i] * t[i];
    }
    for (int dd = 0; dd < 2; ++dd) {
      for (int tt = 0; tt < 2; ++tt) {
        if (!(cells[dd][tt] > 0.0)) {
          throw Error(ErrorKind::EmptyCell, "cell (d=" + std::to_string(dd) +
                                                ", post=" + std::to_string(tt) + ") is empty");
        }
      }
    }
    lambda_hat = post.value() / static_cast<double>(n);
  }

  std::size_t n() const noexcept { return d.size(); }
  std::size_t k() const noexcept { return x.cols(); }

  RcDataset reweighted(Vector w) const { return {y, t, d, x, std::move(w)}; }
};

}  // namespace drdid
