#pragma once

// Dense numerical kernel: compensated reductions, Cholesky solves,
// weighted least squares and a damped Newton maximizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drdid/error.hpp"

namespace drdid {

using Vector = std::vector<double>;

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double sum(std::span<const double> v) {
  CompensatedSum acc;
  for (double x : v) acc += x;
  return acc.value();
}

inline double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : sum(v) / static_cast<double>(v.size());
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc.value();
}

inline double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorKind::InvalidArgument, "matrix entry count does not match shape");
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error(ErrorKind::InvalidArgument, "ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  const Vector& entries() const noexcept { return data_; }

  Matrix& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  Vector column(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline Vector multiply(const Matrix& a, std::span<const double> x) {
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

/// X' diag(w) X, compensated per entry.
inline Matrix weighted_gram(const Matrix& x, std::span<const double> w) {
  const std::size_t k = x.cols();
  std::vector<CompensatedSum> acc(k * k);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (w[i] == 0.0) continue;
    const auto r = x.row(i);
    for (std::size_t a = 0; a < k; ++a) {
      const double wa = w[i] * r[a];
      for (std::size_t b = a; b < k; ++b) acc[a * k + b] += wa * r[b];
    }
  }
  Matrix g(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      g(a, b) = acc[a * k + b].value();
      g(b, a) = g(a, b);
    }
  }
  return g;
}

/// X' (w .* y)
inline Vector weighted_cross(const Matrix& x, std::span<const double> w, std::span<const double> y) {
  const std::size_t k = x.cols();
  std::vector<CompensatedSum> acc(k);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (w[i] == 0.0) continue;
    const double wy = w[i] * y[i];
    const auto r = x.row(i);
    for (std::size_t a = 0; a < k; ++a) acc[a] += wy * r[a];
  }
  Vector out(k);
  for (std::size_t a = 0; a < k; ++a) out[a] = acc[a].value();
  return out;
}

/// Lower-triangular Cholesky factor L with A = L L'.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : l_(a.rows(), a.cols()) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw Error(ErrorKind::InvalidArgument, "Cholesky needs a square matrix");
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    const double pivot_floor = 1e-12 * max_diag;
    for (std::size_t j = 0; j < n; ++j) {
      CompensatedSum d;
      d += a(j, j);
      for (std::size_t k = 0; k < j; ++k) d += -l_(j, k) * l_(j, k);
      const double pivot = d.value();
      if (!(pivot > pivot_floor) || max_diag == 0.0) {
        throw Error(ErrorKind::NotPositiveDefinite,
                    "pivot " + std::to_string(pivot) + " at column " + std::to_string(j) +
                        " (collinear columns?)");
      }
      const double ljj = std::sqrt(pivot);
      l_(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        CompensatedSum s;
        s += a(i, j);
        for (std::size_t k = 0; k < j; ++k) s += -l_(i, k) * l_(j, k);
        l_(i, j) = s.value() / ljj;
      }
    }
  }

  Vector solve(std::span<const double> b) const {
    const std::size_t n = l_.rows();
    Vector z(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      CompensatedSum s;
      s += z[i];
      for (std::size_t k = 0; k < i; ++k) s += -l_(i, k) * z[k];
      z[i] = s.value() / l_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      CompensatedSum s;
      s += z[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s += -l_(k, ii) * z[k];
      z[ii] = s.value() / l_(ii, ii);
    }
    return z;
  }

  Matrix inverse() const {
    const std::size_t n = l_.rows();
    Matrix inv(n, n);
    Vector e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = 1.0;
      const Vector c = solve(e);
      for (std::size_t i = 0; i < n; ++i) inv(i, j) = c[i];
      e[j] = 0.0;
    }
    return inv;
  }

 private:
  Matrix l_;
};

/// Solves A x = b for symmetric positive definite A, refining once
/// against the residual.
inline Vector solve_spd(const Matrix& a, std::span<const double> b) {
  const Cholesky chol(a);
  Vector x = chol.solve(b);
  Vector r(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) r[i] = b[i] - dot(a.row(i), x);
  const Vector dx = chol.solve(r);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
  return x;
}

/// argmin_b sum_i w_i (y_i - X_i'b)^2 via the weighted normal equations.
inline Vector weighted_lsq(const Matrix& x, std::span<const double> y, std::span<const double> w) {
  if (y.size() != x.rows() || w.size() != x.rows()) {
    throw Error(ErrorKind::InvalidArgument, "weighted_lsq: dimension mismatch");
  }
  if (!(sum(w) > 0.0)) throw Error(ErrorKind::InvalidArgument, "weighted_lsq: weights sum to zero");
  return solve_spd(weighted_gram(x, w), weighted_cross(x, w, y));
}

struct ObjectiveEval {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

/// Value/gradient/Hessian oracle for newton_maximize.
using Objective = std::function<ObjectiveEval(std::span<const double>)>;

struct NewtonReport {
  Vector solution;
  std::size_t iterations = 0;
  double final_gradient_norm = 0.0;  // sup-norm
  bool converged = false;
};

struct NewtonOptions {
  double tol = 1e-9;
  std::size_t max_iter = 100;
  std::size_t max_halvings = 30;
  bool polish = true;  // one extra Newton step after convergence when it helps
};

namespace detail {

// Direction solving (-H) d = g; falls back to steepest ascent when -H is not PD.
inline std::pair<Vector, bool> ascent_direction(const ObjectiveEval& ev) {
  const std::size_t k = ev.gradient.size();
  Matrix neg(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) neg(i, j) = -ev.hessian(i, j);
  try {
    return {solve_spd(neg, ev.gradient), true};
  } catch (const Error&) {
    return {ev.gradient, false};
  }
}

}  // namespace detail

inline NewtonReport newton_maximize(const Objective& objective, Vector init,
                                    const NewtonOptions& opts = {}) {
  NewtonReport report;
  Vector x = std::move(init);
  ObjectiveEval ev = objective(x);
  if (!std::isfinite(ev.value)) {
    throw Error(ErrorKind::InvalidArgument, "objective not finite at the initial point");
  }
  for (std::size_t iter = 0;; ++iter) {
    const double gnorm = sup_norm(ev.gradient);
    if (gnorm <= opts.tol) {
      report.converged = true;
      report.iterations = iter;
      break;
    }
    if (iter >= opts.max_iter) {
      throw Error(ErrorKind::MaxIterationsExceeded,
                  "no convergence after " + std::to_string(opts.max_iter) +
                      " iterations (gradient norm " + std::to_string(gnorm) + ")");
    }
    auto [dir, newton_step] = detail::ascent_direction(ev);
    double step = 1.0;
    bool accepted = false;
    for (std::size_t h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
      Vector trial(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + step * dir[i];
      ObjectiveEval tev = objective(trial);
      if (std::isfinite(tev.value) && tev.value >= ev.value) {
        x = std::move(trial);
        ev = std::move(tev);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!newton_step) {
        throw Error(ErrorKind::HessianSingular,
                    "line search failed along steepest ascent; Hessian not negative definite");
      }
      throw Error(ErrorKind::MaxIterationsExceeded,
                  "line search stalled with gradient norm " + std::to_string(gnorm));
    }
  }

  if (opts.polish) {
    auto [dir, newton_step] = detail::ascent_direction(ev);
    if (newton_step) {
      Vector trial(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + dir[i];
      ObjectiveEval tev = objective(trial);
      const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(ev.value);
      if (std::isfinite(tev.value) && tev.value >= ev.value - slack &&
          sup_norm(tev.gradient) < sup_norm(ev.gradient)) {
        x = std::move(trial);
        ev = std::move(tev);
      }
    }
  }
  report.solution = std::move(x);
  report.final_gradient_norm = sup_norm(ev.gradient);
  return report;
}

}  // namespace drdid
