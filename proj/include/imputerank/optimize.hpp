#pragma once

// Deterministic first-order solvers shared by the MRF trainer, the MICE
// predictors and the KL estimator. Both use Barzilai-Borwein trial steps
// with monotone Armijo backtracking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace imputerank::optim {

struct Options {
  double step = 1.0;   // first trial step
  std::size_t max_iters = 500;
  double tol = 1e-5;   // gradient (or projected gradient) norm
  double armijo = 1e-4;
  int max_backtracks = 60;
  bool keep_trace = false;
  /// Stop as stalled once this many consecutive accepted steps each change f
  /// by no more than a few ulps (the gradient can no longer be resolved).
  std::size_t stagnation_window = 50;
};

struct Result {
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool stalled = false;        // line search could not make progress
  std::vector<double> trace;   // accepted objective values (when requested)
};

namespace detail {

inline bool negligible_change(double before, double after) {
  return std::abs(before - after) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(before));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double bb_step(std::span<const double> s, std::span<const double> y, double fallback) {
  const double ss = dot(s, s);
  const double sy = std::abs(dot(s, y));
  if (!(sy > 0.0) || !std::isfinite(ss / sy)) return fallback;
  return std::clamp(ss / sy, 1e-10, 1e10);
}

}  // namespace detail

/// Maximizes a smooth objective. `f(x, grad)` returns the value and fills
/// the gradient. Accepted iterates never decrease the objective.
/// Returns with `value` = NaN if the objective is non-finite at x0.
template <class Objective>
Result maximize(Objective&& f, std::vector<double> x0, const Options& opt) {
  Result r;
  const std::size_t n = x0.size();
  r.x = std::move(x0);
  std::vector<double> g(n), g_new(n), x_new(n), s(n), y(n);
  r.value = f(std::span<const double>(r.x), std::span<double>(g));
  if (!std::isfinite(r.value)) {
    r.value = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  if (opt.keep_trace) r.trace.push_back(r.value);
  r.grad_norm = std::sqrt(detail::dot(g, g));
  double step = opt.step;
  std::size_t flat = 0;
  for (r.iterations = 0; r.iterations < opt.max_iters; ++r.iterations) {
    if (r.grad_norm <= opt.tol) {
      r.converged = true;
      return r;
    }
    const double gg = r.grad_norm * r.grad_norm;
    bool accepted = false;
    double value_new = 0.0;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = r.x[i] + step * g[i];
      value_new = f(std::span<const double>(x_new), std::span<double>(g_new));
      if (std::isfinite(value_new) && value_new >= r.value + opt.armijo * step * gg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      r.stalled = true;
      return r;
    }
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - r.x[i];
      y[i] = g_new[i] - g[i];
    }
    r.x.swap(x_new);
    g.swap(g_new);
    flat = detail::negligible_change(r.value, value_new) ? flat + 1 : 0;
    r.value = value_new;
    if (opt.keep_trace) r.trace.push_back(r.value);
    r.grad_norm = std::sqrt(detail::dot(g, g));
    step = detail::bb_step(s, y, step);
    if (opt.stagnation_window > 0 && flat >= opt.stagnation_window && r.grad_norm > opt.tol) {
      ++r.iterations;
      r.stalled = true;
      return r;
    }
  }
  r.converged = r.grad_norm <= opt.tol;
  return r;
}

/// Minimizes a smooth objective subject to x_i >= floor (elementwise).
/// Iterates are projected onto the feasible box; accepted iterates never
/// increase the objective. Convergence is measured by the norm of the
/// projected-gradient step x - P(x - grad).
template <class Objective>
Result minimize_bounded(Objective&& f, std::vector<double> x0, double floor, const Options& opt) {
  Result r;
  const std::size_t n = x0.size();
  for (double& v : x0) v = std::max(v, floor);
  r.x = std::move(x0);
  std::vector<double> g(n), g_new(n), x_new(n), s(n), y(n);
  r.value = f(std::span<const double>(r.x), std::span<double>(g));
  if (!std::isfinite(r.value)) {
    r.value = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  if (opt.keep_trace) r.trace.push_back(r.value);
  auto projected_norm = [&](std::span<const double> x, std::span<const double> grad) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::max(x[i] - grad[i], floor) - x[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  r.grad_norm = projected_norm(r.x, g);
  double step = opt.step;
  std::size_t flat = 0;
  for (r.iterations = 0; r.iterations < opt.max_iters; ++r.iterations) {
    if (r.grad_norm <= opt.tol) {
      r.converged = true;
      return r;
    }
    bool accepted = false;
    double value_new = 0.0;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x_new[i] = std::max(r.x[i] - step * g[i], floor);
        decrease += g[i] * (x_new[i] - r.x[i]);
      }
      value_new = f(std::span<const double>(x_new), std::span<double>(g_new));
      if (std::isfinite(value_new) && value_new <= r.value + opt.armijo * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      r.stalled = true;
      return r;
    }
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - r.x[i];
      y[i] = g_new[i] - g[i];
    }
    r.x.swap(x_new);
    g.swap(g_new);
    flat = detail::negligible_change(r.value, value_new) ? flat + 1 : 0;
    r.value = value_new;
    if (opt.keep_trace) r.trace.push_back(r.value);
    r.grad_norm = projected_norm(r.x, g);
    step = detail::bb_step(s, y, step);
    if (opt.stagnation_window > 0 && flat >= opt.stagnation_window && r.grad_norm > opt.tol) {
      ++r.iterations;
      r.stalled = true;
      return r;
    }
  }
  r.converged = r.grad_norm <= opt.tol;
  return r;
}

}  // namespace imputerank::optim
