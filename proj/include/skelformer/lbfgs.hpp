#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <string>

#include "skelformer/common.hpp"

namespace skelformer {

struct LbfgsOptions {
  int memory = 10;
  int max_iters = 500;
  double grad_tol = 1e-6;        // stop when ||g||_inf < grad_tol
  double wolfe_c1 = 1e-4;        // sufficient decrease
  double wolfe_c2 = 0.9;         // curvature
  int max_line_iters = 30;
};

struct LbfgsResult {
  VecXd x;
  double f = 0.0;
  VecXd grad;
  int iterations = 0;
  bool converged = false;
};

/// Objective: fills grad and returns f(x).
using LbfgsObjective = std::function<double(const VecXd&, VecXd&)>;

namespace detail {

// Minimizer of the cubic Hermite interpolant through (a, fa, da), (b, fb,
// db). Falls back to the midpoint when the cubic is degenerate.
inline double cubic_minimizer(double a, double fa, double da, double b,
                              double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc < 0.0) return 0.5 * (a + b);
  const double d2 = (b > a ? 1.0 : -1.0) * std::sqrt(disc);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return 0.5 * (a + b);
  const double alpha = b - (b - a) * (db + d2 - d1) / denom;
  // Safeguard: stay strictly inside the interval.
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double margin = 0.1 * (hi - lo);
  if (!(alpha > lo + margin) || !(alpha < hi - margin)) return 0.5 * (a + b);
  return alpha;
}

// Strong Wolfe line search (bracket + zoom with cubic interpolation).
// Returns the accepted step, or 0 if no acceptable step was found. If the
// zoom budget runs out, the best Armijo point seen is returned instead of
// failing outright.
inline double wolfe_line_search(const LbfgsObjective& fn, const VecXd& x,
                                const VecXd& dir, double f0, const VecXd& g0,
                                double alpha_init, const LbfgsOptions& opt,
                                double& f_out, VecXd& x_out, VecXd& g_out) {
  const double d0 = g0.dot(dir);
  if (!(d0 < 0.0)) return 0.0;  // not a descent direction

  VecXd x_try(x.size()), g_try(x.size());
  double f_try = 0.0, d_try = 0.0;
  auto eval = [&](double a) {
    x_try = x + a * dir;
    f_try = fn(x_try, g_try);
    d_try = g_try.dot(dir);
  };
  auto armijo_ok = [&](double a, double f) {
    return std::isfinite(f) && f <= f0 + opt.wolfe_c1 * a * d0;
  };
  auto accept = [&](double a) {
    f_out = f_try;
    x_out = x_try;
    g_out = g_try;
    return a;
  };

  // lo tracks the best Armijo-satisfying point seen.
  double alpha_lo = 0.0, f_lo = f0, d_lo = d0;
  VecXd x_lo = x, g_lo = g0;
  double alpha_hi = 0.0, f_hi = 0.0, d_hi = 0.0;

  double alpha = alpha_init;
  double alpha_prev = 0.0, f_prev = f0, d_prev = d0;
  VecXd x_prev = x, g_prev = g0;

  bool bracketed = false;
  for (int i = 0; i < opt.max_line_iters; ++i) {
    eval(alpha);
    if (!armijo_ok(alpha, f_try) || (i > 0 && f_try >= f_prev)) {
      alpha_lo = alpha_prev;
      f_lo = f_prev;
      d_lo = d_prev;
      x_lo = x_prev;
      g_lo = g_prev;
      alpha_hi = alpha;
      f_hi = f_try;
      d_hi = d_try;
      bracketed = true;
      break;
    }
    if (std::abs(d_try) <= -opt.wolfe_c2 * d0) return accept(alpha);
    if (d_try >= 0.0) {
      alpha_lo = alpha;
      f_lo = f_try;
      d_lo = d_try;
      x_lo = x_try;
      g_lo = g_try;
      alpha_hi = alpha_prev;
      f_hi = f_prev;
      d_hi = d_prev;
      bracketed = true;
      break;
    }
    alpha_prev = alpha;
    f_prev = f_try;
    d_prev = d_try;
    x_prev = x_try;
    g_prev = g_try;
    alpha *= 2.0;
  }
  if (!bracketed) {
    // Expansion budget exhausted while still descending: keep the progress.
    if (alpha_prev > 0.0 && f_prev < f0) {
      f_out = f_prev;
      x_out = std::move(x_prev);
      g_out = std::move(g_prev);
      return alpha_prev;
    }
    return 0.0;
  }

  for (int i = 0; i < opt.max_line_iters; ++i) {
    if (!std::isfinite(f_hi)) {
      alpha = 0.5 * (alpha_lo + alpha_hi);
    } else {
      alpha = cubic_minimizer(alpha_lo, f_lo, d_lo, alpha_hi, f_hi, d_hi);
    }
    eval(alpha);
    if (!armijo_ok(alpha, f_try) || f_try >= f_lo) {
      alpha_hi = alpha;
      f_hi = f_try;
      d_hi = d_try;
      continue;
    }
    if (std::abs(d_try) <= -opt.wolfe_c2 * d0) return accept(alpha);
    if (d_try * (alpha_hi - alpha_lo) >= 0.0) {
      alpha_hi = alpha_lo;
      f_hi = f_lo;
      d_hi = d_lo;
    }
    alpha_lo = alpha;
    f_lo = f_try;
    d_lo = d_try;
    x_lo = x_try;
    g_lo = g_try;
  }
  // Zoom budget exhausted; settle for the best Armijo point (weak Wolfe).
  if (alpha_lo > 0.0 && f_lo < f0) {
    f_out = f_lo;
    x_out = std::move(x_lo);
    g_out = std::move(g_lo);
    return alpha_lo;
  }
  return 0.0;
}

}  // namespace detail

/// Limited-memory BFGS with strong Wolfe line search.
inline LbfgsResult lbfgs_minimize(const LbfgsObjective& fn, VecXd x0,
                                  const LbfgsOptions& opt = {}) {
  LbfgsResult res;
  res.x = std::move(x0);
  res.grad.resize(res.x.size());
  res.f = fn(res.x, res.grad);
  if (!std::isfinite(res.f)) {
    throw NonFinite("lbfgs_minimize: objective non-finite at start");
  }

  std::deque<VecXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  VecXd x_new(res.x.size()), g_new(res.x.size());

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    if (res.grad.template lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    VecXd q = res.grad;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[static_cast<size_t>(i)] =
          rho_hist[static_cast<size_t>(i)] *
          s_hist[static_cast<size_t>(i)].dot(q);
      q -= alpha[static_cast<size_t>(i)] * y_hist[static_cast<size_t>(i)];
    }
    if (!s_hist.empty()) {
      const VecXd& s = s_hist.back();
      const VecXd& y = y_hist.back();
      q *= s.dot(y) / y.squaredNorm();
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    VecXd dir = -q;

    double f_new = 0.0;
    const double alpha0 =
        s_hist.empty() ? 1.0 / std::max(1e-12, dir.norm()) : 1.0;
    double step = detail::wolfe_line_search(fn, res.x, dir, res.f, res.grad,
                                            alpha0, opt, f_new, x_new, g_new);
    if (step == 0.0) {
      // Retry along steepest descent before giving up.
      dir = -res.grad;
      step = detail::wolfe_line_search(fn, res.x, dir, res.f, res.grad,
                                       alpha0, opt, f_new, x_new, g_new);
      if (step == 0.0) break;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    VecXd s = x_new - res.x;
    VecXd y = g_new - res.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    res.x.swap(x_new);
    res.grad.swap(g_new);
    res.f = f_new;
    res.iterations = iter + 1;
    if (!std::isfinite(res.f)) {
      throw NonFinite("lbfgs_minimize: objective became non-finite");
    }
  }
  return res;
}

}  // namespace skelformer
