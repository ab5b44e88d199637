#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "presnet/linalg.hpp"

namespace presnet {

/// Full-batch objective: fills `grad` and returns the loss at `theta`.
using Objective = std::function<double(const Vec& theta, Vec& grad)>;

struct ConvergenceCriteria {
  double grad_tol = 1e-9;      // stop when ||g||_inf <= grad_tol
  double f_change_tol = 1e-9;  // stop when |f_k - f_{k-1}| <= tol*max(1,|f_k|)
  std::size_t max_iter = 20000;
};

inline void validate_criteria(const ConvergenceCriteria& c) {
  require(c.grad_tol > 0.0 && c.f_change_tol > 0.0,
          "criteria: tolerances must be > 0");
}

enum class StopReason {
  grad_tol,
  f_change_tol,
  max_iter,
  line_search_failure,
  non_finite  // objective produced a non-finite value; run aborted
};

enum class OptimizerKind { adam, lbfgs };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "lbfgs";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "lbfgs") return OptimizerKind::lbfgs;
  fail("unknown optimizer: " + s + " (expected adam or lbfgs)");
}

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::grad_tol: return "grad_tol";
    case StopReason::f_change_tol: return "f_change_tol";
    case StopReason::max_iter: return "max_iter";
    case StopReason::line_search_failure: return "line_search_failure";
    case StopReason::non_finite: return "non_finite";
  }
  return "?";
}

struct IterInfo {
  std::size_t iter;  // 1-based completed iteration
  double f;
  double grad_inf;
  const Vec& x;
  double elapsed_s;
};

using IterObserver = std::function<void(const IterInfo&)>;

struct OptimReport {
  std::size_t iterations = 0;
  StopReason stop_reason = StopReason::max_iter;
  Vec loss_history;  // one entry per completed iteration
  double wall_time_s = 0.0;
  double final_f = 0.0;
  double final_grad_inf = 0.0;
  std::size_t evals = 0;
  std::string diagnostic;
};

namespace detail {

inline bool finite_all(const Vec& v) noexcept {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Deterministic full-batch Adam (beta1=0.9, beta2=0.999, eps=1e-8, bias
/// correction). Aborts with a diagnostic on non-finite loss or gradient.
inline std::pair<Vec, OptimReport> adam_minimize(
    const Objective& objective, Vec x, double lr,
    const ConvergenceCriteria& criteria, const IterObserver& observer = {}) {
  require(lr > 0.0, "adam: learning rate must be > 0");
  validate_criteria(criteria);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  detail::WallClock clock;
  OptimReport report;
  Vec g(x.size());
  double f = objective(x, g);
  report.evals = 1;
  if (!std::isfinite(f) || !detail::finite_all(g)) {
    report.stop_reason = StopReason::non_finite;
    report.diagnostic = "non-finite objective at the starting point";
    report.final_f = f;
    report.final_grad_inf = norm_inf(g);
    report.wall_time_s = clock.seconds();
    return {std::move(x), std::move(report)};
  }

  Vec m(x.size(), 0.0), v(x.size(), 0.0);
  double f_prev = f;
  report.final_f = f;
  report.final_grad_inf = norm_inf(g);
  if (report.final_grad_inf <= criteria.grad_tol) {
    report.stop_reason = StopReason::grad_tol;
    report.wall_time_s = clock.seconds();
    return {std::move(x), std::move(report)};
  }

  double b1k = 1.0, b2k = 1.0;
  for (std::size_t k = 1; k <= criteria.max_iter; ++k) {
    b1k *= beta1;
    b2k *= beta2;
    const double c1 = 1.0 / (1.0 - b1k), c2 = 1.0 / (1.0 - b2k);
    Vec x_prev = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
    }
    f = objective(x, g);
    ++report.evals;
    if (!std::isfinite(f) || !detail::finite_all(g)) {
      x = std::move(x_prev);  // keep the last finite iterate
      report.stop_reason = StopReason::non_finite;
      report.diagnostic =
          "non-finite objective at iteration " + std::to_string(k);
      break;
    }
    report.loss_history.push_back(f);
    report.iterations = k;
    report.final_f = f;
    report.final_grad_inf = norm_inf(g);
    if (observer)
      observer(IterInfo{k, f, report.final_grad_inf, x, clock.seconds()});
    if (report.final_grad_inf <= criteria.grad_tol) {
      report.stop_reason = StopReason::grad_tol;
      break;
    }
    if (std::abs(f - f_prev) <=
        criteria.f_change_tol * std::max(1.0, std::abs(f))) {
      report.stop_reason = StopReason::f_change_tol;
      break;
    }
    f_prev = f;
    if (k == criteria.max_iter) report.stop_reason = StopReason::max_iter;
  }
  report.wall_time_s = clock.seconds();
  return {std::move(x), std::move(report)};
}

namespace detail {

/// Minimizer of the cubic interpolant through (a, fa, da), (b, fb, db);
/// NaN when the interpolant has no interior minimum.
inline double cubic_minimizer(double a, double fa, double da, double b,
                              double fb, double db) noexcept {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double sq = std::sqrt(disc);
  const double d2 = b >= a ? sq : -sq;
  return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

struct LineSearchResult {
  bool ok = false;
  double alpha = 0.0;
  double f = 0.0;
  std::string note;
};

/// Strong-Wolfe line search (c1=1e-4, c2=0.9) with bracketing and
/// cubic-interpolation zoom. phi(a) = objective(x + a*d).
/// Trial points with non-finite values are treated as sufficient-decrease
/// violations, which drives the bracket back toward finite territory.
class WolfeSearch {
 public:
  WolfeSearch(const Objective& obj, const Vec& x0, const Vec& d, double f0,
              double dphi0, Vec& x_out, Vec& g_out, std::size_t& evals)
      : obj_(obj), x0_(x0), d_(d), f0_(f0), dphi0_(dphi0),
        pad_(1e-15 * std::max(1.0, std::abs(f0))), x_(x_out), g_(g_out),
        evals_(evals) {}

  LineSearchResult run(double alpha_init) {
    constexpr double c1 = 1e-4, c2 = 0.9;
    constexpr int max_expand = 60;
    double alpha_prev = 0.0, f_prev = f0_, d_prev = dphi0_;
    double alpha = alpha_init;
    for (int i = 1; i <= max_expand; ++i) {
      const double f = phi(alpha);
      const double dp = dir_deriv();
      if (!std::isfinite(f) || f > f0_ + c1 * alpha * dphi0_ + pad_ ||
          (i > 1 && f >= f_prev))
        return zoom(alpha_prev, f_prev, d_prev, alpha, f, dp, c1, c2);
      if (std::abs(dp) <= -c2 * dphi0_) return refine(alpha, f, dp, c1, c2);
      if (dp >= 0.0) return zoom(alpha, f, dp, alpha_prev, f_prev, d_prev, c1, c2);
      alpha_prev = alpha;
      f_prev = f;
      d_prev = dp;
      alpha = std::min(2.0 * alpha, 1e10);
    }
    return {false, 0.0, 0.0, "line search: bracket expansion exhausted"};
  }

 private:
  double phi(double alpha) {
    x_.resize(x0_.size());
    for (std::size_t i = 0; i < x0_.size(); ++i)
      x_[i] = x0_[i] + alpha * d_[i];
    ++evals_;
    return obj_(x_, g_);
  }

  // Directional derivative at the last phi() point.
  double dir_deriv() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < d_.size(); ++i) acc += g_[i] * d_[i];
    return acc;
  }

  LineSearchResult accept(double alpha, double f) {
    return {true, alpha, f, ""};
  }

  // One secant polish of an already acceptable step: place the trial at the
  // root of the linearly interpolated directional derivative. On a quadratic
  // objective the directional derivative is linear in the step length, so
  // the trial is the exact line minimizer (which is what makes the optimizer
  // terminate finitely on quadratics), and unlike interpolation through
  // function values it does not lose accuracy to cancellation near a
  // minimum. The refined point is only taken when it satisfies the same
  // acceptance conditions; otherwise the original step stands.
  LineSearchResult refine(double alpha, double f, double dp, double c1,
                          double c2) {
    if (std::abs(dp) <= 1e-10 * -dphi0_) return accept(alpha, f);
    const double trial = alpha * dphi0_ / (dphi0_ - dp);
    if (!std::isfinite(trial) || trial < 0.1 * alpha || trial > 10.0 * alpha ||
        trial == alpha)
      return accept(alpha, f);
    Vec x_save = x_, g_save = g_;
    const double f_ref = phi(trial);
    const double dp_ref = dir_deriv();
    if (std::isfinite(f_ref) && f_ref <= f0_ + c1 * trial * dphi0_ + pad_ &&
        std::abs(dp_ref) <= -c2 * dphi0_)
      return accept(trial, f_ref);
    x_.swap(x_save);
    g_.swap(g_save);
    return accept(alpha, f);
  }

  // lo always satisfies sufficient decrease; the minimum lies between lo
  // and hi. Cubic interpolation is exact on quadratic objectives.
  LineSearchResult zoom(double lo, double f_lo, double d_lo, double hi,
                        double f_hi, double d_hi, double c1, double c2) {
    constexpr int max_zoom = 50;
    for (int i = 0; i < max_zoom; ++i) {
      const double width = std::abs(hi - lo);
      if (width <= 1e-14 * std::max(1.0, std::abs(lo)))
        return {false, 0.0, 0.0, "line search: zoom interval collapsed"};
      const double a = std::min(lo, hi), b = std::max(lo, hi);
      double trial = cubic_minimizer(lo, f_lo, d_lo, hi, f_hi, d_hi);
      const double guard = 1e-3 * width;
      if (!std::isfinite(trial) || trial < a + guard || trial > b - guard)
        trial = 0.5 * (lo + hi);
      const double f = phi(trial);
      const double dp = dir_deriv();
      if (!std::isfinite(f) || f > f0_ + c1 * trial * dphi0_ + pad_ ||
          f >= f_lo) {
        hi = trial;
        f_hi = f;
        d_hi = dp;
      } else {
        if (std::abs(dp) <= -c2 * dphi0_) return accept(trial, f);
        if (dp * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
          d_hi = d_lo;
        }
        lo = trial;
        f_lo = f;
        d_lo = dp;
      }
    }
    return {false, 0.0, 0.0, "line search: zoom iterations exhausted"};
  }

  const Objective& obj_;
  const Vec& x0_;
  const Vec& d_;
  double f0_, dphi0_;
  // Armijo comparisons carry this allowance: once the required decrease
  // falls below the rounding noise of evaluating the objective twice
  // (~machine epsilon times |f|), the literal test compares noise against
  // noise and would make the search fail spuriously right before
  // convergence. The allowance is far below any resolvable decrease, so it
  // changes nothing away from that regime.
  double pad_;
  Vec& x_;
  Vec& g_;
  std::size_t& evals_;
};

}  // namespace detail

/// L-BFGS (two-loop recursion, history default 10) with the strong-Wolfe
/// search above. Unconstrained: no box handling. Line-search failure is
/// recorded in the report, never thrown.
inline std::pair<Vec, OptimReport> lbfgs_minimize(
    const Objective& objective, Vec x, const ConvergenceCriteria& criteria,
    std::size_t history_size = 10, const IterObserver& observer = {}) {
  validate_criteria(criteria);
  require(history_size >= 1, "lbfgs: history size must be >= 1");

  detail::WallClock clock;
  OptimReport report;
  const std::size_t n = x.size();
  Vec g(n);
  double f = objective(x, g);
  report.evals = 1;
  if (!std::isfinite(f) || !detail::finite_all(g)) {
    report.stop_reason = StopReason::non_finite;
    report.diagnostic = "non-finite objective at the starting point";
    report.final_f = f;
    report.final_grad_inf = norm_inf(g);
    report.wall_time_s = clock.seconds();
    return {std::move(x), std::move(report)};
  }
  report.final_f = f;
  report.final_grad_inf = norm_inf(g);
  if (report.final_grad_inf <= criteria.grad_tol) {
    report.stop_reason = StopReason::grad_tol;
    report.wall_time_s = clock.seconds();
    return {std::move(x), std::move(report)};
  }

  std::vector<Vec> s_hist, y_hist;
  Vec rho_hist;
  Vec d(n), q(n), alpha_buf;
  Vec x_trial(n), g_trial(n);
  double f_prev = f;

  for (std::size_t k = 1; k <= criteria.max_iter; ++k) {
    // Two-loop recursion for d = -H g.
    q = g;
    const std::size_t m = s_hist.size();
    alpha_buf.assign(m, 0.0);
    for (std::size_t idx = m; idx-- > 0;) {
      const double a = rho_hist[idx] * dot(s_hist[idx], q);
      alpha_buf[idx] = a;
      axpy(-a, y_hist[idx], q);
    }
    if (m > 0) {
      const double ys = dot(s_hist[m - 1], y_hist[m - 1]);
      const double yy = dot(y_hist[m - 1], y_hist[m - 1]);
      const double gamma = ys / yy;
      for (double& qi : q) qi *= gamma;
    }
    for (std::size_t idx = 0; idx < m; ++idx) {
      const double beta = rho_hist[idx] * dot(y_hist[idx], q);
      axpy(alpha_buf[idx] - beta, s_hist[idx], q);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];

    double dphi0 = dot(g, d);
    if (dphi0 >= 0.0) {
      // Direction lost descent; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      dphi0 = dot(g, d);
      if (dphi0 >= 0.0) {
        report.stop_reason = StopReason::grad_tol;
        break;  // gradient is exactly zero
      }
    }

    const double alpha_init =
        k == 1 ? std::min(1.0, 1.0 / std::max(norm_inf(g), 1e-12)) : 1.0;
    detail::WolfeSearch search(objective, x, d, f, dphi0, x_trial, g_trial,
                               report.evals);
    detail::LineSearchResult ls = search.run(alpha_init);
    if (!ls.ok) {
      report.stop_reason = StopReason::line_search_failure;
      report.diagnostic = ls.note;
      break;
    }

    // Curvature pair from the accepted step.
    Vec s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_trial[i] - x[i];
      y[i] = g_trial[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-10 * norm2(s) * norm2(y)) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > history_size) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }

    x = x_trial;
    g = g_trial;
    f = ls.f;
    report.loss_history.push_back(f);
    report.iterations = k;
    report.final_f = f;
    report.final_grad_inf = norm_inf(g);
    if (observer)
      observer(IterInfo{k, f, report.final_grad_inf, x, clock.seconds()});
    if (!std::isfinite(f) || !detail::finite_all(g)) {
      report.stop_reason = StopReason::non_finite;
      report.diagnostic =
          "non-finite accepted step at iteration " + std::to_string(k);
      break;
    }
    if (report.final_grad_inf <= criteria.grad_tol) {
      report.stop_reason = StopReason::grad_tol;
      break;
    }
    if (std::abs(f - f_prev) <=
        criteria.f_change_tol * std::max(1.0, std::abs(f))) {
      report.stop_reason = StopReason::f_change_tol;
      break;
    }
    f_prev = f;
    if (k == criteria.max_iter) report.stop_reason = StopReason::max_iter;
  }
  report.wall_time_s = clock.seconds();
  return {std::move(x), std::move(report)};
}

}  // namespace presnet
