#pragma once

// Adaptive Simpson quadrature and window extremum search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "wlcert/errors.hpp"

namespace wlcert {

struct QuadratureConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  std::size_t max_subdivisions = std::size_t{1} << 20;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) {
      throw ConfigError("quadrature tolerances must be strictly positive");
    }
    if (max_subdivisions == 0) {
      throw ConfigError("quadrature max_subdivisions must be positive");
    }
  }
};

namespace detail {

struct SimpsonPanel {
  double a, b;
  double fa, fm, fb;
  double whole;
  double tol;
};

inline double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double checked_eval(F& f, double x, double partial) {
  const double v = f(x);
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite integrand at x=" << x << " (partial integral " << partial << ")";
    throw NumericError(msg.str(), partial);
  }
  return v;
}

// Adaptive Simpson on one smooth segment. Uses an explicit stack; `budget`
// counts subdivisions across all segments of one integral.
template <class F>
double simpson_segment(F& f, double a, double b, double tol, std::size_t& budget,
                       double& residual, double partial) {
  if (b <= a) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = checked_eval(f, a, partial);
  const double fm = checked_eval(f, m, partial);
  const double fb = checked_eval(f, b, partial);

  double total = 0.0;
  std::vector<SimpsonPanel> stack;
  stack.push_back({a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol});
  const double min_width = (b - a) * 1e-14;

  while (!stack.empty()) {
    const SimpsonPanel p = stack.back();
    stack.pop_back();
    const double mid = 0.5 * (p.a + p.b);
    const double lm = 0.5 * (p.a + mid);
    const double rm = 0.5 * (mid + p.b);
    const double flm = checked_eval(f, lm, partial + total);
    const double frm = checked_eval(f, rm, partial + total);
    const double left = simpson(p.a, mid, p.fa, flm, p.fm);
    const double right = simpson(mid, p.b, p.fm, frm, p.fb);
    const double err = left + right - p.whole;
    if (std::abs(err) <= 15.0 * p.tol || (p.b - p.a) <= min_width) {
      if (std::abs(err) > 15.0 * p.tol) residual += std::abs(err) / 15.0;
      total += left + right + err / 15.0;
      continue;
    }
    if (budget == 0) {
      residual += std::abs(err) / 15.0;
      for (const auto& q : stack) residual += std::abs(q.whole);
      std::ostringstream msg;
      msg << "adaptive Simpson did not converge on [" << a << ", " << b
          << "]: subdivision budget exhausted, residual estimate " << residual;
      throw NumericError(msg.str(), partial + total, residual);
    }
    --budget;
    stack.push_back({mid, p.b, p.fm, frm, p.fb, right, 0.5 * p.tol});
    stack.push_back({p.a, mid, p.fa, flm, p.fm, left, 0.5 * p.tol});
  }
  return total;
}

}  // namespace detail

/// Integral of `f` over [a, b], split at every breakpoint strictly inside
/// (a, b). Throws NumericError on non-finite integrand values or when the
/// subdivision budget runs out.
template <class F>
double integrate(F&& f, double a, double b, const QuadratureConfig& q,
                 std::span<const double> breaks = {}) {
  if (a == b) return 0.0;
  if (b < a) return -integrate(f, b, a, q, breaks);

  std::vector<double> nodes{a};
  for (double x : breaks) {
    if (x > a && x < b) nodes.push_back(x);
  }
  nodes.push_back(b);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  // A coarse pass sets the global tolerance scale.
  double coarse = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double lo = nodes[i], hi = nodes[i + 1];
    coarse += detail::simpson(lo, hi, detail::checked_eval(f, lo, 0.0),
                              detail::checked_eval(f, 0.5 * (lo + hi), 0.0),
                              detail::checked_eval(f, hi, 0.0));
  }
  const double tol = std::max(q.abs_tol, q.rel_tol * std::abs(coarse));

  std::size_t budget = q.max_subdivisions;
  double residual = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double lo = nodes[i], hi = nodes[i + 1];
    total += detail::simpson_segment(f, lo, hi, tol * (hi - lo) / (b - a), budget, residual,
                                     total);
  }
  if (residual > tol) {
    std::ostringstream msg;
    msg << "quadrature on [" << a << ", " << b << "] hit the resolution floor; residual estimate "
        << residual << " exceeds tolerance " << tol;
    throw NumericError(msg.str(), total, residual);
  }
  return total;
}

enum class Extremum { Min, Max };

/// Number of uniform scan points used by `window_extremum`.
inline constexpr int kWindowScanPoints = 4096;

/// Infimum or supremum of `fn` over [lo, hi]: uniform scan followed by a
/// golden-section refinement around the best scan point. Exact for monotone
/// and constant functions; heuristic for oscillatory ones.
template <class F>
double window_extremum(F&& fn, double lo, double hi, Extremum kind,
                       int scan_points = kWindowScanPoints) {
  const auto better = [kind](double x, double y) { return kind == Extremum::Min ? x < y : x > y; };
  if (hi <= lo) return fn(lo);

  const int n = std::max(scan_points, 2);
  const double step = (hi - lo) / (n - 1);
  int best_i = 0;
  double best = fn(lo);
  for (int i = 1; i < n; ++i) {
    const double x = (i == n - 1) ? hi : lo + i * step;
    const double v = fn(x);
    if (better(v, best)) {
      best = v;
      best_i = i;
    }
  }

  double a = lo + std::max(best_i - 1, 0) * step;
  double b = std::min(lo + (best_i + 1) * step, hi);
  if (b - a <= 0.0) return best;

  constexpr double inv_phi = 0.6180339887498949;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int it = 0; it < 80 && (b - a) > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    if (better(fc, fd)) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = fn(d);
    }
    if (better(fc, best)) best = fc;
    if (better(fd, best)) best = fd;
  }
  return best;
}

/// Bisection for the sign change of a monotone predicate-like function.
/// Returns the bracket [lo, hi] with `fn(lo) <= 0 < fn(hi)` after narrowing to
/// width `tol`.
template <class F>
std::pair<double, double> bisect_bracket(F&& fn, double lo, double hi, double tol,
                                         int max_iter = 200) {
  for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fn(mid) > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {lo, hi};
}

}  // namespace wlcert
