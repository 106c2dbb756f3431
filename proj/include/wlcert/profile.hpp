#pragma once

// Smoothed weak-log-concavity parameters and the radial lower envelope of
// the learned reverse drift.

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "wlcert/errors.hpp"
#include "wlcert/quadrature.hpp"
#include "wlcert/schedule.hpp"

namespace wlcert {

struct WeakLogParams {
  double alpha;  // large-scale convexity
  double M;      // short-scale defect

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("weak.alpha must be positive");
    if (!(M >= 0.0) || !std::isfinite(M)) throw ConfigError("weak.M must be nonnegative");
  }
};

/// One-sided slope ell(s) and L2 forcing eps(s) of the score error.
struct ScoreErrorEnvelope {
  ScalarEnvelope ell = 0.0;
  ScalarEnvelope eps = 0.0;

  void validate() const {
    if (eps.min_value() < 0.0) throw ConfigError("score_error.eps must be nonnegative");
  }
};

struct SmoothedParams {
  double alpha_s;
  double M_s;
};

struct MarginLoad {
  double margin;  // far-field reserve m(s)
  double load;    // near-field Euclidean load b(s)
};

/// Everything the radial envelope depends on.
class RadialGeometry {
 public:
  RadialGeometry(Schedule schedule, WeakLogParams weak, ScoreErrorEnvelope score)
      : schedule_(std::move(schedule)), weak_(weak), score_(std::move(score)) {
    weak_.validate();
    score_.validate();
    breaks_.assign(schedule_.knots().begin(), schedule_.knots().end());
    for (double k : score_.ell.knots()) breaks_.push_back(k);
    for (double k : score_.eps.knots()) breaks_.push_back(k);
    std::sort(breaks_.begin(), breaks_.end());
  }

  const Schedule& schedule() const { return schedule_; }
  const WeakLogParams& weak() const { return weak_; }
  const ScoreErrorEnvelope& score() const { return score_; }
  const QuadratureConfig& quad() const { return schedule_.quad(); }
  double horizon() const { return schedule_.horizon(); }

  /// Union of schedule and envelope knots; quadrature panels split here.
  std::span<const double> breaks() const { return breaks_; }

  RadialGeometry with_score(ScoreErrorEnvelope score) const {
    return RadialGeometry(schedule_, weak_, std::move(score));
  }

 private:
  Schedule schedule_;
  WeakLogParams weak_;
  ScoreErrorEnvelope score_;
  std::vector<double> breaks_;
};

/// f_M(r) = 2 sqrt(M) tanh(sqrt(M) r / 2).
inline double f_M(double M, double r) {
  const double sq = std::sqrt(M);
  return 2.0 * sq * std::tanh(0.5 * sq * r);
}

/// f_M(r) / r, with a series for small sqrt(M) r / 2 to avoid 0/0.
inline double f_M_over_r(double M, double r) {
  const double y = 0.5 * std::sqrt(M) * r;
  if (y < 1e-4) {
    const double y2 = y * y;
    return M * (1.0 - y2 / 3.0 + 2.0 * y2 * y2 / 15.0);
  }
  return f_M(M, r) / r;
}

inline SmoothedParams smoothed_params(const RadialGeometry& geom, double s) {
  const auto& sch = geom.schedule();
  const double a = sch.a(s);
  const double a2 = a * a;
  const double sig2 = sch.sigma2(s);
  const double alpha = geom.weak().alpha;
  const double denom = a2 + alpha * sig2;
  return {alpha / denom, geom.weak().M * a2 / (denom * denom)};
}

inline MarginLoad margin_load(const RadialGeometry& geom, double s) {
  const auto& sch = geom.schedule();
  const auto sp = smoothed_params(geom, s);
  const double f = sch.f(s);
  const double g2 = sch.g2(s);
  const double ell = geom.score().ell(s);
  return {g2 * (sp.alpha_s - ell) - f, f + g2 * (sp.M_s + ell - sp.alpha_s)};
}

/// kappa_s(r) = g^2(s) (alpha_s - f_{M_s}(r)/r - ell(s)) - f(s), for r > 0.
inline double kappa_lower(const RadialGeometry& geom, double s, double r) {
  if (!(r > 0.0)) throw ConfigError("kappa_lower is defined for r > 0 only; use -load(s) for r -> 0");
  const auto& sch = geom.schedule();
  const auto sp = smoothed_params(geom, s);
  return sch.g2(s) * (sp.alpha_s - f_M_over_r(sp.M_s, r) - geom.score().ell(s)) - sch.f(s);
}

/// Gamma(s) = int_0^s b(u) du.
inline double gamma(const RadialGeometry& geom, double s) {
  if (s <= 0.0) return 0.0;
  const auto load = [&](double u) { return margin_load(geom, u).load; };
  return integrate(load, 0.0, s, geom.quad(), geom.breaks());
}

/// Smallest radius at which the envelope becomes nonnegative; +infinity when
/// the far-field reserve is nonpositive.
inline double zero_cross_radius(const RadialGeometry& geom, double s) {
  const double inf = std::numeric_limits<double>::infinity();
  if (margin_load(geom, s).margin <= 0.0) return inf;
  const auto kappa = [&](double r) { return kappa_lower(geom, s, r); };
  double lo = 1e-12;
  if (kappa(lo) >= 0.0) return 0.0;
  double hi = 1.0;
  while (kappa(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 18446744073709551616.0) return inf;  // 2^64
  }
  for (int it = 0; it < 400 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (kappa(mid) >= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

/// Infimum of the far-field reserve over [s0, T].
inline double window_margin(const RadialGeometry& geom, double s0) {
  detail::check_window(geom.schedule(), s0);
  return window_extremum([&](double u) { return margin_load(geom, u).margin; }, s0, geom.horizon(),
                         Extremum::Min);
}

/// Constant C0 with V0(x) >= V0(0) + (alpha/4)|x|^2 - C0 along every ray,
/// derived from |grad V0(0)| and the defect bound f_M <= 2 sqrt(M).
inline double gaussian_tail_constant(double alpha, double M, double grad0_norm) {
  const double lin = 2.0 * std::sqrt(M) + grad0_norm;
  return lin * lin / alpha;
}

}  // namespace wlcert
