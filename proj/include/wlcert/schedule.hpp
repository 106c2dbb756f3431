#pragma once

// Forward noise schedules (f, g) and the smoothing coefficients a(s), sigma^2(s).
//
// Schedules are restricted to piecewise-continuous representations: the
// closed-form VP and constant-coefficient OU families, and piecewise-linear
// tabulations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "wlcert/errors.hpp"
#include "wlcert/quadrature.hpp"

namespace wlcert {

/// Piecewise-linear function through ordered knots, held constant outside
/// the knot range.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  PiecewiseLinear(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.empty() || x_.size() != y_.size()) {
      throw ConfigError("piecewise-linear table needs matching, non-empty knot and value lists");
    }
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (!std::isfinite(x_[i]) || !std::isfinite(y_[i])) {
        throw ConfigError("piecewise-linear table contains a non-finite entry");
      }
      if (i > 0 && !(x_[i] > x_[i - 1])) {
        throw ConfigError("piecewise-linear knots must be strictly increasing");
      }
    }
  }

  double operator()(double t) const {
    if (t <= x_.front()) return y_.front();
    if (t >= x_.back()) return y_.back();
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    const double w = (t - x_[i]) / (x_[i + 1] - x_[i]);
    return y_[i] + w * (y_[i + 1] - y_[i]);
  }

  /// Exact integral over [lo, hi].
  double integral(double lo, double hi) const {
    if (hi < lo) return -integral(hi, lo);
    std::vector<double> pts{lo};
    for (double k : x_) {
      if (k > lo && k < hi) pts.push_back(k);
    }
    pts.push_back(hi);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      acc += 0.5 * (pts[i + 1] - pts[i]) * ((*this)(pts[i]) + (*this)(pts[i + 1]));
    }
    return acc;
  }

  std::span<const double> knots() const { return x_; }
  std::span<const double> values() const { return y_; }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
};

/// Scalar function of noise level: a constant or a piecewise-linear table.
class ScalarEnvelope {
 public:
  ScalarEnvelope(double constant = 0.0) : repr_(constant) {}  // NOLINT: implicit from scalar
  ScalarEnvelope(PiecewiseLinear table) : repr_(std::move(table)) {}  // NOLINT

  double operator()(double s) const {
    if (const double* c = std::get_if<double>(&repr_)) return *c;
    return std::get<PiecewiseLinear>(repr_)(s);
  }

  bool is_constant() const { return std::holds_alternative<double>(repr_); }
  double constant() const { return std::get<double>(repr_); }

  std::span<const double> knots() const {
    if (const auto* t = std::get_if<PiecewiseLinear>(&repr_)) return t->knots();
    return {};
  }

  /// Smallest value over the representation (exact for both forms).
  double min_value() const {
    if (const double* c = std::get_if<double>(&repr_)) return *c;
    const auto v = std::get<PiecewiseLinear>(repr_).values();
    return *std::min_element(v.begin(), v.end());
  }

 private:
  std::variant<double, PiecewiseLinear> repr_;
};

struct VP {
  double beta;
};

struct ConstantOU {
  double f0;
  double g0;
};

struct Tabulated {
  std::vector<double> s;
  std::vector<double> f;
  std::vector<double> g;
};

struct ScheduleSpec {
  std::variant<VP, ConstantOU, Tabulated> kind;
  double horizon;
};

/// Evaluated schedule. Immutable after construction; tabulated schedules
/// precompute the cumulative drift integral and sigma^2 at every knot.
class Schedule {
 public:
  explicit Schedule(ScheduleSpec spec, QuadratureConfig quad = {})
      : spec_(std::move(spec)), quad_(quad) {
    quad_.validate();
    if (!(spec_.horizon > 0.0) || !std::isfinite(spec_.horizon)) {
      throw ConfigError("schedule horizon T must be positive and finite");
    }
    if (const auto* vp = std::get_if<VP>(&spec_.kind)) {
      if (!(vp->beta > 0.0) || !std::isfinite(vp->beta)) throw ConfigError("VP beta must be positive");
    } else if (const auto* ou = std::get_if<ConstantOU>(&spec_.kind)) {
      if (!(ou->f0 >= 0.0) || !std::isfinite(ou->f0)) throw ConfigError("ConstantOU f0 must be >= 0");
      if (!(ou->g0 > 0.0) || !std::isfinite(ou->g0)) throw ConfigError("ConstantOU g0 must be positive");
    } else {
      build_table(std::get<Tabulated>(spec_.kind));
    }
  }

  const ScheduleSpec& spec() const { return spec_; }
  const QuadratureConfig& quad() const { return quad_; }
  double horizon() const { return spec_.horizon; }
  bool is_vp() const { return std::holds_alternative<VP>(spec_.kind); }
  double vp_beta() const { return std::get<VP>(spec_.kind).beta; }

  double f(double s) const {
    if (const auto* vp = std::get_if<VP>(&spec_.kind)) return 0.5 * vp->beta;
    if (const auto* ou = std::get_if<ConstantOU>(&spec_.kind)) return ou->f0;
    return f_table_(s);
  }

  double g(double s) const {
    if (const auto* vp = std::get_if<VP>(&spec_.kind)) return std::sqrt(vp->beta);
    if (const auto* ou = std::get_if<ConstantOU>(&spec_.kind)) return ou->g0;
    return g_table_(s);
  }

  double g2(double s) const {
    if (const auto* vp = std::get_if<VP>(&spec_.kind)) return vp->beta;
    const double gv = g(s);
    return gv * gv;
  }

  /// Integral of f over [0, s].
  double drift_integral(double s) const {
    if (const auto* vp = std::get_if<VP>(&spec_.kind)) return 0.5 * vp->beta * s;
    if (const auto* ou = std::get_if<ConstantOU>(&spec_.kind)) return ou->f0 * s;
    return f_table_.integral(0.0, s);
  }

  double a(double s) const { return std::exp(-drift_integral(s)); }

  double sigma2(double s) const {
    if (s <= 0.0) return 0.0;
    if (const auto* vp = std::get_if<VP>(&spec_.kind)) return -std::expm1(-vp->beta * s);
    if (const auto* ou = std::get_if<ConstantOU>(&spec_.kind)) {
      if (ou->f0 == 0.0) return ou->g0 * ou->g0 * s;
      return ou->g0 * ou->g0 * (-std::expm1(-2.0 * ou->f0 * s)) / (2.0 * ou->f0);
    }
    // sigma^2(s) = e^{-2(F(s)-F(k))} sigma^2(k) + int_k^s g^2 e^{-2(F(s)-F(u))} du
    const auto knots = f_table_.knots();
    auto it = std::upper_bound(knots.begin(), knots.end(), s);
    std::size_t k = (it == knots.begin()) ? 0 : static_cast<std::size_t>(it - knots.begin()) - 1;
    const double sk = std::min(knots[k], s);
    const double Fs = drift_integral(s);
    const double carried = std::exp(-2.0 * (Fs - drift_integral(sk))) * sigma2_knots_[k];
    const auto integrand = [&](double u) {
      const double gv = g_table_(u);
      return gv * gv * std::exp(-2.0 * (Fs - drift_integral(u)));
    };
    return carried + integrate(integrand, sk, s, quad_);
  }

  /// Breakpoints at which f or g may have kinks (empty for smooth families).
  std::span<const double> knots() const { return f_table_.knots(); }

 private:
  void build_table(const Tabulated& tab) {
    if (tab.s.size() < 2 || tab.s.size() != tab.f.size() || tab.s.size() != tab.g.size()) {
      throw ConfigError("tabulated schedule needs >= 2 samples of equal-length (s, f, g)");
    }
    if (std::abs(tab.s.front()) > 0.0) {
      throw ConfigError("tabulated schedule must start at s = 0");
    }
    if (tab.s.back() < spec_.horizon * (1.0 - 1e-12)) {
      std::ostringstream msg;
      msg << "tabulated schedule ends at s = " << tab.s.back() << " before horizon T = "
          << spec_.horizon;
      throw ConfigError(msg.str());
    }
    for (std::size_t i = 0; i < tab.g.size(); ++i) {
      if (!(tab.g[i] > 0.0)) {
        std::ostringstream msg;
        msg << "tabulated g must be > 0; sample " << i << " has g = " << tab.g[i];
        throw ConfigError(msg.str());
      }
    }
    f_table_ = PiecewiseLinear(tab.s, tab.f);
    g_table_ = PiecewiseLinear(tab.s, tab.g);

    const auto knots = f_table_.knots();
    sigma2_knots_.assign(knots.size(), 0.0);
    for (std::size_t k = 1; k < knots.size(); ++k) {
      const double Fk = f_table_.integral(0.0, knots[k]);
      const auto integrand = [&](double u) {
        const double gv = g_table_(u);
        return gv * gv * std::exp(-2.0 * (Fk - f_table_.integral(0.0, u)));
      };
      const double decay = std::exp(-2.0 * f_table_.integral(knots[k - 1], knots[k]));
      sigma2_knots_[k] = decay * sigma2_knots_[k - 1] + integrate(integrand, knots[k - 1], knots[k], quad_);
    }
  }

  ScheduleSpec spec_;
  QuadratureConfig quad_;
  PiecewiseLinear f_table_;
  PiecewiseLinear g_table_;
  std::vector<double> sigma2_knots_;
};

inline void check_time(const Schedule& sch, double s) {
  if (!(s >= 0.0) || s > sch.horizon() * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "time s = " << s << " outside [0, T = " << sch.horizon() << "]";
    throw ConfigError(msg.str());
  }
}

/// a(s) = exp(-int_0^s f).
inline double coeff_a(const ScheduleSpec& spec, double s, const QuadratureConfig& q = {}) {
  const Schedule sch(spec, q);
  check_time(sch, s);
  return sch.a(s);
}

/// sigma^2(s) = int_0^s (a(s)/a(u))^2 g(u)^2 du.
inline double coeff_sigma2(const ScheduleSpec& spec, double s, const QuadratureConfig& q = {}) {
  const Schedule sch(spec, q);
  check_time(sch, s);
  return sch.sigma2(s);
}

/// Generic quadrature route for a(s), ignoring any closed form. Used to
/// cross-check the closed forms.
inline double coeff_a_quadrature(const Schedule& sch, double s) {
  const auto f = [&](double u) { return sch.f(u); };
  return std::exp(-integrate(f, 0.0, s, sch.quad(), sch.knots()));
}

inline double coeff_sigma2_quadrature(const Schedule& sch, double s) {
  const auto f = [&](double u) { return sch.f(u); };
  const auto F = [&](double u) { return integrate(f, 0.0, u, sch.quad(), sch.knots()); };
  const double Fs = F(s);
  const auto integrand = [&](double u) { return sch.g2(u) * std::exp(-2.0 * (Fs - F(u))); };
  return integrate(integrand, 0.0, s, sch.quad(), sch.knots());
}

namespace detail {
inline void check_window(const Schedule& sch, double s0) {
  if (!(s0 > 0.0) || s0 > sch.horizon() * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "empty or invalid window: s0 = " << s0 << " must lie in (0, T = " << sch.horizon() << "]";
    throw ConfigError(msg.str());
  }
}
}  // namespace detail

inline double g_window_inf(const Schedule& sch, double s0) {
  detail::check_window(sch, s0);
  return window_extremum([&](double u) { return sch.g(u); }, s0, sch.horizon(), Extremum::Min);
}

inline double f_window_sup(const Schedule& sch, double s0) {
  detail::check_window(sch, s0);
  return window_extremum([&](double u) { return sch.f(u); }, s0, sch.horizon(), Extremum::Max);
}

inline double g2_window_sup(const Schedule& sch, double s0) {
  detail::check_window(sch, s0);
  return window_extremum([&](double u) { return sch.g2(u); }, s0, sch.horizon(), Extremum::Max);
}

inline double g_window_inf(const ScheduleSpec& spec, double s0) { return g_window_inf(Schedule(spec), s0); }
inline double f_window_sup(const ScheduleSpec& spec, double s0) { return f_window_sup(Schedule(spec), s0); }
inline double g2_window_sup(const ScheduleSpec& spec, double s0) { return g2_window_sup(Schedule(spec), s0); }

}  // namespace wlcert
