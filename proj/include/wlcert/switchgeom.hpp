#pragma once

// Switch-level two-zone profile, the Gaussian-core / affine-tail switch
// metric phi_{s0}, its generator inequality, and the admissible switch set.

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "wlcert/errors.hpp"
#include "wlcert/profile.hpp"
#include "wlcert/quadrature.hpp"

namespace wlcert {

/// All switch-level constants for one switch s0. Immutable value type.
struct SwitchGeometry {
  double s0 = 0.0;
  double t_s = 0.0;      // T - s0
  double g_lo = 0.0;     // inf g on [s0, T]
  double b_hi = 0.0;     // sup b on [s0, T], signed
  double G_hi = 0.0;     // sup g^2 sqrt(M_u) on [s0, T]
  double m_lo = 0.0;     // window margin
  double R_sw = 0.0;
  double m_sw = 0.0;
  double lambda = 0.0;
  double a_slope = 1.0;
  double c_rate = 0.0;
};

/// Fills the derived constants from the window aggregates.
inline SwitchGeometry switch_from_aggregates(double s0, double t_s, double g_lo, double b_hi,
                                             double G_hi, double m_lo) {
  if (!(m_lo > 0.0)) {
    std::ostringstream msg;
    msg << "switch s0 = " << s0 << " is not admissible: window margin " << m_lo << " <= 0";
    throw InfeasibleError(msg.str(), m_lo);
  }
  if (!(g_lo > 0.0)) {
    std::ostringstream msg;
    msg << "switch s0 = " << s0 << ": inf g over the window is " << g_lo << ", must be > 0";
    throw NumericError(msg.str());
  }
  if (!std::isfinite(b_hi) || !std::isfinite(G_hi)) {
    throw NumericError("switch aggregates sup b or sup g^2 sqrt(M) are not finite");
  }
  SwitchGeometry sw;
  sw.s0 = s0;
  sw.t_s = t_s;
  sw.g_lo = g_lo;
  sw.b_hi = b_hi;
  sw.G_hi = G_hi;
  sw.m_lo = m_lo;
  sw.m_sw = 0.5 * m_lo;
  sw.R_sw = G_hi > 0.0 ? 4.0 * G_hi / m_lo : 0.0;
  sw.lambda = (std::max(b_hi, 0.0) + sw.m_sw) / (4.0 * g_lo * g_lo);
  sw.a_slope = std::exp(-sw.lambda * sw.R_sw * sw.R_sw);
  sw.c_rate = sw.m_sw * sw.a_slope;
  return sw;
}

inline SwitchGeometry build_switch(const RadialGeometry& geom, double s0) {
  const auto& sch = geom.schedule();
  detail::check_window(sch, s0);
  const double T = geom.horizon();
  const double m_lo = window_margin(geom, s0);
  if (!(m_lo > 0.0)) {
    std::ostringstream msg;
    msg << "switch s0 = " << s0 << " is not admissible: window margin " << m_lo << " <= 0";
    throw InfeasibleError(msg.str(), m_lo);
  }
  const double g_lo = g_window_inf(sch, s0);
  const double b_hi = window_extremum([&](double u) { return margin_load(geom, u).load; }, s0, T,
                                      Extremum::Max);
  const double G_hi = window_extremum(
      [&](double u) { return sch.g2(u) * std::sqrt(smoothed_params(geom, u).M_s); }, s0, T,
      Extremum::Max);
  return switch_from_aggregates(s0, T - s0, g_lo, b_hi, G_hi, m_lo);
}

/// Two-zone profile: -b_hi on (0, R_sw], m_sw beyond.
inline double switch_profile(const SwitchGeometry& sw, double r) {
  return r <= sw.R_sw ? -sw.b_hi : sw.m_sw;
}

struct PhiJet {
  double phi;
  double dphi;
  double d2phi_left;
  double d2phi_right;
};

/// int_0^r exp(-lambda u^2) du.
inline double gaussian_core_integral(double lambda, double r) {
  if (lambda * r * r < 1e-8) {
    const double x = lambda * r * r;
    return r * (1.0 - x / 3.0 + x * x / 10.0);
  }
  const double sl = std::sqrt(lambda);
  return 0.5 * std::sqrt(std::numbers::pi / lambda) * std::erf(sl * r);
}

inline PhiJet phi_eval(const SwitchGeometry& sw, double r) {
  const double R = sw.R_sw;
  const double lam = sw.lambda;
  if (r < R) {
    const double e = std::exp(-lam * r * r);
    const double d2 = -2.0 * lam * r * e;
    return {gaussian_core_integral(lam, r), e, d2, d2};
  }
  const double core = gaussian_core_integral(lam, R);
  const double left = R > 0.0 && r == R ? -2.0 * lam * R * sw.a_slope : 0.0;
  return {core + sw.a_slope * (r - R), sw.a_slope, left, 0.0};
}

inline double phi(const SwitchGeometry& sw, double r) { return phi_eval(sw, r).phi; }

enum class Side { Left, Right };

/// 2 g_lo^2 phi'' - kappa_{s0}(r) r phi' + c phi with a one-sided second
/// derivative; at r == R_sw the left side uses the core branch.
inline double generator_residual_one_sided(const SwitchGeometry& sw, double r, Side side) {
  const auto j = phi_eval(sw, r);
  const bool core = r < sw.R_sw || (r == sw.R_sw && side == Side::Left && sw.R_sw > 0.0);
  const double d2 = side == Side::Left ? j.d2phi_left : j.d2phi_right;
  const double kappa = core ? -sw.b_hi : sw.m_sw;
  return 2.0 * sw.g_lo * sw.g_lo * d2 - kappa * r * j.dphi + sw.c_rate * j.phi;
}

inline double generator_residual(const SwitchGeometry& sw, double r) {
  if (!(r > 0.0)) throw ConfigError("generator_residual requires r > 0");
  if (r == sw.R_sw) {
    throw ConfigError("generator_residual: r equals R_sw (kink); evaluate one-sided");
  }
  return generator_residual_one_sided(sw, r, Side::Right);
}

struct SwitchMargin {
  double s0;
  double margin;
};

struct AdmissibleSet {
  std::vector<SwitchMargin> admissible;
  std::vector<SwitchMargin> all;
  /// Bracket of the threshold s_min where the margin vanishes, present when
  /// the admissible grid is a proper nonempty suffix.
  std::optional<std::pair<double, double>> s_min_bracket;
};

inline AdmissibleSet admissible_set(const RadialGeometry& geom, std::span<const double> switch_grid) {
  AdmissibleSet out;
  for (double s0 : switch_grid) {
    const double m = window_margin(geom, s0);
    out.all.push_back({s0, m});
    if (m > 0.0) out.admissible.push_back({s0, m});
  }
  if (out.admissible.empty() || out.admissible.size() == out.all.size()) return out;

  // Bracket between the largest inadmissible point below the first
  // admissible one and that admissible point.
  std::vector<SwitchMargin> sorted = out.all;
  std::sort(sorted.begin(), sorted.end(), [](auto& x, auto& y) { return x.s0 < y.s0; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].margin > 0.0 && sorted[i - 1].margin <= 0.0) {
      const auto margin_at = [&](double s) { return window_margin(geom, s); };
      out.s_min_bracket = bisect_bracket(margin_at, sorted[i - 1].s0, sorted[i].s0, 1e-10);
      break;
    }
  }
  return out;
}

}  // namespace wlcert
