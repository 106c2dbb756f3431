#pragma once

// Closed forms for the variance-preserving schedule f = beta/2, g = sqrt(beta)
// under constant proxy bounds ell_bar, eps_bar.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "wlcert/errors.hpp"
#include "wlcert/quadrature.hpp"
#include "wlcert/switchgeom.hpp"
#include "wlcert/transport.hpp"

namespace wlcert {

struct VpProxyValues {
  double gamma_pr;  // int_0^s b_pr
  double m_pr;      // proxy reserve
  double b_pr;      // proxy load
};

/// D(s) = alpha + (1 - alpha) e^{-beta s}.
inline double vp_denominator(double beta, double alpha, double s) {
  return alpha + (1.0 - alpha) * std::exp(-beta * s);
}

/// Primitive of the M-dependent part of the load. The single expression
/// M (1 - e^{-beta s}) / D(s) equals M/(1-alpha) (1/D - 1) for alpha != 1 and
/// reduces to M (1 - e^{-beta s}) at alpha = 1.
inline double vp_defect_primitive(double beta, double alpha, double M, double s) {
  return M * (-std::expm1(-beta * s)) / vp_denominator(beta, alpha, s);
}

inline VpProxyValues vp_closed_forms(double beta, double alpha, double M, double ell_bar, double s) {
  if (!(beta > 0.0)) throw ConfigError("vp_closed_forms requires beta > 0");
  if (!(alpha > 0.0)) throw ConfigError("vp_closed_forms requires alpha > 0");
  const double D = vp_denominator(beta, alpha, s);
  const double alpha_s = alpha / D;
  const double M_s = M * std::exp(-beta * s) / (D * D);
  // log(alpha e^{beta s} + 1 - alpha) = beta s + log D(s)
  const double gamma_pr = beta * (ell_bar + 0.5) * s - (beta * s + std::log(D)) +
                          vp_defect_primitive(beta, alpha, M, s);
  return {gamma_pr, beta * (alpha_s - ell_bar - 0.5), beta * (M_s + ell_bar + 0.5 - alpha_s)};
}

/// First noise level at which the proxy reserve turns positive; 0 when it is
/// already positive at s = 0 and +infinity when it never does.
inline double vp_admissible_threshold(double beta, double alpha, double ell_bar) {
  if (!(beta > 0.0) || !(alpha > 0.0)) throw ConfigError("vp_admissible_threshold requires beta, alpha > 0");
  const double target = ell_bar + 0.5;
  if (alpha >= target) return 0.0;
  // alpha_s increases from alpha toward 1 when alpha < 1; it never exceeds 1.
  if (ell_bar >= 0.5 || alpha >= 1.0) return std::numeric_limits<double>::infinity();
  const double arg = (target * (1.0 - alpha)) / (alpha * (0.5 - ell_bar));
  return std::max(0.0, std::log(arg) / beta);
}

struct VpCertificateConfig {
  double beta;
  double alpha;
  double M;
  double ell_bar;
  double eps_bar;
  double T;
  double h;  // uniform step; T / h must be an integer
  double C_sch;
  double q;
  MomentBudget budget;
  double init_w2 = 0.0;
  std::optional<double> init_wphi;
  double s0;
};

struct VpCertificateReport {
  double s0;
  double L;
  std::size_t K;
  SwitchGeometry sw;
  double conversion;           // C_{p,pr}^sw
  double xi_sw;                // routed early budget
  double b_lo;                 // inf b_pr over [s0, T]
  std::optional<double> xi_dir;  // present when b_lo > 0
  double late;
  double gamma_s0;
  double routed;
  double direct;
  std::optional<bool> strict_improvement;  // C xi_sw^theta < xi_dir
};

/// sum_{j<K} e^{-c j h} = (1 - e^{-cL}) / (1 - e^{-ch}), L = K h.
inline double damped_geometric_sum(double c, double h, double L) {
  if (c == 0.0) return L / h;
  return -std::expm1(-c * L) / -std::expm1(-c * h);
}

/// sum_{j<K} e^{b j h} = (e^{bL} - 1) / (e^{bh} - 1).
inline double growth_geometric_sum(double b, double h, double L) {
  if (b == 0.0) return L / h;
  return std::expm1(b * L) / std::expm1(b * h);
}

inline VpCertificateReport vp_certificates(const VpCertificateConfig& cfg, const QuadratureConfig& quad = {}) {
  cfg.budget.validate();
  if (!(cfg.h > 0.0) || !(cfg.T > 0.0)) throw ConfigError("vp_certificates needs T, h > 0");
  const double steps = cfg.T / cfg.h;
  const auto N = static_cast<std::size_t>(std::llround(steps));
  if (std::abs(steps - static_cast<double>(N)) > 1e-9 * steps) throw ConfigError("T / h must be an integer");
  const double L = cfg.T - cfg.s0;
  const double kf = L / cfg.h;
  const auto K = static_cast<std::size_t>(std::llround(kf));
  if (std::abs(kf - static_cast<double>(K)) > 1e-9 * std::max(1.0, kf) || K > N) {
    std::ostringstream msg;
    msg << "vp_certificates: s0 = " << cfg.s0 << " is not aligned to the uniform grid h = " << cfg.h;
    throw ConfigError(msg.str());
  }

  const auto vals = [&](double s) { return vp_closed_forms(cfg.beta, cfg.alpha, cfg.M, cfg.ell_bar, s); };
  const double T = cfg.T;
  const double m_lo = window_extremum([&](double u) { return vals(u).m_pr; }, cfg.s0, T, Extremum::Min);
  const double b_hi = window_extremum([&](double u) { return vals(u).b_pr; }, cfg.s0, T, Extremum::Max);
  const double b_lo = window_extremum([&](double u) { return vals(u).b_pr; }, cfg.s0, T, Extremum::Min);
  const double G_hi = window_extremum(
      [&](double u) {
        const double D = vp_denominator(cfg.beta, cfg.alpha, u);
        return cfg.beta * std::sqrt(cfg.M * std::exp(-cfg.beta * u) / (D * D));
      },
      cfg.s0, T, Extremum::Max);

  VpCertificateReport rep{};
  rep.s0 = cfg.s0;
  rep.L = L;
  rep.K = K;
  rep.sw = switch_from_aggregates(cfg.s0, L, std::sqrt(cfg.beta), b_hi, G_hi, m_lo);
  rep.conversion = conversion_constant(rep.sw, cfg.budget);
  rep.b_lo = b_lo;

  const double c = rep.sw.c_rate;
  const double defect = cfg.C_sch * std::pow(cfg.h, cfg.q);
  const double forcing = cfg.beta * cfg.eps_bar;
  const double wphi0 = cfg.init_wphi.value_or(cfg.init_w2);
  rep.xi_sw = std::exp(-c * L) * wphi0 + defect * damped_geometric_sum(c, cfg.h, L) +
              forcing / c * (-std::expm1(-c * L));
  if (b_lo > 0.0) {
    rep.xi_dir = std::exp(b_lo * L) * cfg.init_w2 + defect * growth_geometric_sum(b_lo, cfg.h, L) +
                 forcing / b_lo * std::expm1(b_lo * L);
  }

  // Step k ends at noise level T - t_{k+1} = T - (k + 1) h.
  const auto gamma_step_end = [&](std::size_t k) {
    return vals(T - static_cast<double>(k + 1) * cfg.h).gamma_pr;
  };
  const auto eg = [&](double u) { return std::exp(vals(u).gamma_pr); };
  double late = 0.0;
  for (std::size_t k = K; k < N; ++k) late += defect * std::exp(gamma_step_end(k));
  if (forcing > 0.0) late += forcing * integrate(eg, 0.0, cfg.s0, quad);
  rep.late = late;

  rep.gamma_s0 = vals(cfg.s0).gamma_pr;
  const double th = theta_p(cfg.budget.p);
  const double routed_early = rep.conversion * std::pow(rep.xi_sw, th);
  rep.routed = late + std::exp(rep.gamma_s0) * routed_early;

  double direct = late + std::exp(vals(T).gamma_pr) * cfg.init_w2;
  for (std::size_t k = 0; k < K; ++k) direct += defect * std::exp(gamma_step_end(k));
  if (forcing > 0.0) direct += forcing * integrate(eg, cfg.s0, T, quad);
  rep.direct = direct;

  if (rep.xi_dir) rep.strict_improvement = routed_early < *rep.xi_dir;
  return rep;
}

}  // namespace wlcert
