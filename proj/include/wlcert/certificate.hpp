#pragma once

// Routed (phase-aware) and direct Euclidean W2 certificates, their shared
// late-window decomposition, and switch optimization.

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wlcert/errors.hpp"
#include "wlcert/profile.hpp"
#include "wlcert/quadrature.hpp"
#include "wlcert/switchgeom.hpp"
#include "wlcert/transport.hpp"

namespace wlcert {

/// Per-step defect bounds d_k = (E xi_k^2)^{1/2}.
struct PerStepDefects {
  std::vector<double> d;
};

/// d_k = C_sch h^q on a uniform grid.
struct PowerLawDefects {
  double C_sch;
  double q;
};

struct DiscretizationSpec {
  std::vector<double> grid;  // reverse times 0 = t_0 < ... < t_N = T
  std::variant<PerStepDefects, PowerLawDefects> defects = PerStepDefects{};

  static DiscretizationSpec uniform(double T, std::size_t N, std::variant<PerStepDefects, PowerLawDefects> d) {
    DiscretizationSpec out;
    out.grid.resize(N + 1);
    for (std::size_t k = 0; k <= N; ++k) out.grid[k] = T * static_cast<double>(k) / static_cast<double>(N);
    out.grid[N] = T;
    out.defects = std::move(d);
    return out;
  }

  std::size_t steps() const { return grid.size() - 1; }

  double defect(std::size_t k) const {
    if (const auto* ps = std::get_if<PerStepDefects>(&defects)) return ps->d[k];
    const auto& pl = std::get<PowerLawDefects>(defects);
    return pl.C_sch * std::pow(grid[k + 1] - grid[k], pl.q);
  }

  void validate_grid(double T) const {
    if (grid.size() < 2) throw ConfigError("discretization grid needs at least two points");
    if (grid.front() != 0.0) throw ConfigError("discretization grid must start at t_0 = 0");
    for (std::size_t k = 1; k < grid.size(); ++k) {
      if (!(grid[k] > grid[k - 1])) throw ConfigError("discretization grid must be strictly increasing");
    }
    if (std::abs(grid.back() - T) > 1e-12 * T) {
      std::ostringstream msg;
      msg << "discretization grid ends at " << grid.back() << ", expected T = " << T;
      throw ConfigError(msg.str());
    }
  }

  void validate(double T) const {
    validate_grid(T);
    if (const auto* ps = std::get_if<PerStepDefects>(&defects)) {
      if (ps->d.size() != steps()) throw ConfigError("per-step defect list must have one entry per step");
      for (double v : ps->d) {
        if (!(v >= 0.0)) throw ConfigError("per-step defects must be nonnegative");
      }
    } else {
      const auto& pl = std::get<PowerLawDefects>(defects);
      if (!(pl.C_sch >= 0.0) || !(pl.q > 0.0)) throw ConfigError("power-law defects need C_sch >= 0, q > 0");
      const double h = grid[1] - grid[0];
      for (std::size_t k = 1; k < steps(); ++k) {
        if (std::abs(grid[k + 1] - grid[k] - h) > 1e-12 * std::max(1.0, T)) {
          throw ConfigError("power-law defects require a uniform grid");
        }
      }
    }
  }
};

struct CertificateInputs {
  RadialGeometry geom;
  DiscretizationSpec disc;
  MomentBudget budget;
  double init_w2 = 0.0;
  std::optional<double> init_wphi;  // defaults to init_w2 (W_phi <= W_1 <= W_2)

  double wphi_init() const { return init_wphi.value_or(init_w2); }
};

enum class Winner { Routed, Direct, Tie };

inline const char* to_string(Winner w) {
  switch (w) {
    case Winner::Routed:
      return "routed";
    case Winner::Direct:
      return "direct";
    case Winner::Tie:
      return "tie";
  }
  return "tie";
}

struct CertificateReport {
  double s0 = 0.0;
  SwitchGeometry sw{};
  double early_budget = 0.0;  // damped pre-switch budget in the switch metric
  double early_routed = 0.0;  // C_p^sw * early_budget^theta
  double early_direct = 0.0;  // R_dir(s0)
  double shared_late = 0.0;
  double gamma_s0 = 0.0;
  double routed = 0.0;
  double direct = 0.0;
  Winner winner = Winner::Tie;
};

/// Precomputed quantities shared by every switch of one certificate problem:
/// Gamma at all grid noise levels and the per-panel forcing integrals.
/// Immutable after construction.
class CertificateEngine {
 public:
  explicit CertificateEngine(CertificateInputs inputs) : in_(std::move(inputs)) {
    const double T = in_.geom.horizon();
    in_.disc.validate(T);
    in_.budget.validate();
    if (!(in_.init_w2 >= 0.0)) throw ConfigError("init_w2 must be nonnegative");
    if (in_.init_wphi && !(*in_.init_wphi >= 0.0 && *in_.init_wphi <= in_.init_w2 * (1.0 + 1e-12))) {
      throw ConfigError("init_wphi must lie in [0, init_w2]");
    }

    const std::size_t N = in_.disc.steps();
    // Ascending noise levels u_j = T - t_{N-j}.
    nodes_.resize(N + 1);
    for (std::size_t j = 0; j <= N; ++j) nodes_[j] = T - in_.disc.grid[N - j];
    nodes_[0] = 0.0;
    nodes_[N] = T;

    const auto& geom = in_.geom;
    const auto load = [&](double u) { return margin_load(geom, u).load; };
    gamma_.assign(N + 1, 0.0);
    panel_forcing_.assign(N, 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      const double lo = nodes_[j], hi = nodes_[j + 1];
      gamma_[j + 1] = gamma_[j] + integrate(load, lo, hi, geom.quad(), geom.breaks());
      if (!std::isfinite(gamma_[j + 1])) throw NumericError("Gamma diverges", gamma_[j]);
      // int_lo^hi e^{Gamma(u) - Gamma(lo)} g^2 eps du
      const auto integrand = [&](double u) {
        const double eps = geom.score().eps(u);
        if (eps == 0.0) return 0.0;
        const double dg = integrate(load, lo, u, geom.quad(), geom.breaks());
        return std::exp(dg) * geom.schedule().g2(u) * eps;
      };
      panel_forcing_[j] = integrate(integrand, lo, hi, geom.quad(), geom.breaks());
    }
  }

  const CertificateInputs& inputs() const { return in_; }
  double horizon() const { return in_.geom.horizon(); }

  /// Index K with t_K = T - s0; fails loudly when s0 is not grid-aligned.
  std::size_t switch_index(double s0) const {
    const double T = horizon();
    const double tK = T - s0;
    const auto& grid = in_.disc.grid;
    const auto it = std::lower_bound(grid.begin(), grid.end(), tK);
    std::size_t best = static_cast<std::size_t>(it - grid.begin());
    if (best == grid.size()) best = grid.size() - 1;
    if (best > 0 && std::abs(grid[best - 1] - tK) < std::abs(grid[best] - tK)) --best;
    if (std::abs(grid[best] - tK) > 1e-12 * T) {
      std::ostringstream msg;
      msg << "switch s0 = " << s0 << " is not grid-aligned; nearest aligned switches are";
      if (best > 0) msg << " s0 = " << T - grid[best - 1];
      msg << " s0 = " << T - grid[best];
      if (best + 1 < grid.size()) msg << " s0 = " << T - grid[best + 1];
      throw ConfigError(msg.str());
    }
    return best;
  }

  /// Gamma at noise level T - t_k.
  double gamma_at_step(std::size_t k) const { return gamma_[in_.disc.steps() - k]; }

  double gamma_at(double s0) const { return gamma_at_step(switch_index(s0)); }

  /// Damped early budget in the switch metric.
  double early_budget(const SwitchGeometry& sw) const {
    const std::size_t K = switch_index(sw.s0);
    const auto& grid = in_.disc.grid;
    const double c = sw.c_rate;
    const double ts = grid[K];
    double acc = std::exp(-c * ts) * in_.wphi_init();
    for (std::size_t k = 0; k < K; ++k) acc += std::exp(-c * (ts - grid[k + 1])) * in_.disc.defect(k);
    acc += early_forcing(sw.s0, c);
    return acc;
  }

  /// int_{s0}^T e^{-c (s - s0)} g^2(s) eps(s) ds, panel by panel.
  double early_forcing(double s0, double c) const {
    const auto& geom = in_.geom;
    const std::size_t J0 = in_.disc.steps() - switch_index(s0);
    const auto integrand = [&](double u) {
      return std::exp(-c * (u - s0)) * geom.schedule().g2(u) * geom.score().eps(u);
    };
    double acc = 0.0;
    for (std::size_t j = J0; j < in_.disc.steps(); ++j) {
      acc += integrate(integrand, nodes_[j], nodes_[j + 1], geom.quad(), geom.breaks());
    }
    return acc;
  }

  /// Late Euclidean budget shared by the routed and direct bounds.
  double late_budget(double s0) const {
    const std::size_t K = switch_index(s0);
    const std::size_t N = in_.disc.steps();
    double acc = 0.0;
    for (std::size_t k = K; k < N; ++k) acc += std::exp(gamma_at_step(k + 1)) * in_.disc.defect(k);
    for (std::size_t j = 0; j < N - K; ++j) acc += std::exp(gamma_[j]) * panel_forcing_[j];
    return acc;
  }

  /// Early-window direct term R_dir(s0), weighted by e^{Gamma - Gamma(s0)}.
  double early_direct(double s0) const {
    const std::size_t K = switch_index(s0);
    const std::size_t N = in_.disc.steps();
    const double g0 = gamma_at_step(K);
    double acc = std::exp(gamma_[N] - g0) * in_.init_w2;
    for (std::size_t k = 0; k < K; ++k) acc += std::exp(gamma_at_step(k + 1) - g0) * in_.disc.defect(k);
    for (std::size_t j = N - K; j < N; ++j) acc += std::exp(gamma_[j] - g0) * panel_forcing_[j];
    return acc;
  }

  /// Direct full-horizon Euclidean bound, assembled without any switch.
  double direct_bound() const {
    const std::size_t N = in_.disc.steps();
    double acc = std::exp(gamma_[N]) * in_.init_w2;
    for (std::size_t k = 0; k < N; ++k) acc += std::exp(gamma_at_step(k + 1)) * in_.disc.defect(k);
    for (std::size_t j = 0; j < N; ++j) acc += std::exp(gamma_[j]) * panel_forcing_[j];
    return acc;
  }

  CertificateReport compare(double s0) const {
    CertificateReport rep;
    rep.s0 = s0;
    const std::size_t K = switch_index(s0);
    rep.sw = build_switch(in_.geom, s0);
    rep.sw.s0 = s0;
    rep.gamma_s0 = gamma_at_step(K);
    rep.early_budget = early_budget(rep.sw);
    rep.early_routed = convert_to_w2(rep.sw, in_.budget, rep.early_budget);
    rep.early_direct = early_direct(s0);
    rep.shared_late = late_budget(s0);
    const double scale = std::exp(rep.gamma_s0);
    rep.routed = rep.shared_late + scale * rep.early_routed;
    rep.direct = direct_bound();
    if (!std::isfinite(rep.routed) || !std::isfinite(rep.direct)) {
      throw NumericError("certificate evaluation produced a non-finite bound");
    }
    const double tie_tol = 1e-12 * std::max(1.0, std::max(std::abs(rep.routed), std::abs(rep.direct)));
    if (std::abs(rep.routed - rep.direct) <= tie_tol) {
      rep.winner = Winner::Tie;
    } else {
      rep.winner = rep.routed < rep.direct ? Winner::Routed : Winner::Direct;
    }
    return rep;
  }

  /// True when s0 is grid-aligned.
  bool aligned(double s0) const {
    try {
      (void)switch_index(s0);
      return true;
    } catch (const ConfigError&) {
      return false;
    }
  }

 private:
  CertificateInputs in_;
  std::vector<double> nodes_;
  std::vector<double> gamma_;
  std::vector<double> panel_forcing_;
};

inline double early_budget(const CertificateInputs& inputs, const SwitchGeometry& sw) {
  return CertificateEngine(inputs).early_budget(sw);
}

inline double late_budget(const CertificateInputs& inputs, double s0) {
  return CertificateEngine(inputs).late_budget(s0);
}

inline double direct_bound(const CertificateInputs& inputs) { return CertificateEngine(inputs).direct_bound(); }

inline CertificateReport compare(const CertificateInputs& inputs, double s0) {
  return CertificateEngine(inputs).compare(s0);
}

/// B_p(s0) = late + e^{Gamma(s0)} C_p^sw (early budget)^theta_p.
inline double routed_bound(const CertificateInputs& inputs, double s0) {
  return CertificateEngine(inputs).compare(s0).routed;
}

struct SwitchOptimum {
  double s0;
  CertificateReport report;
  std::vector<CertificateReport> evaluated;  // every admissible aligned switch, grid order
};

/// Minimizes the routed bound over admissible grid-aligned switches. Ties go
/// to the smallest s0.
inline SwitchOptimum optimize_switch(const CertificateEngine& engine, std::span<const double> switch_grid) {
  std::vector<double> grid(switch_grid.begin(), switch_grid.end());
  std::sort(grid.begin(), grid.end());
  SwitchOptimum out{};
  std::vector<SwitchMargin> margins;
  bool found = false;
  const double T = engine.horizon();
  for (double s0 : grid) {
    if (!(s0 > 0.0 && s0 <= T) || !engine.aligned(s0)) continue;
    const double m = window_margin(engine.inputs().geom, s0);
    margins.push_back({s0, m});
    if (!(m > 0.0)) continue;
    CertificateReport rep;
    try {
      rep = engine.compare(s0);
    } catch (const NumericError&) {
      continue;  // routed bound overflows at this switch
    }
    if (!found || rep.routed < out.report.routed) {
      out.s0 = s0;
      out.report = rep;
      found = true;
    }
    out.evaluated.push_back(std::move(rep));
  }
  if (!found) {
    std::ostringstream msg;
    msg << "no admissible grid-aligned switch; window margins:";
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& m : margins) {
      msg << " (" << m.s0 << ", " << m.margin << ")";
      best = std::max(best, m.margin);
    }
    if (margins.empty()) msg << " none aligned";
    throw InfeasibleError(msg.str(), best);
  }
  return out;
}

inline SwitchOptimum optimize_switch(const CertificateInputs& inputs, std::span<const double> switch_grid) {
  return optimize_switch(CertificateEngine(inputs), switch_grid);
}

/// Replaces the score-error envelopes by pointwise upper proxies.
inline RadialGeometry proxy_inputs(const RadialGeometry& geom, ScalarEnvelope ell_upper,
                                   ScalarEnvelope eps_upper) {
  return geom.with_score(ScoreErrorEnvelope{std::move(ell_upper), std::move(eps_upper)});
}

}  // namespace wlcert
