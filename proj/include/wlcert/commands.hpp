#pragma once

// Subcommand implementations shared by the CLI and the tests. Each returns
// its CSV table and JSON report instead of writing files.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wlcert/certificate.hpp"
#include "wlcert/certificate_vp.hpp"
#include "wlcert/config.hpp"
#include "wlcert/profile.hpp"
#include "wlcert/report.hpp"
#include "wlcert/simulate.hpp"
#include "wlcert/switchgeom.hpp"
#include "wlcert/transport.hpp"

namespace wlcert {

struct CommandOutput {
  std::string csv;
  Json json;  // null when the command has no JSON report
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace cmddetail {

inline void require_block(bool present, const char* path) {
  if (!present) throw ConfigError(std::string(path) + ": required key is missing for this command");
}

inline Json switch_json(const SwitchGeometry& sw) {
  return {{"s0", sw.s0},         {"t_s", sw.t_s},       {"g_lo", sw.g_lo},         {"b_hi", sw.b_hi},
          {"G_hi", sw.G_hi},     {"m_lo", sw.m_lo},     {"R_sw", sw.R_sw},         {"m_sw", sw.m_sw},
          {"lambda", sw.lambda}, {"a_slope", sw.a_slope}, {"c_rate", sw.c_rate}};
}

/// VP closed-form cross-check is available for a VP schedule with constant
/// score envelopes and power-law defects on a uniform grid.
inline std::optional<VpCertificateConfig> vp_config(const RunConfig& cfg, const MomentBudget& budget, double s0) {
  const auto* vp = std::get_if<VP>(&cfg.schedule.kind);
  if (!vp || !cfg.disc || !cfg.score.ell.is_constant() || !cfg.score.eps.is_constant()) return std::nullopt;
  const auto* pl = std::get_if<PowerLawDefects>(&cfg.disc->defects);
  if (!pl) return std::nullopt;
  const auto w = cfg.weak_params();
  VpCertificateConfig v{};
  v.beta = vp->beta;
  v.alpha = w.alpha;
  v.M = w.M;
  v.ell_bar = cfg.score.ell.constant();
  v.eps_bar = cfg.score.eps.constant();
  v.T = cfg.schedule.horizon;
  v.h = cfg.disc->grid[1] - cfg.disc->grid[0];
  v.C_sch = pl->C_sch;
  v.q = pl->q;
  v.budget = budget;
  v.init_w2 = cfg.init_w2;
  v.init_wphi = cfg.init_wphi;
  v.s0 = s0;
  return v;
}

}  // namespace cmddetail

/// Table of (s, r, kappa_lower, margin, load, R(s)).
inline CommandOutput cmd_profile(const RunConfig& cfg) {
  cmddetail::require_block(cfg.profile.has_value(), "$.profile");
  const auto geom = cfg.geometry();
  CsvWriter csv({"s", "r", "kappa_lower", "margin", "load", "zero_cross_radius"});
  for (double s : cfg.profile->s) {
    check_time(geom.schedule(), s);
    const auto ml = margin_load(geom, s);
    const double R = zero_cross_radius(geom, s);
    for (double r : cfg.profile->r) csv.row({s, r, kappa_lower(geom, s, r), ml.margin, ml.load, R});
  }
  return {csv.str(), nullptr};
}

inline CommandOutput cmd_admissible(const RunConfig& cfg) {
  cmddetail::require_block(!cfg.switch_grid.empty(), "$.switch_grid");
  const auto geom = cfg.geometry();
  const auto set = admissible_set(geom, cfg.switch_grid);
  Json j;
  j["report"] = "admissible";
  j["schema_version"] = kSchemaVersion;
  j["grid"] = Json::array();
  CsvWriter csv({"s0", "margin", "admissible"});
  for (const auto& m : set.all) {
    j["grid"].push_back({{"s0", m.s0}, {"margin", json_number(m.margin)}, {"admissible", m.margin > 0.0}});
    csv.row({m.s0, m.margin, m.margin > 0.0});
  }
  j["admissible"] = Json::array();
  for (const auto& m : set.admissible) j["admissible"].push_back(m.s0);
  j["s_min_bracket"] = set.s_min_bracket ? Json{set.s_min_bracket->first, set.s_min_bracket->second} : Json(nullptr);
  j["vp_threshold"] = nullptr;
  if (const auto* vp = std::get_if<VP>(&cfg.schedule.kind); vp && cfg.score.ell.is_constant()) {
    j["vp_threshold"] = json_number(vp_admissible_threshold(vp->beta, geom.weak().alpha, cfg.score.ell.constant()));
  }
  j["note"] = set.admissible.empty() ? "no admissible switch" : "";
  return {csv.str(), j};
}

/// Per-switch certificate reports with the routed-bound minimizer flagged.
inline CommandOutput cmd_certify(const RunConfig& cfg) {
  cmddetail::require_block(cfg.disc.has_value(), "$.discretization");
  cmddetail::require_block(cfg.budget.has_value(), "$.budget");
  cmddetail::require_block(!cfg.switch_grid.empty(), "$.switch_grid");
  const auto budget = cfg.budget->resolve(cfg.disc->steps());
  const CertificateEngine engine(CertificateInputs{cfg.geometry(), *cfg.disc, budget, cfg.init_w2, cfg.init_wphi});
  const auto opt = optimize_switch(engine, cfg.switch_grid);

  std::vector<double> grid = cfg.switch_grid;
  std::sort(grid.begin(), grid.end());
  CsvWriter csv({"s0", "status", "margin", "R_sw", "a_slope", "c_rate", "early_budget", "early_routed",
                 "early_direct", "shared_late", "gamma_s0", "routed", "direct", "winner", "argmin"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Json rows = Json::array();
  const auto evaluated_at = [&](double s0) -> const CertificateReport* {
    for (const auto& rep : opt.evaluated) {
      if (rep.s0 == s0) return &rep;
    }
    return nullptr;
  };
  for (double s0 : grid) {
    const double margin = window_margin(engine.inputs().geom, s0);
    Json row{{"s0", s0}, {"margin", json_number(margin)}};
    if (!engine.aligned(s0)) {
      row["status"] = "unaligned";
      csv.row({s0, std::string("unaligned"), margin, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, std::string(""), false});
    } else if (!(margin > 0.0)) {
      row["status"] = "inadmissible";
      csv.row({s0, std::string("inadmissible"), margin, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, std::string(""), false});
    } else if (!evaluated_at(s0)) {
      row["status"] = "overflow";
      csv.row({s0, std::string("overflow"), margin, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, std::string(""), false});
    } else {
      const auto& rep = *evaluated_at(s0);
      const bool argmin = rep.s0 == opt.s0;
      row["status"] = "ok";
      row["argmin"] = argmin;
      row["winner"] = to_string(rep.winner);
      row["sw"] = cmddetail::switch_json(rep.sw);
      row["early_budget"] = json_number(rep.early_budget);
      row["early_routed"] = json_number(rep.early_routed);
      row["early_direct"] = json_number(rep.early_direct);
      row["shared_late"] = json_number(rep.shared_late);
      row["gamma_s0"] = json_number(rep.gamma_s0);
      row["routed"] = json_number(rep.routed);
      row["direct"] = json_number(rep.direct);
      if (const auto v = cmddetail::vp_config(cfg, budget, s0)) {
        const auto vr = vp_certificates(*v, cfg.quad);
        row["vp"] = {{"xi_sw", json_number(vr.xi_sw)},
                     {"b_lo", vr.b_lo},
                     {"xi_dir", vr.xi_dir ? json_number(*vr.xi_dir) : Json(nullptr)},
                     {"conversion", json_number(vr.conversion)},
                     {"routed", json_number(vr.routed)},
                     {"direct", json_number(vr.direct)},
                     {"strict_improvement", vr.strict_improvement ? Json(*vr.strict_improvement) : Json(nullptr)}};
      }
      csv.row({s0, std::string("ok"), margin, rep.sw.R_sw, rep.sw.a_slope, rep.sw.c_rate, rep.early_budget,
               rep.early_routed, rep.early_direct, rep.shared_late, rep.gamma_s0, rep.routed, rep.direct,
               std::string(to_string(rep.winner)), argmin});
    }
    rows.push_back(row);
  }
  Json j;
  j["report"] = "certify";
  j["schema_version"] = kSchemaVersion;
  j["p"] = budget.p;
  j["M_bar"] = budget.M_bar;
  j["direct_bound"] = json_number(engine.direct_bound());
  j["rows"] = rows;
  j["optimum"] = {{"s0", opt.s0},
                  {"routed", json_number(opt.report.routed)},
                  {"direct", json_number(opt.report.direct)},
                  {"winner", to_string(opt.report.winner)}};
  return {csv.str(), j};
}

inline CommandOutput cmd_simulate_coupling(const RunConfig& cfg, const SimulateSpec& spec) {
  SimConfig sim = spec.sim;
  const auto geom = certified_geometry(sim);
  Json cert = Json::object();
  if (spec.metric_switch) {
    sim.metric = build_switch(geom, *spec.metric_switch);
    cert["switch"] = cmddetail::switch_json(sim.metric);
    cert["c_rate"] = sim.metric.c_rate;
  }
  const double T = sim.schedule.horizon;
  // int_u^v b(T - t) dt = Gamma(T - u) - Gamma(T - v).
  cert["load_integral"] = gamma(geom, T - sim.window_u) - gamma(geom, T - sim.window_v);
  const auto res = spec.mode == "synchronous" ? run_synchronous(sim, spec.initial_gap) : run_reflection(sim, spec.initial_gap);

  CsvWriter csv({"t", "mean_phi_r", "stderr", "mean_dist", "coalesced_fraction"});
  for (std::size_t i = 0; i < res.times.size(); ++i) {
    csv.row({res.times[i], res.mean_phi_r[i], res.stderr_phi_r[i], res.mean_dist[i], res.coalesced_fraction[i]});
  }
  Json j;
  j["report"] = "simulate";
  j["schema_version"] = kSchemaVersion;
  j["mode"] = spec.mode;
  j["seed"] = sim.seed;
  j["n_paths"] = sim.n_paths;
  j["window"] = {sim.window_u, sim.window_v};
  j["initial_gap"] = spec.initial_gap;
  j["fitted_rate"] = json_number(res.fitted_rate);
  j["fitted_dist_rate"] = json_number(res.fitted_dist_rate);
  j["coalesced_fraction_final"] = res.coalesced_fraction.back();
  j["sticking_violations"] = res.sticking_violations;
  j["refinements"] = res.refinements;
  j["qv_ratio"] = res.qv_ratio ? Json(*res.qv_ratio) : Json(nullptr);
  j["per_path_seed_rule"] = "stream key of path i = CounterRng(seed, stream_id(Path, i)).key()";
  j["certificate"] = cert;
  (void)cfg;
  return {csv.str(), j};
}

/// Gaussian moment E|N(0, v)|^p.
inline double gaussian_abs_moment(double variance, double p) {
  return std::pow(2.0 * variance, 0.5 * p) * std::tgamma(0.5 * (p + 1.0)) / std::sqrt(std::numbers::pi);
}

inline CommandOutput cmd_simulate_end_to_end(const RunConfig& cfg, const SimulateSpec& spec) {
  const SimConfig& sim = spec.sim;
  const double T = sim.schedule.horizon;
  DiscretizationSpec disc;
  if (cfg.disc) {
    disc = *cfg.disc;
  } else {
    const auto N = static_cast<std::size_t>(std::llround(T / sim.step_h));
    disc = DiscretizationSpec::uniform(T, std::max<std::size_t>(N, 1), PerStepDefects{});
  }
  const InitLaw init = spec.init.value_or(default_init(sim.target));
  const bool linear_gaussian = std::holds_alternative<Gaussian1D>(sim.target.kind) &&
                               (std::holds_alternative<NoError>(sim.error.kind) ||
                                std::holds_alternative<LinearError>(sim.error.kind));
  std::optional<LinearGaussianAnalysis> lga;
  if (linear_gaussian) {
    lga = analyze_linear_gaussian(sim, disc, init);
    disc.defects = PerStepDefects{lga->defects};
  } else if (!cfg.disc) {
    throw ConfigError("$.discretization: required for end-to-end runs whose defects have no exact analysis");
  }

  const auto est = sample_and_w2_1d(sim, disc, spec.n_samples, init);
  const auto geom = certified_geometry(sim);
  MomentBudget budget{4.0, 1.0};
  if (cfg.budget) {
    budget = cfg.budget->resolve(disc.steps());
  } else if (lga) {
    double vz = 0.0, vx = 0.0;
    for (double v : lga->variance) vz = std::max(vz, v);
    for (std::size_t k = 0; k < disc.grid.size(); ++k) vx = std::max(vx, second_moment(sim.target, geom.schedule(), T - disc.grid[k]));
    budget.M_bar = gaussian_abs_moment(vz, budget.p) + gaussian_abs_moment(vx, budget.p);
  } else {
    throw ConfigError("$.budget: required for end-to-end runs without an exact moment analysis");
  }

  const CertificateEngine engine(CertificateInputs{geom, disc, budget, est.init_w2, std::nullopt});
  std::vector<double> grid = cfg.switch_grid;
  if (grid.empty()) {
    const std::size_t N = disc.steps();
    const std::size_t stride = std::max<std::size_t>(1, N / 16);
    for (std::size_t k = stride; k <= N; k += stride) grid.push_back(T - disc.grid[N - k]);
  }
  const double direct = engine.direct_bound();
  Json routed = nullptr, best = nullptr;
  double bound = direct;
  try {
    const auto opt = optimize_switch(engine, grid);
    routed = json_number(opt.report.routed);
    best = opt.s0;
    bound = std::min(bound, opt.report.routed);
  } catch (const InfeasibleError&) {
  }

  Json j;
  j["report"] = "end_to_end";
  j["schema_version"] = kSchemaVersion;
  j["seed"] = sim.seed;
  j["n_samples"] = est.n_samples;
  j["w2_hat"] = est.w2_hat;
  j["stderr"] = est.stderr;
  j["warning"] = est.warning;
  j["note"] = est.note;
  j["init_w2"] = est.init_w2;
  j["defects_source"] = lga ? "exact_linear_gaussian" : "config";
  j["M_bar"] = budget.M_bar;
  j["direct"] = json_number(direct);
  j["routed"] = routed;
  j["best_switch"] = best;
  j["bound"] = json_number(bound);
  j["within_3sigma"] = est.w2_hat <= bound + 3.0 * est.stderr;
  CsvWriter csv({"n_samples", "w2_hat", "stderr", "direct", "bound"});
  csv.row({static_cast<long long>(est.n_samples), est.w2_hat, est.stderr, direct, bound});
  return {csv.str(), j};
}

inline CommandOutput cmd_simulate(const RunConfig& cfg) {
  cmddetail::require_block(cfg.simulate.has_value(), "$.simulate");
  if (cfg.simulate->mode == "end-to-end") return cmd_simulate_end_to_end(cfg, *cfg.simulate);
  return cmd_simulate_coupling(cfg, *cfg.simulate);
}

/// Exact sharpness-family costs per (p, R) and fitted log-log slopes.
inline CommandOutput cmd_sharpness(const RunConfig& cfg) {
  cmddetail::require_block(cfg.sharpness.has_value(), "$.sharpness");
  const auto& sp = *cfg.sharpness;
  SwitchGeometry sw{};
  if (sp.s0) sw = build_switch(cfg.geometry(), *sp.s0);
  CsvWriter csv({"p", "R", "w2", "wphi", "ratio"});
  Json per_p = Json::array();
  for (double p : sp.p) {
    if (!(p > 2.0)) throw ConfigError("$.sharpness.p: every p must be > 2");
    const double th = theta_p(p);
    std::vector<double> R, w2, tailR, tailphi;
    double rmin = std::numeric_limits<double>::infinity(), rmax = -rmin;
    for (double r : sp.R) {
      const auto pt = sharpness_pair(r, p, sw);
      const double ratio = pt.w2 / (std::pow(sw.a_slope, -th) * std::pow(pt.mp, 1.0 / (2.0 * (p - 1.0))) *
                                    std::pow(pt.wphi, th));
      csv.row({p, r, pt.w2, pt.wphi, ratio});
      R.push_back(r);
      w2.push_back(pt.w2);
      if (r > sw.R_sw) {
        tailR.push_back(r);
        tailphi.push_back(pt.wphi);
      }
      rmin = std::min(rmin, ratio);
      rmax = std::max(rmax, ratio);
    }
    per_p.push_back({{"p", p},
                     {"slope_w2", json_number(loglog_slope(R, w2))},
                     {"slope_wphi", json_number(loglog_slope(tailR, tailphi))},
                     {"ratio_min", json_number(rmin)},
                     {"ratio_max", json_number(rmax)},
                     {"tail_points", tailR.size()}});
  }
  Json j;
  j["report"] = "sharpness";
  j["schema_version"] = kSchemaVersion;
  j["R_sw"] = sw.R_sw;
  j["a_slope"] = sw.a_slope;
  j["per_p"] = per_p;
  return {csv.str(), j};
}

}  // namespace wlcert
