#pragma once

// Run configuration: one schema-versioned JSON document with per-command
// blocks. Errors name the offending JSON path.

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wlcert/certificate.hpp"
#include "wlcert/errors.hpp"
#include "wlcert/profile.hpp"
#include "wlcert/quadrature.hpp"
#include "wlcert/schedule.hpp"
#include "wlcert/simulate.hpp"
#include "wlcert/transport.hpp"

namespace wlcert {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

inline std::string child(const std::string& path, const std::string& key) { return path + "." + key; }
inline std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline void expect_object(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

/// Rejects keys outside the allowed set.
inline void allowed_keys(const Json& j, const std::string& path, std::initializer_list<const char*> keys) {
  expect_object(j, path);
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) {
      std::string list;
      for (const auto* a : keys) list += (list.empty() ? "" : ", ") + std::string(a);
      fail(child(path, k), "unknown key (allowed: " + list + ")");
    }
  }
}

inline const Json& require(const Json& j, const char* key, const std::string& path) {
  expect_object(j, path);
  if (!j.contains(key)) fail(child(path, key), "required key is missing");
  return j.at(key);
}

inline double number(const Json& v, const std::string& path) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

inline double number_at(const Json& j, const char* key, const std::string& path) {
  return number(require(j, key, path), child(path, key));
}

inline double number_or(const Json& j, const char* key, const std::string& path, double fallback) {
  return j.contains(key) ? number(j.at(key), child(path, key)) : fallback;
}

inline std::uint64_t unsigned_at(const Json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(path, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline std::string string_at(const Json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_string()) fail(child(path, key), "expected a string");
  return v.get<std::string>();
}

inline std::vector<double> numbers(const Json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], index(path, i)));
  return out;
}

/// A list, or {"from", "to", "count"} (inclusive, uniform), or
/// {"from", "to", "count", "log": true}.
inline std::vector<double> grid(const Json& v, const std::string& path) {
  if (v.is_array()) return numbers(v, path);
  allowed_keys(v, path, {"from", "to", "count", "log"});
  const double a = number_at(v, "from", path);
  const double b = number_at(v, "to", path);
  const auto n = unsigned_at(require(v, "count", path), child(path, "count"));
  const bool lg = v.contains("log") && v.at("log").get<bool>();
  if (n < 1) fail(child(path, "count"), "must be at least 1");
  if (lg && !(a > 0.0 && b > 0.0)) fail(path, "log grid needs positive endpoints");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = lg ? std::exp(std::log(a) + w * (std::log(b) - std::log(a))) : a + w * (b - a);
  }
  out.back() = n == 1 ? a : b;
  return out;
}

/// A number or a piecewise-linear table {"s": [...], "values": [...]}.
inline ScalarEnvelope envelope(const Json& v, const std::string& path) {
  if (v.is_number() || v.is_string()) return number(v, path);
  allowed_keys(v, path, {"s", "values"});
  try {
    return PiecewiseLinear(numbers(require(v, "s", path), child(path, "s")),
                           numbers(require(v, "values", path), child(path, "values")));
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
}

}  // namespace cfgdetail

inline ScheduleSpec parse_schedule(const Json& j, const std::string& path = "$.schedule") {
  using namespace cfgdetail;
  const auto kind = string_at(j, "kind", path);
  ScheduleSpec spec{VP{1.0}, 0.0};
  if (kind == "vp") {
    allowed_keys(j, path, {"kind", "beta", "horizon"});
    spec.kind = VP{number_at(j, "beta", path)};
  } else if (kind == "ou") {
    allowed_keys(j, path, {"kind", "f0", "g0", "horizon"});
    spec.kind = ConstantOU{number_at(j, "f0", path), number_at(j, "g0", path)};
  } else if (kind == "tabulated") {
    allowed_keys(j, path, {"kind", "s", "f", "g", "horizon"});
    spec.kind = Tabulated{numbers(require(j, "s", path), child(path, "s")), numbers(require(j, "f", path), child(path, "f")),
                          numbers(require(j, "g", path), child(path, "g"))};
  } else {
    fail(child(path, "kind"), "unknown schedule kind '" + kind + "' (expected vp, ou, tabulated)");
  }
  spec.horizon = number_at(j, "horizon", path);
  try {
    Schedule check(spec);
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return spec;
}

inline QuadratureConfig parse_quadrature(const Json& j, const std::string& path = "$.quadrature") {
  using namespace cfgdetail;
  allowed_keys(j, path, {"abs_tol", "rel_tol", "max_subdivisions"});
  QuadratureConfig q;
  q.abs_tol = number_or(j, "abs_tol", path, q.abs_tol);
  q.rel_tol = number_or(j, "rel_tol", path, q.rel_tol);
  if (j.contains("max_subdivisions")) q.max_subdivisions = unsigned_at(j.at("max_subdivisions"), child(path, "max_subdivisions"));
  try {
    q.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return q;
}

inline TargetModel parse_target(const Json& j, const std::string& path) {
  using namespace cfgdetail;
  const auto kind = string_at(j, "kind", path);
  TargetModel t;
  if (kind == "gaussian1d") {
    allowed_keys(j, path, {"kind", "alpha0"});
    t.kind = Gaussian1D{number_at(j, "alpha0", path)};
  } else if (kind == "mixture1d") {
    allowed_keys(j, path, {"kind", "m", "s2"});
    t.kind = Mixture1D{number_at(j, "m", path), number_at(j, "s2", path)};
  } else if (kind == "rotation2d") {
    allowed_keys(j, path, {"kind", "alpha0"});
    t.kind = Rotation2DWrap{number_at(j, "alpha0", path)};
  } else {
    fail(child(path, "kind"), "unknown target kind '" + kind + "' (expected gaussian1d, mixture1d, rotation2d)");
  }
  try {
    t.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return t;
}

inline ScoreErrorField parse_error_field(const Json& j, const std::string& path) {
  using namespace cfgdetail;
  const auto kind = string_at(j, "kind", path);
  ScoreErrorField f;
  if (kind == "none") {
    allowed_keys(j, path, {"kind"});
  } else if (kind == "linear") {
    allowed_keys(j, path, {"kind", "ell_bar"});
    f.kind = LinearError{number_at(j, "ell_bar", path)};
  } else if (kind == "skew_rotation") {
    allowed_keys(j, path, {"kind", "omega"});
    f.kind = SkewRotation2D{number_at(j, "omega", path)};
  } else if (kind == "bounded_bump") {
    allowed_keys(j, path, {"kind", "height", "width"});
    f.kind = BoundedBump{number_at(j, "height", path), number_at(j, "width", path)};
  } else {
    fail(child(path, "kind"), "unknown error kind '" + kind + "' (expected none, linear, skew_rotation, bounded_bump)");
  }
  try {
    f.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return f;
}

/// Moment budget: a fixed M_bar, or the recursion m_{k+1} = (1 + A) m_k + B
/// from m0 over all N steps plus a bound on E|X|^p under p_{s0}. Since A, B
/// >= 0 the recursion is nondecreasing, so its final value covers every
/// switch on the grid.
struct BudgetSpec {
  double p = 4.0;
  std::optional<double> M_bar;
  double m0 = 0.0;
  double A = 0.0;
  double B = 0.0;
  double target_moment = 0.0;

  MomentBudget resolve(std::size_t n_steps) const {
    if (M_bar) return {p, *M_bar};
    std::vector<MomentStep> steps(n_steps, MomentStep{A, B});
    return {p, moment_recursion(m0, steps) + target_moment};
  }
};

inline BudgetSpec parse_budget(const Json& j, const std::string& path = "$.budget") {
  using namespace cfgdetail;
  allowed_keys(j, path, {"p", "M_bar", "recursion"});
  BudgetSpec b;
  b.p = number_at(j, "p", path);
  if (!(b.p > 2.0)) fail(child(path, "p"), "must be > 2");
  if (j.contains("M_bar") == j.contains("recursion")) fail(path, "give exactly one of M_bar or recursion");
  if (j.contains("M_bar")) {
    b.M_bar = number(j.at("M_bar"), child(path, "M_bar"));
    if (!(*b.M_bar > 0.0)) fail(child(path, "M_bar"), "must be positive");
  } else {
    const auto rp = child(path, "recursion");
    const auto& r = j.at("recursion");
    allowed_keys(r, rp, {"m0", "A", "B", "target_moment"});
    b.m0 = number_at(r, "m0", rp);
    b.A = number_or(r, "A", rp, 0.0);
    b.B = number_or(r, "B", rp, 0.0);
    b.target_moment = number_at(r, "target_moment", rp);
    if (!(b.m0 >= 0.0) || !(b.A >= 0.0) || !(b.B >= 0.0) || !(b.target_moment >= 0.0)) {
      fail(rp, "m0, A, B, target_moment must be nonnegative");
    }
    if (!(b.m0 + b.target_moment > 0.0)) fail(rp, "the resulting budget must be positive");
  }
  return b;
}

inline DiscretizationSpec parse_discretization(const Json& j, double T, const std::string& path = "$.discretization") {
  using namespace cfgdetail;
  allowed_keys(j, path, {"N", "h", "grid", "defects"});
  DiscretizationSpec d;
  const int given = static_cast<int>(j.contains("N")) + static_cast<int>(j.contains("h")) + static_cast<int>(j.contains("grid"));
  if (given != 1) fail(path, "give exactly one of N, h, grid");
  if (j.contains("grid")) {
    d.grid = numbers(j.at("grid"), child(path, "grid"));
  } else {
    std::size_t N = 0;
    if (j.contains("N")) {
      N = unsigned_at(j.at("N"), child(path, "N"));
    } else {
      const double h = number_at(j, "h", path);
      if (!(h > 0.0)) fail(child(path, "h"), "must be positive");
      const double n = T / h;
      N = static_cast<std::size_t>(std::llround(n));
      if (std::abs(n - static_cast<double>(N)) > 1e-9 * n) fail(child(path, "h"), "T / h must be an integer");
    }
    if (N < 1) fail(path, "need at least one step");
    d = DiscretizationSpec::uniform(T, N, PerStepDefects{});
  }
  const auto dp = child(path, "defects");
  const auto& dj = require(j, "defects", path);
  const auto kind = string_at(dj, "kind", dp);
  if (kind == "power_law") {
    allowed_keys(dj, dp, {"kind", "C_sch", "q"});
    d.defects = PowerLawDefects{number_at(dj, "C_sch", dp), number_at(dj, "q", dp)};
  } else if (kind == "per_step") {
    allowed_keys(dj, dp, {"kind", "d"});
    d.defects = PerStepDefects{numbers(require(dj, "d", dp), child(dp, "d"))};
  } else {
    fail(child(dp, "kind"), "unknown defect kind '" + kind + "' (expected power_law, per_step)");
  }
  try {
    d.validate(T);
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return d;
}

struct SimulateSpec {
  SimConfig sim;
  std::string mode = "reflection";  // synchronous | reflection | end-to-end
  double initial_gap = 1.0;
  std::optional<double> metric_switch;  // s0 whose phi is tracked
  std::size_t n_samples = 100000;
  std::optional<InitLaw> init;
};

inline SimulateSpec parse_simulate(const Json& j, const ScheduleSpec& schedule, const std::string& path = "$.simulate") {
  using namespace cfgdetail;
  allowed_keys(j, path, {"mode", "target", "error", "step_h", "n_paths", "seed", "coalesce_eps", "window",
                         "initial_gap", "switch", "n_samples", "init", "threads"});
  SimulateSpec s;
  s.sim.schedule = schedule;
  if (j.contains("mode")) {
    s.mode = string_at(j, "mode", path);
    if (s.mode != "synchronous" && s.mode != "reflection" && s.mode != "end-to-end") {
      fail(child(path, "mode"), "expected synchronous, reflection or end-to-end");
    }
  }
  s.sim.target = parse_target(require(j, "target", path), child(path, "target"));
  if (j.contains("error")) s.sim.error = parse_error_field(j.at("error"), child(path, "error"));
  s.sim.step_h = number_or(j, "step_h", path, s.sim.step_h);
  if (j.contains("n_paths")) s.sim.n_paths = unsigned_at(j.at("n_paths"), child(path, "n_paths"));
  if (j.contains("seed")) s.sim.seed = unsigned_at(j.at("seed"), child(path, "seed"));
  s.sim.coalesce_eps = number_or(j, "coalesce_eps", path, s.sim.coalesce_eps);
  if (j.contains("window")) {
    const auto w = numbers(j.at("window"), child(path, "window"));
    if (w.size() != 2) fail(child(path, "window"), "expected [u, v]");
    s.sim.window_u = w[0];
    s.sim.window_v = w[1];
  } else {
    s.sim.window_u = 0.0;
    s.sim.window_v = schedule.horizon;
  }
  s.initial_gap = number_or(j, "initial_gap", path, s.initial_gap);
  if (j.contains("switch")) s.metric_switch = number(j.at("switch"), child(path, "switch"));
  if (j.contains("n_samples")) s.n_samples = unsigned_at(j.at("n_samples"), child(path, "n_samples"));
  if (j.contains("init")) {
    const auto v = string_at(j, "init", path);
    if (v == "exact") {
      s.init = InitLaw::ExactPT;
    } else if (v == "standard_normal") {
      s.init = InitLaw::StandardNormal;
    } else {
      fail(child(path, "init"), "expected exact or standard_normal");
    }
  }
  if (j.contains("threads")) s.sim.threads = static_cast<unsigned>(unsigned_at(j.at("threads"), child(path, "threads")));
  try {
    if (s.mode != "end-to-end") s.sim.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return s;
}

struct ProfileSpec {
  std::vector<double> s;
  std::vector<double> r;
};

struct SharpnessSpec {
  std::vector<double> p;
  std::vector<double> R;
  std::optional<double> s0;  // switch whose phi is used; identity metric when absent
};

struct OutputSpec {
  std::string csv;
  std::string json;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  ScheduleSpec schedule{VP{1.0}, 1.0};
  QuadratureConfig quad;
  std::optional<WeakLogParams> weak;
  ScoreErrorEnvelope score;
  std::optional<DiscretizationSpec> disc;
  std::optional<BudgetSpec> budget;
  double init_w2 = 0.0;
  std::optional<double> init_wphi;
  std::vector<double> switch_grid;
  std::optional<ProfileSpec> profile;
  std::optional<SharpnessSpec> sharpness;
  std::optional<SimulateSpec> simulate;
  OutputSpec output;

  /// Weak parameters from the weak block, else certified from the
  /// simulation target.
  WeakLogParams weak_params() const {
    if (weak) return *weak;
    if (simulate) return simulate->sim.target.certified();
    throw ConfigError("$.weak: required key is missing (no simulate.target to derive it from)");
  }

  RadialGeometry geometry() const { return RadialGeometry(Schedule(schedule, quad), weak_params(), score); }
};

inline RunConfig parse_run_config(const Json& j) {
  using namespace cfgdetail;
  const std::string root = "$";
  allowed_keys(j, root, {"schema_version", "schedule", "quadrature", "weak", "score", "discretization", "budget",
                         "init", "switch_grid", "profile", "sharpness", "simulate", "output", "description"});
  RunConfig c;
  const auto& ver = require(j, "schema_version", root);
  if (!ver.is_number_integer() || ver.get<int>() != kSchemaVersion) {
    fail("$.schema_version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (j.contains("quadrature")) c.quad = parse_quadrature(j.at("quadrature"));
  c.schedule = parse_schedule(require(j, "schedule", root));
  const double T = c.schedule.horizon;
  if (j.contains("weak")) {
    const auto& w = j.at("weak");
    allowed_keys(w, "$.weak", {"alpha", "M"});
    c.weak = WeakLogParams{number_at(w, "alpha", "$.weak"), number_or(w, "M", "$.weak", 0.0)};
    try {
      c.weak->validate();
    } catch (const ConfigError& e) {
      fail("$.weak", e.what());
    }
  }
  if (j.contains("score")) {
    const auto& s = j.at("score");
    allowed_keys(s, "$.score", {"ell", "eps"});
    if (s.contains("ell")) c.score.ell = envelope(s.at("ell"), "$.score.ell");
    if (s.contains("eps")) c.score.eps = envelope(s.at("eps"), "$.score.eps");
    try {
      c.score.validate();
    } catch (const ConfigError& e) {
      fail("$.score", e.what());
    }
  }
  if (j.contains("discretization")) c.disc = parse_discretization(j.at("discretization"), T);
  if (j.contains("budget")) c.budget = parse_budget(j.at("budget"));
  if (j.contains("init")) {
    const auto& in = j.at("init");
    allowed_keys(in, "$.init", {"w2", "wphi"});
    c.init_w2 = number_or(in, "w2", "$.init", 0.0);
    if (!(c.init_w2 >= 0.0)) fail("$.init.w2", "must be nonnegative");
    if (in.contains("wphi")) c.init_wphi = number(in.at("wphi"), "$.init.wphi");
  }
  if (j.contains("switch_grid")) {
    c.switch_grid = grid(j.at("switch_grid"), "$.switch_grid");
    for (std::size_t i = 0; i < c.switch_grid.size(); ++i) {
      if (!(c.switch_grid[i] > 0.0) || c.switch_grid[i] > T * (1.0 + 1e-12)) {
        fail(index("$.switch_grid", i), "switch must lie in (0, T]");
      }
    }
  }
  if (j.contains("profile")) {
    const auto& p = j.at("profile");
    allowed_keys(p, "$.profile", {"s", "r"});
    c.profile = ProfileSpec{grid(require(p, "s", "$.profile"), "$.profile.s"), grid(require(p, "r", "$.profile"), "$.profile.r")};
    for (std::size_t i = 0; i < c.profile->r.size(); ++i) {
      if (!(c.profile->r[i] > 0.0)) fail(index("$.profile.r", i), "radii must be positive");
    }
  }
  if (j.contains("sharpness")) {
    const auto& s = j.at("sharpness");
    allowed_keys(s, "$.sharpness", {"p", "R", "switch"});
    SharpnessSpec sp;
    const auto& pj = require(s, "p", "$.sharpness");
    sp.p = pj.is_array() ? numbers(pj, "$.sharpness.p") : std::vector<double>{number(pj, "$.sharpness.p")};
    sp.R = grid(require(s, "R", "$.sharpness"), "$.sharpness.R");
    if (s.contains("switch")) sp.s0 = number(s.at("switch"), "$.sharpness.switch");
    c.sharpness = sp;
  }
  if (j.contains("simulate")) c.simulate = parse_simulate(j.at("simulate"), c.schedule);
  if (j.contains("output")) {
    const auto& o = j.at("output");
    allowed_keys(o, "$.output", {"csv", "json"});
    if (o.contains("csv")) c.output.csv = string_at(o, "csv", "$.output");
    if (o.contains("json")) c.output.json = string_at(o, "json", "$.output");
  }
  return c;
}

/// Applies "a.b.c=value"; value is parsed as JSON when possible and kept as a
/// string otherwise.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like a.b=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      const auto idx = static_cast<std::size_t>(std::stoul(p));
      if (idx >= node->size()) throw ConfigError("override '" + assignment + "': index out of range");
      node = &(*node)[idx];
    } else {
      if (!node->is_object()) {
        if (!node->is_null()) throw ConfigError("override '" + assignment + "': '" + p + "' is not inside an object");
        *node = Json::object();
      }
      node = &(*node)[p];
    }
    if (last) *node = value;
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  Json j = read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  try {
    return parse_run_config(j);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace wlcert
