#pragma once

// Monte-Carlo couplings of the learned reverse SDE on closed-form targets:
// synchronous and coalescing reflection couplings, the 1D end-to-end
// sampler with empirical W2, and the exact linear-Gaussian sampler analysis
// used to feed matched certificates.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "wlcert/certificate.hpp"
#include "wlcert/error_field.hpp"
#include "wlcert/errors.hpp"
#include "wlcert/profile.hpp"
#include "wlcert/rng.hpp"
#include "wlcert/schedule.hpp"
#include "wlcert/switchgeom.hpp"

namespace wlcert {

/// N(0, 1/alpha0) in 1D.
struct Gaussian1D {
  double alpha0;
};

/// (1/2) N(m, s2) + (1/2) N(-m, s2).
struct Mixture1D {
  double m;
  double s2;
};

/// N(0, I/alpha0) in 2D; carries the 2D score-error fields.
struct Rotation2DWrap {
  double alpha0;
};

struct TargetModel {
  std::variant<Gaussian1D, Mixture1D, Rotation2DWrap> kind = Gaussian1D{1.0};

  int dim() const { return std::holds_alternative<Rotation2DWrap>(kind) ? 2 : 1; }

  /// Weak log-concavity parameters the target is certified with.
  WeakLogParams certified() const {
    if (const auto* g = std::get_if<Gaussian1D>(&kind)) return {g->alpha0, 0.0};
    if (const auto* r = std::get_if<Rotation2DWrap>(&kind)) return {r->alpha0, 0.0};
    const auto& mx = std::get<Mixture1D>(kind);
    return {1.0 / mx.s2, 4.0 * mx.m * mx.m / (mx.s2 * mx.s2)};
  }

  void validate() const {
    if (const auto* g = std::get_if<Gaussian1D>(&kind)) {
      if (!(g->alpha0 > 0.0) || !std::isfinite(g->alpha0)) throw ConfigError("Gaussian1D alpha0 must be positive");
    } else if (const auto* r = std::get_if<Rotation2DWrap>(&kind)) {
      if (!(r->alpha0 > 0.0) || !std::isfinite(r->alpha0)) throw ConfigError("Rotation2DWrap alpha0 must be positive");
    } else {
      const auto& mx = std::get<Mixture1D>(kind);
      if (!(mx.m > 0.0) || !std::isfinite(mx.m)) throw ConfigError("Mixture1D m must be positive");
      if (!(mx.s2 > 0.0) || !std::isfinite(mx.s2)) throw ConfigError("Mixture1D s2 must be positive");
    }
  }
};

/// Schedule values at one noise level.
struct StepCoeffs {
  double f;
  double g;
  double a;
  double sigma2;
};

inline StepCoeffs step_coeffs(const Schedule& sch, double s) {
  return {sch.f(s), sch.g(s), sch.a(s), sch.sigma2(s)};
}

namespace detail {

inline double log_cosh(double y) {
  const double ay = std::abs(y);
  return ay + std::log1p(std::exp(-2.0 * ay)) - std::numbers::ln2;
}

inline Vec2 score_from(const TargetModel& target, const StepCoeffs& c, const Vec2& x) {
  if (const auto* g = std::get_if<Gaussian1D>(&target.kind)) {
    const double v = c.a * c.a / g->alpha0 + c.sigma2;
    return {-x[0] / v, 0.0};
  }
  if (const auto* r = std::get_if<Rotation2DWrap>(&target.kind)) {
    const double v = c.a * c.a / r->alpha0 + c.sigma2;
    return {-x[0] / v, -x[1] / v};
  }
  const auto& mx = std::get<Mixture1D>(target.kind);
  const double mu = c.a * mx.m;
  const double tau = c.a * c.a * mx.s2 + c.sigma2;
  return {(-x[0] + mu * std::tanh(mu * x[0] / tau)) / tau, 0.0};
}

inline Vec2 sample_from(const TargetModel& target, const StepCoeffs& c, double z0, double z1, double u) {
  if (const auto* g = std::get_if<Gaussian1D>(&target.kind)) {
    return {std::sqrt(c.a * c.a / g->alpha0 + c.sigma2) * z0, 0.0};
  }
  if (const auto* r = std::get_if<Rotation2DWrap>(&target.kind)) {
    const double sd = std::sqrt(c.a * c.a / r->alpha0 + c.sigma2);
    return {sd * z0, sd * z1};
  }
  const auto& mx = std::get<Mixture1D>(target.kind);
  const double mu = c.a * mx.m;
  return {(u < 0.5 ? -mu : mu) + std::sqrt(c.a * c.a * mx.s2 + c.sigma2) * z0, 0.0};
}

inline Vec2 drift_from(const TargetModel& target, const ScoreErrorField& field, const StepCoeffs& c,
                       const Vec2& x) {
  const Vec2 sc = score_from(target, c, x);
  const Vec2 e = field(x);
  const double g2 = c.g * c.g;
  return {c.f * x[0] + g2 * (sc[0] + e[0]), c.f * x[1] + g2 * (sc[1] + e[1])};
}

}  // namespace detail

/// grad log p_s(x) in closed form; s = 0 gives the score of p_0.
inline Vec2 exact_score(const TargetModel& target, const Schedule& sch, double s, const Vec2& x) {
  check_time(sch, s);
  return detail::score_from(target, step_coeffs(sch, s), x);
}

/// log p_s(x) with normalization.
inline double log_density(const TargetModel& target, const Schedule& sch, double s, const Vec2& x) {
  check_time(sch, s);
  const auto c = step_coeffs(sch, s);
  const double ln2pi = std::log(2.0 * std::numbers::pi);
  if (const auto* g = std::get_if<Gaussian1D>(&target.kind)) {
    const double v = c.a * c.a / g->alpha0 + c.sigma2;
    return -0.5 * x[0] * x[0] / v - 0.5 * (ln2pi + std::log(v));
  }
  if (const auto* r = std::get_if<Rotation2DWrap>(&target.kind)) {
    const double v = c.a * c.a / r->alpha0 + c.sigma2;
    return -0.5 * (x[0] * x[0] + x[1] * x[1]) / v - (ln2pi + std::log(v));
  }
  const auto& mx = std::get<Mixture1D>(target.kind);
  const double mu = c.a * mx.m;
  const double tau = c.a * c.a * mx.s2 + c.sigma2;
  return -0.5 * (x[0] * x[0] + mu * mu) / tau + detail::log_cosh(mu * x[0] / tau) - 0.5 * (ln2pi + std::log(tau));
}

/// grad V0 for the data law p0 = e^{-V0}.
inline Vec2 potential_gradient(const TargetModel& target, const Vec2& x) {
  if (const auto* g = std::get_if<Gaussian1D>(&target.kind)) return {g->alpha0 * x[0], 0.0};
  if (const auto* r = std::get_if<Rotation2DWrap>(&target.kind)) return {r->alpha0 * x[0], r->alpha0 * x[1]};
  const auto& mx = std::get<Mixture1D>(target.kind);
  return {x[0] / mx.s2 - (mx.m / mx.s2) * std::tanh(mx.m * x[0] / mx.s2), 0.0};
}

/// E|X_s|^2 under p_s.
inline double second_moment(const TargetModel& target, const Schedule& sch, double s) {
  const auto c = step_coeffs(sch, s);
  if (const auto* g = std::get_if<Gaussian1D>(&target.kind)) return c.a * c.a / g->alpha0 + c.sigma2;
  if (const auto* r = std::get_if<Rotation2DWrap>(&target.kind)) return 2.0 * (c.a * c.a / r->alpha0 + c.sigma2);
  const auto& mx = std::get<Mixture1D>(target.kind);
  return c.a * c.a * (mx.m * mx.m + mx.s2) + c.sigma2;
}

/// Upper bound on (E|e_s(X_s)|^2)^{1/2} under p_s; exact for linear and
/// skew fields.
inline double forcing_l2(const ScoreErrorField& field, const TargetModel& target, const Schedule& sch, double s) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, NoError>) {
          return 0.0;
        } else if constexpr (std::is_same_v<K, LinearError>) {
          return std::abs(k.ell_bar) * std::sqrt(second_moment(target, sch, s));
        } else if constexpr (std::is_same_v<K, SkewRotation2D>) {
          return std::abs(k.omega) * std::sqrt(second_moment(target, sch, s));
        } else {
          return std::abs(k.height) * std::sqrt(static_cast<double>(target.dim()));
        }
      },
      field.kind);
}

/// f(s) x + g^2(s) (score + e_s(x)) with s = T - t.
inline Vec2 learned_drift(const TargetModel& target, const ScoreErrorField& field, const Schedule& sch, double t,
                          const Vec2& x) {
  if (!(t >= 0.0) || !(t < sch.horizon())) {
    std::ostringstream msg;
    msg << "learned_drift: reverse time t = " << t << " outside [0, T = " << sch.horizon() << ")";
    throw ConfigError(msg.str());
  }
  return detail::drift_from(target, field, step_coeffs(sch, sch.horizon() - t), x);
}

struct SimConfig {
  TargetModel target;
  ScoreErrorField error;
  ScheduleSpec schedule{VP{1.0}, 1.0};
  double step_h = 1e-3;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 0;
  double coalesce_eps = 1e-6;
  double window_u = 0.0;  // reverse-time window [u, v]
  double window_v = 1.0;
  SwitchGeometry metric{};  // phi used for E[phi(r)]; the default is phi(r) = r
  unsigned threads = 0;     // 0: WLCERT_THREADS, else hardware concurrency

  void validate() const {
    target.validate();
    error.validate();
    if (std::holds_alternative<SkewRotation2D>(error.kind) && target.dim() != 2) {
      throw ConfigError("SkewRotation2D error field needs a 2D target");
    }
    if (!(step_h > 0.0)) throw ConfigError("step_h must be positive");
    if (n_paths < 100) throw ConfigError("n_paths must be at least 100");
    if (!(coalesce_eps > 0.0)) throw ConfigError("coalesce_eps must be positive");
    const double T = schedule.horizon;
    if (!(window_u >= 0.0) || !(window_v > window_u) || window_v > T * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "window [" << window_u << ", " << window_v << "] must satisfy 0 <= u < v <= T = " << T;
      throw ConfigError(msg.str());
    }
    if ((window_v - window_u) < 10.0 * step_h) throw ConfigError("step_h must be much smaller than the window");
  }
};

struct CouplingResult {
  std::vector<double> times;
  std::vector<double> mean_phi_r;
  std::vector<double> stderr_phi_r;
  std::vector<double> mean_dist;
  std::vector<double> stderr_dist;
  std::vector<double> coalesced_fraction;
  double fitted_rate = 0.0;       // decay rate of E[phi(r_t)]
  double fitted_dist_rate = 0.0;  // decay rate of E|D_t|
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> per_path_seeds;  // stream key of path i
  std::optional<double> qv_ratio;             // realized / (4 int g^2), 1D reflection only
  std::size_t sticking_violations = 0;        // coalesced records with a nonzero gap
  std::size_t refinements = 0;                // bridge bisections taken
};

/// -slope of the least-squares fit of log(values) against times over the
/// positive entries; NaN with fewer than two.
inline double fitted_rate(const std::vector<double>& times, const std::vector<double>& values) {
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(values[i] > 0.0)) continue;
    const double y = std::log(values[i]);
    st += times[i];
    sy += y;
    stt += times[i] * times[i];
    sty += times[i] * y;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double dn = static_cast<double>(n);
  const double den = dn * stt - st * st;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return -(dn * sty - st * sy) / den;
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("WLCERT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline constexpr std::size_t kChunkPaths = 256;
inline constexpr std::size_t kMaxRecords = 200;
inline constexpr int kMaxBridgeDepth = 30;
inline constexpr double kExplosionNorm = 1e8;

namespace detail {

/// Runs body(chunk) for every chunk index on a worker pool and rethrows the
/// exception of the lowest failing chunk.
template <class Body>
void for_each_chunk(std::size_t n_chunks, unsigned threads, Body&& body) {
  std::vector<std::exception_ptr> errors(n_chunks);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t c = next++; c < n_chunks; c = next++) {
      try {
        body(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(threads, n_chunks));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline void check_explosion(const Vec2& x, std::size_t path, double t) {
  if (!(norm(x) <= kExplosionNorm)) {
    std::ostringstream msg;
    msg << "path " << path << " exceeded norm 1e8 at reverse time t = " << t
        << "; the Euler-Maruyama step is unstable, use a smaller step_h";
    throw NumericError(msg.str());
  }
}

struct ChunkAcc {
  std::vector<double> phi, phi2, dist, dist2;
  std::vector<std::size_t> coalesced;
  std::size_t violations = 0;
  std::size_t refinements = 0;
  double qv_realized = 0.0;
  double qv_expected = 0.0;

  explicit ChunkAcc(std::size_t n_rec)
      : phi(n_rec), phi2(n_rec), dist(n_rec), dist2(n_rec), coalesced(n_rec) {}
};

struct PairState {
  Vec2 x;
  Vec2 y;
  bool coalesced = false;
};

enum class Coupling { Synchronous, Reflection };

class PairSimulator {
 public:
  PairSimulator(const SimConfig& cfg, Coupling mode)
      : cfg_(cfg), sch_(cfg.schedule), mode_(mode), T_(cfg.schedule.horizon) {
    n_steps_ = static_cast<std::size_t>(std::llround((cfg.window_v - cfg.window_u) / cfg.step_h));
    n_steps_ = std::max<std::size_t>(n_steps_, 1);
    h_ = (cfg.window_v - cfg.window_u) / static_cast<double>(n_steps_);
    stride_ = (n_steps_ + kMaxRecords - 1) / kMaxRecords;
    for (std::size_t k = 0; k <= n_steps_; ++k) {
      if (k % stride_ == 0 || k == n_steps_) record_steps_.push_back(k);
    }
    coeffs_.reserve(n_steps_);
    for (std::size_t k = 0; k < n_steps_; ++k) coeffs_.push_back(step_coeffs(sch_, T_ - time(k)));
    init_coeffs_ = step_coeffs(sch_, T_ - cfg.window_u);
  }

  double time(std::size_t k) const { return cfg_.window_u + static_cast<double>(k) * h_; }
  const std::vector<std::size_t>& record_steps() const { return record_steps_; }

  void run_path(std::size_t path, double gap, ChunkAcc& acc) const {
    const CounterRng init(cfg_.seed, stream_id(StreamPurpose::Init, path));
    const CounterRng rng(cfg_.seed, stream_id(StreamPurpose::Path, path));
    const int dim = cfg_.target.dim();
    PairState st;
    st.x = detail::sample_from(cfg_.target, init_coeffs_, init.normal(0, 0), init.normal(0, 1), init.uniform(1, 0));
    st.y = {st.x[0] + gap, st.x[1]};
    st.coalesced = mode_ == Coupling::Reflection && gap == 0.0;

    std::size_t rec = 0;
    const auto record = [&] {
      const Vec2 d{st.x[0] - st.y[0], st.x[1] - st.y[1]};
      const double r = norm(d);
      const double ph = phi(cfg_.metric, r);
      acc.phi[rec] += ph;
      acc.phi2[rec] += ph * ph;
      acc.dist[rec] += r;
      acc.dist2[rec] += r * r;
      const bool joined = mode_ == Coupling::Reflection ? st.coalesced : r == 0.0;
      if (joined) ++acc.coalesced[rec];
      if (st.coalesced && r != 0.0) ++acc.violations;
      ++rec;
    };
    record();

    for (std::size_t k = 0; k < n_steps_; ++k) {
      const Vec2 dB{std::sqrt(h_) * rng.normal(k, 0), dim == 2 ? std::sqrt(h_) * rng.normal(k, 1) : 0.0};
      if (mode_ == Coupling::Synchronous) {
        const auto& c = coeffs_[k];
        const Vec2 bx = detail::drift_from(cfg_.target, cfg_.error, c, st.x);
        const Vec2 by = detail::drift_from(cfg_.target, cfg_.error, c, st.y);
        for (int i = 0; i < 2; ++i) {
          st.x[i] += bx[i] * h_ + c.g * dB[i];
          st.y[i] += by[i] * h_ + c.g * dB[i];
        }
      } else {
        reflect(st, time(k), h_, dB, 1, 0, rng, k, &coeffs_[k], acc);
      }
      check_explosion(st.x, path, time(k + 1));
      check_explosion(st.y, path, time(k + 1));
      if (rec < record_steps_.size() && record_steps_[rec] == k + 1) record();
    }
  }

 private:
  void reflect(PairState& st, double t, double tau, const Vec2& dB, std::uint64_t node, int depth,
               const CounterRng& rng, std::size_t step, const StepCoeffs* cached, ChunkAcc& acc) const {
    const StepCoeffs c = cached ? *cached : step_coeffs(sch_, T_ - t);
    const Vec2 bx = detail::drift_from(cfg_.target, cfg_.error, c, st.x);
    const Vec2 xn{st.x[0] + bx[0] * tau + c.g * dB[0], st.x[1] + bx[1] * tau + c.g * dB[1]};
    if (st.coalesced) {
      st.x = xn;
      st.y = xn;
      return;
    }
    const Vec2 d{st.x[0] - st.y[0], st.x[1] - st.y[1]};
    const double r = norm(d);
    const Vec2 e{d[0] / r, d[1] / r};
    const double proj = dot(e, dB);
    const Vec2 dBy{dB[0] - 2.0 * proj * e[0], dB[1] - 2.0 * proj * e[1]};
    const Vec2 by = detail::drift_from(cfg_.target, cfg_.error, c, st.y);
    const Vec2 yn{st.y[0] + by[0] * tau + c.g * dBy[0], st.y[1] + by[1] * tau + c.g * dBy[1]};
    const Vec2 dn{xn[0] - yn[0], xn[1] - yn[1]};
    const double rn = norm(dn);

    if (dot(dn, e) <= 0.0 || rn <= cfg_.coalesce_eps) {
      st.x = xn;
      st.y = xn;
      st.coalesced = true;
      return;
    }
    if (std::abs(rn - r) >= 0.5 * r && depth < kMaxBridgeDepth) {
      // Brownian bridge midpoint of the increment.
      const double sd = std::sqrt(0.25 * tau);
      const Vec2 z{rng.normal(step, node * 8 + 4), cfg_.target.dim() == 2 ? rng.normal(step, node * 8 + 5) : 0.0};
      const Vec2 dB1{0.5 * dB[0] + sd * z[0], 0.5 * dB[1] + sd * z[1]};
      const Vec2 dB2{dB[0] - dB1[0], dB[1] - dB1[1]};
      ++acc.refinements;
      reflect(st, t, 0.5 * tau, dB1, 2 * node, depth + 1, rng, step, nullptr, acc);
      reflect(st, t + 0.5 * tau, 0.5 * tau, dB2, 2 * node + 1, depth + 1, rng, step, nullptr, acc);
      return;
    }
    acc.qv_realized += (rn - r) * (rn - r);
    acc.qv_expected += 4.0 * c.g * c.g * tau;
    st.x = xn;
    st.y = yn;
  }

  const SimConfig& cfg_;
  Schedule sch_;
  Coupling mode_;
  double T_;
  std::size_t n_steps_ = 0;
  double h_ = 0.0;
  std::size_t stride_ = 1;
  std::vector<std::size_t> record_steps_;
  std::vector<StepCoeffs> coeffs_;
  StepCoeffs init_coeffs_{};
};

inline CouplingResult run_coupling(const SimConfig& cfg, double initial_gap, Coupling mode) {
  cfg.validate();
  if (!(initial_gap >= 0.0) || !std::isfinite(initial_gap)) throw ConfigError("initial_gap must be >= 0");
  const PairSimulator sim(cfg, mode);
  const std::size_t n_rec = sim.record_steps().size();
  const std::size_t n_chunks = (cfg.n_paths + kChunkPaths - 1) / kChunkPaths;
  std::vector<ChunkAcc> accs(n_chunks, ChunkAcc(n_rec));
  for_each_chunk(n_chunks, resolve_threads(cfg.threads), [&](std::size_t c) {
    const std::size_t end = std::min(cfg.n_paths, (c + 1) * kChunkPaths);
    for (std::size_t i = c * kChunkPaths; i < end; ++i) sim.run_path(i, initial_gap, accs[c]);
  });

  ChunkAcc total(n_rec);
  for (const auto& a : accs) {
    for (std::size_t j = 0; j < n_rec; ++j) {
      total.phi[j] += a.phi[j];
      total.phi2[j] += a.phi2[j];
      total.dist[j] += a.dist[j];
      total.dist2[j] += a.dist2[j];
      total.coalesced[j] += a.coalesced[j];
    }
    total.violations += a.violations;
    total.refinements += a.refinements;
    total.qv_realized += a.qv_realized;
    total.qv_expected += a.qv_expected;
  }

  const double n = static_cast<double>(cfg.n_paths);
  const auto stderr_of = [n](double s, double s2) {
    const double mean = s / n;
    return std::sqrt(std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0)) / n);
  };
  CouplingResult out;
  out.seed = cfg.seed;
  for (std::size_t j = 0; j < n_rec; ++j) {
    out.times.push_back(sim.time(sim.record_steps()[j]));
    out.mean_phi_r.push_back(total.phi[j] / n);
    out.stderr_phi_r.push_back(stderr_of(total.phi[j], total.phi2[j]));
    out.mean_dist.push_back(total.dist[j] / n);
    out.stderr_dist.push_back(stderr_of(total.dist[j], total.dist2[j]));
    out.coalesced_fraction.push_back(static_cast<double>(total.coalesced[j]) / n);
  }
  out.fitted_rate = fitted_rate(out.times, out.mean_phi_r);
  out.fitted_dist_rate = fitted_rate(out.times, out.mean_dist);
  out.per_path_seeds.reserve(cfg.n_paths);
  for (std::size_t i = 0; i < cfg.n_paths; ++i) {
    out.per_path_seeds.push_back(CounterRng(cfg.seed, stream_id(StreamPurpose::Path, i)).key());
  }
  out.sticking_violations = total.violations;
  out.refinements = total.refinements;
  if (mode == Coupling::Reflection && cfg.target.dim() == 1 && total.qv_expected > 0.0) {
    out.qv_ratio = total.qv_realized / total.qv_expected;
  }
  return out;
}

}  // namespace detail

/// Both copies driven by the learned drift with shared noise.
inline CouplingResult run_synchronous(const SimConfig& cfg, double initial_gap) {
  return detail::run_coupling(cfg, initial_gap, detail::Coupling::Synchronous);
}

/// Mirrored noise until r <= coalesce_eps or the separation flips sign, then
/// synchronous sticking.
inline CouplingResult run_reflection(const SimConfig& cfg, double initial_gap) {
  return detail::run_coupling(cfg, initial_gap, detail::Coupling::Reflection);
}

/// W2 between two equal-size sorted samples.
inline double quantile_w2_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("quantile_w2_sorted needs equal nonempty samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

inline double empirical_w2_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return quantile_w2_sorted(a, b);
}

enum class InitLaw { ExactPT, StandardNormal };

struct W2Estimate {
  double w2_hat = 0.0;
  double stderr = 0.0;
  std::size_t n_samples = 0;
  bool warning = false;
  std::string note;
  double init_w2 = 0.0;  // W2(p_hat_T, p_T); 0 for exact init
};

inline constexpr int kBootstrapResamples = 200;
inline constexpr std::size_t kMinW2Samples = 1000;
inline constexpr std::size_t kInitW2Points = 1000000;

inline InitLaw default_init(const TargetModel& target) {
  return std::holds_alternative<Mixture1D>(target.kind) ? InitLaw::StandardNormal : InitLaw::ExactPT;
}

namespace detail {

inline std::vector<double> bootstrap_expand(const std::vector<double>& sorted, const CounterRng& rng,
                                            std::uint64_t lane) {
  const std::size_t n = sorted.size();
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t j = 0; j < n; ++j) ++counts[rng.index(j, lane, n)];
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), counts[i], sorted[i]);
  return out;
}

}  // namespace detail

/// Quantile W2 between n draws of N(0,1) and n draws of p_T.
inline double standard_normal_init_w2(const SimConfig& cfg, std::size_t n = kInitW2Points) {
  const Schedule sch(cfg.schedule);
  const auto c = step_coeffs(sch, sch.horizon());
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const CounterRng rng(cfg.seed, stream_id(StreamPurpose::Calibration, i));
    a[i] = rng.normal(0, 0);
    b[i] = detail::sample_from(cfg.target, c, rng.normal(1, 0), 0.0, rng.uniform(2, 0))[0];
  }
  return empirical_w2_1d(std::move(a), std::move(b));
}

/// Runs the Euler-Maruyama learned sampler on the grid of disc and compares
/// n_samples outputs with n_samples exact p0 draws by quantile W2.
inline W2Estimate sample_and_w2_1d(const SimConfig& cfg, const DiscretizationSpec& disc, std::size_t n_samples,
                                   std::optional<InitLaw> init_law = std::nullopt) {
  cfg.target.validate();
  cfg.error.validate();
  if (cfg.target.dim() != 1) throw ConfigError("sample_and_w2_1d needs a 1D target");
  if (n_samples < 2) throw ConfigError("sample_and_w2_1d needs at least two samples");
  const Schedule sch(cfg.schedule);
  const double T = sch.horizon();
  disc.validate(T);
  const InitLaw init = init_law.value_or(default_init(cfg.target));

  const std::size_t N = disc.steps();
  std::vector<StepCoeffs> coeffs;
  coeffs.reserve(N);
  for (std::size_t k = 0; k < N; ++k) coeffs.push_back(step_coeffs(sch, T - disc.grid[k]));
  const auto cT = step_coeffs(sch, T);
  const auto c0 = step_coeffs(sch, 0.0);

  std::vector<double> out(n_samples), ref(n_samples);
  const std::size_t n_chunks = (n_samples + kChunkPaths - 1) / kChunkPaths;
  detail::for_each_chunk(n_chunks, resolve_threads(cfg.threads), [&](std::size_t c) {
    const std::size_t end = std::min(n_samples, (c + 1) * kChunkPaths);
    for (std::size_t i = c * kChunkPaths; i < end; ++i) {
      const CounterRng ir(cfg.seed, stream_id(StreamPurpose::Init, i));
      const CounterRng pr(cfg.seed, stream_id(StreamPurpose::Path, i));
      Vec2 z = init == InitLaw::ExactPT ? detail::sample_from(cfg.target, cT, ir.normal(0, 0), 0.0, ir.uniform(1, 0))
                                        : Vec2{ir.normal(0, 0), 0.0};
      std::pair<double, double> zz{};
      for (std::size_t k = 0; k < N; ++k) {
        if (k % 2 == 0) zz = pr.normal_pair(k / 2, 0);
        const double h = disc.grid[k + 1] - disc.grid[k];
        const Vec2 b = detail::drift_from(cfg.target, cfg.error, coeffs[k], z);
        z[0] += b[0] * h + coeffs[k].g * std::sqrt(h) * (k % 2 == 0 ? zz.first : zz.second);
      }
      detail::check_explosion(z, i, T);
      out[i] = z[0];
      const CounterRng rr(cfg.seed, stream_id(StreamPurpose::Reference, i));
      ref[i] = detail::sample_from(cfg.target, c0, rr.normal(0, 0), 0.0, rr.uniform(1, 0))[0];
    }
  });
  std::sort(out.begin(), out.end());
  std::sort(ref.begin(), ref.end());

  W2Estimate est;
  est.n_samples = n_samples;
  est.w2_hat = quantile_w2_sorted(out, ref);
  double s = 0.0, s2 = 0.0;
  for (int b = 0; b < kBootstrapResamples; ++b) {
    const CounterRng br(cfg.seed, stream_id(StreamPurpose::Bootstrap, static_cast<std::uint64_t>(b)));
    const double w = quantile_w2_sorted(detail::bootstrap_expand(out, br, 0), detail::bootstrap_expand(ref, br, 1));
    s += w;
    s2 += w * w;
  }
  const double nb = kBootstrapResamples;
  est.stderr = std::sqrt(std::max(0.0, (s2 - s * s / nb) / (nb - 1.0)));
  if (n_samples < kMinW2Samples) {
    est.warning = true;
    est.note = "n_samples < 1000: quantile W2 and its bootstrap error are unreliable";
  }
  if (init == InitLaw::StandardNormal) est.init_w2 = standard_normal_init_w2(cfg);
  return est;
}

/// Exact second-moment and one-step-defect analysis of the Euler-Maruyama
/// sampler when the learned drift is linear (Gaussian1D target, no error or
/// a linear error).
struct LinearGaussianAnalysis {
  std::vector<double> variance;  // Var Z_{t_k}, k = 0..N
  std::vector<double> defects;   // d_k = (E W2(P_k(Z), Psi_k(Z))^2)^{1/2}
  double output_w2 = 0.0;        // W2(Law(Z_{t_N}), p0)
  double target_variance = 0.0;
};

inline LinearGaussianAnalysis analyze_linear_gaussian(const SimConfig& cfg, const DiscretizationSpec& disc,
                                                      std::optional<InitLaw> init_law = std::nullopt,
                                                      int substeps = 16) {
  const auto* gauss = std::get_if<Gaussian1D>(&cfg.target.kind);
  if (!gauss) throw ConfigError("analyze_linear_gaussian needs a Gaussian1D target");
  double ell = 0.0;
  if (const auto* lin = std::get_if<LinearError>(&cfg.error.kind)) {
    ell = lin->ell_bar;
  } else if (!std::holds_alternative<NoError>(cfg.error.kind)) {
    throw ConfigError("analyze_linear_gaussian needs a None or Linear error field");
  }
  const Schedule sch(cfg.schedule);
  const double T = sch.horizon();
  disc.validate_grid(T);

  const auto lambda_g2 = [&](double t) {
    const auto c = step_coeffs(sch, T - t);
    const double v = c.a * c.a / gauss->alpha0 + c.sigma2;
    return std::pair{c.f + c.g * c.g * (ell - 1.0 / v), c.g * c.g};
  };

  LinearGaussianAnalysis out;
  const std::size_t N = disc.steps();
  const InitLaw init = init_law.value_or(InitLaw::ExactPT);
  out.variance.push_back(init == InitLaw::ExactPT ? second_moment(cfg.target, sch, T) : 1.0);
  for (std::size_t k = 0; k < N; ++k) {
    const double t0 = disc.grid[k], t1 = disc.grid[k + 1];
    const double h = t1 - t0;
    // RK4 for Phi' = lambda Phi, Var' = 2 lambda Var + g^2 over the step.
    double Phi = 1.0, Var = 0.0;
    const double dt = h / substeps;
    for (int j = 0; j < substeps; ++j) {
      const double t = t0 + j * dt;
      const auto rhs = [&](double tt, double P, double V) {
        const auto [lam, g2] = lambda_g2(tt);
        return std::pair{lam * P, 2.0 * lam * V + g2};
      };
      const auto [k1p, k1v] = rhs(t, Phi, Var);
      const auto [k2p, k2v] = rhs(t + 0.5 * dt, Phi + 0.5 * dt * k1p, Var + 0.5 * dt * k1v);
      const auto [k3p, k3v] = rhs(t + 0.5 * dt, Phi + 0.5 * dt * k2p, Var + 0.5 * dt * k2v);
      const auto [k4p, k4v] = rhs(t + dt, Phi + dt * k3p, Var + dt * k3v);
      Phi += dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      Var += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    const auto [lam0, g20] = lambda_g2(t0);
    const double em_factor = 1.0 + h * lam0;
    const double em_sd = std::sqrt(g20 * h);
    const double Vk = out.variance.back();
    const double dm = Phi - em_factor;
    const double ds = std::sqrt(Var) - em_sd;
    out.defects.push_back(std::sqrt(dm * dm * Vk + ds * ds));
    out.variance.push_back(em_factor * em_factor * Vk + g20 * h);
  }
  out.target_variance = 1.0 / gauss->alpha0;
  out.output_w2 = std::abs(std::sqrt(out.variance.back()) - std::sqrt(out.target_variance));
  return out;
}

/// Geometry matched to a simulation: certified (alpha, M), ell from the
/// field's slope bound, eps from the L2 forcing tabulated on a uniform grid.
inline RadialGeometry certified_geometry(const SimConfig& cfg, std::size_t eps_knots = 513) {
  const Schedule sch(cfg.schedule);
  ScoreErrorEnvelope env;
  env.ell = cfg.error.slope_bound();
  if (!std::holds_alternative<NoError>(cfg.error.kind)) {
    const double T = sch.horizon();
    std::vector<double> s(eps_knots), raw(eps_knots), v(eps_knots);
    for (std::size_t j = 0; j < eps_knots; ++j) {
      s[j] = T * static_cast<double>(j) / static_cast<double>(eps_knots - 1);
      raw[j] = forcing_l2(cfg.error, cfg.target, sch, s[j]);
    }
    s.back() = T;
    // Neighbour maxima keep the interpolant above a cellwise monotone forcing.
    for (std::size_t j = 0; j < eps_knots; ++j) {
      v[j] = raw[j];
      if (j > 0) v[j] = std::max(v[j], raw[j - 1]);
      if (j + 1 < eps_knots) v[j] = std::max(v[j], raw[j + 1]);
    }
    env.eps = PiecewiseLinear(std::move(s), std::move(v));
  }
  return RadialGeometry(sch, cfg.target.certified(), env);
}

}  // namespace wlcert
