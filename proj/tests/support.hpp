#pragma once

// Hand-rolled generators for property tests. Every case is reproducible from
// (seed, case index).

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "wlcert/certificate.hpp"
#include "wlcert/profile.hpp"
#include "wlcert/schedule.hpp"
#include "wlcert/switchgeom.hpp"
#include "wlcert/transport.hpp"

namespace wlcert::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  bool coin() { return integer(0, 1) == 1; }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }

 private:
  std::mt19937_64 eng_;
};

/// Runs body(gen, i) for n cases, each with its own generator.
template <class Body>
void for_cases(int n, std::uint64_t seed, Body&& body) {
  for (int i = 0; i < n; ++i) {
    Gen gen(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(i));
    body(gen, i);
  }
}

inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = std::exp(std::log(lo) + w * (std::log(hi) - std::log(lo)));
  }
  return out;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = lo + w * (hi - lo);
  }
  out.back() = hi;
  return out;
}

/// VP, constant OU or a smooth tabulated schedule on [0, T].
inline ScheduleSpec random_schedule(Gen& gen, double T) {
  switch (gen.integer(0, 2)) {
    case 0:
      return {VP{gen.log_uniform(0.3, 3.0)}, T};
    case 1:
      return {ConstantOU{gen.uniform(0.0, 1.0), gen.uniform(0.5, 2.0)}, T};
    default: {
      const auto s = linspace(0.0, T, 9);
      std::vector<double> f, g;
      const double f0 = gen.uniform(0.1, 1.0), f1 = gen.uniform(-0.3, 0.3);
      const double g0 = gen.uniform(0.6, 1.5), g1 = gen.uniform(-0.3, 0.5);
      for (double x : s) {
        f.push_back(f0 + f1 * x / T);
        g.push_back(g0 + g1 * x / T);
      }
      return {Tabulated{s, f, g}, T};
    }
  }
}

inline RadialGeometry random_geometry(Gen& gen, double T) {
  const WeakLogParams weak{gen.log_uniform(0.1, 3.0), gen.coin() ? 0.0 : gen.log_uniform(0.05, 5.0)};
  ScoreErrorEnvelope env;
  env.ell = gen.uniform(-0.3, 0.3);
  env.eps = gen.coin() ? 0.0 : gen.log_uniform(1e-4, 1e-2);
  return RadialGeometry(Schedule(random_schedule(gen, T)), weak, env);
}

inline DiscreteMeasure random_uniform_measure(Gen& gen, int dim, std::size_t n, double scale = 2.0) {
  std::vector<double> c(n * static_cast<std::size_t>(dim));
  for (auto& x : c) x = scale * gen.normal();
  return DiscreteMeasure::uniform(dim, std::move(c));
}

/// A switch geometry with a nontrivial Gaussian core and lambda R_sw^2 <= 20.
inline SwitchGeometry random_switch(Gen& gen) {
  for (;;) {
    const auto sw = switch_from_aggregates(1.0, 1.0, gen.uniform(0.3, 2.0), gen.uniform(-0.5, 2.0),
                                           gen.log_uniform(0.05, 2.0), gen.log_uniform(0.1, 3.0));
    if (sw.lambda * sw.R_sw * sw.R_sw <= 20.0) return sw;
  }
}

}  // namespace wlcert::testing
