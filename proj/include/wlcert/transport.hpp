#pragma once

// Exact transport costs on small discrete measures, the switch-time
// p-moment conversion, the moment-budget recursion, and the affine-tail
// sharpness family.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "wlcert/error_field.hpp"
#include "wlcert/errors.hpp"
#include "wlcert/switchgeom.hpp"

namespace wlcert {

/// Weighted point cloud in R^d, d <= 3, stored row-major.
class DiscreteMeasure {
 public:
  DiscreteMeasure(int dim, std::vector<double> coords, std::vector<double> weights)
      : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
    if (dim_ < 1 || dim_ > 3) throw ConfigError("discrete measures support dimension 1..3");
    if (weights_.empty() || coords_.size() != weights_.size() * static_cast<std::size_t>(dim_)) {
      throw ConfigError("discrete measure: coordinate count must equal dim * number of weights");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0)) throw ConfigError("discrete measure weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("discrete measure weights must sum to 1");
    for (double c : coords_) {
      if (!std::isfinite(c)) throw ConfigError("discrete measure has a non-finite point");
    }
  }

  /// Equal-weight measure on the given points.
  static DiscreteMeasure uniform(int dim, std::vector<double> coords) {
    const std::size_t n = coords.size() / static_cast<std::size_t>(dim);
    return DiscreteMeasure(dim, std::move(coords), std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  int dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

  bool equal_weights() const {
    const double w0 = weights_.front();
    return std::all_of(weights_.begin(), weights_.end(),
                       [w0](double w) { return std::abs(w - w0) <= 1e-15; });
  }

  /// E|X|^p.
  double moment(double p) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double r2 = 0.0;
      for (double c : point(i)) r2 += c * c;
      acc += weights_[i] * std::pow(std::sqrt(r2), p);
    }
    return acc;
  }

 private:
  int dim_;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

inline double distance(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(acc);
}

/// Transport cost as a function of Euclidean distance.
struct TransportCost {
  enum class Kind { SquaredEuclidean, Euclidean, Phi } kind = Kind::SquaredEuclidean;
  SwitchGeometry sw{};

  static TransportCost squared_euclidean() { return {Kind::SquaredEuclidean, {}}; }
  static TransportCost euclidean() { return {Kind::Euclidean, {}}; }
  static TransportCost phi(const SwitchGeometry& sw) { return {Kind::Phi, sw}; }

  double operator()(double d) const {
    switch (kind) {
      case Kind::SquaredEuclidean:
        return d * d;
      case Kind::Euclidean:
        return d;
      case Kind::Phi:
        return wlcert::phi(sw, d);
    }
    return d;
  }
};

inline constexpr std::size_t kMaxPermutationSupport = 7;

/// Exact optimal transport cost. Supported regimes: equal-cardinality,
/// equal-weight supports with n <= 7 (permutation enumeration, any cost), or
/// d = 1 with arbitrary weights and a convex cost (quantile coupling).
inline double w_cost_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                              const TransportCost& cost) {
  if (mu.dim() != nu.dim()) throw ConfigError("w_cost_discrete: dimension mismatch");

  const std::size_t n = mu.size();
  if (n == nu.size() && n <= kMaxPermutationSupport && mu.equal_weights() && nu.equal_weights()) {
    std::vector<double> c(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] = cost(distance(mu.point(i), nu.point(j)));
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    std::array<double, kMaxPermutationSupport> terms{};
    // Terms are summed in sorted order so that swapping mu and nu (which maps
    // each permutation to its inverse) gives bit-identical totals.
    do {
      for (std::size_t i = 0; i < n; ++i) terms[i] = c[i * n + perm[i]];
      std::sort(terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(n));
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += terms[i];
      best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(n);
  }

  if (mu.dim() == 1 && cost.kind != TransportCost::Kind::Phi) {
    // Monotone (quantile) coupling is optimal for convex costs of |x - y| in 1D.
    const auto sorted_idx = [](const DiscreteMeasure& m) {
      std::vector<std::size_t> idx(m.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return m.point(a)[0] < m.point(b)[0]; });
      return idx;
    };
    const auto ia = sorted_idx(mu);
    const auto ib = sorted_idx(nu);
    std::size_t i = 0, j = 0;
    double ra = mu.weight(ia[0]), rb = nu.weight(ib[0]);
    double acc = 0.0;
    while (i < ia.size() && j < ib.size()) {
      const double w = std::min(ra, rb);
      acc += w * cost(std::abs(mu.point(ia[i])[0] - nu.point(ib[j])[0]));
      ra -= w;
      rb -= w;
      if (ra <= 1e-15) {
        if (++i < ia.size()) ra = mu.weight(ia[i]);
      }
      if (rb <= 1e-15) {
        if (++j < ib.size()) rb = nu.weight(ib[j]);
      }
    }
    return acc;
  }

  std::ostringstream msg;
  msg << "w_cost_discrete: unsupported instance (n_mu=" << mu.size() << ", n_nu=" << nu.size()
      << ", d=" << mu.dim() << "); supported: equal-weight equal-size supports with n <= "
      << kMaxPermutationSupport << ", or d = 1 with a convex cost (quantile coupling)";
  throw ConfigError(msg.str());
}

struct MomentBudget {
  double p;
  double M_bar;

  void validate() const {
    if (!(p > 2.0)) throw ConfigError("moment budget requires p > 2");
    if (!(M_bar > 0.0) || !std::isfinite(M_bar)) throw ConfigError("moment budget M_bar must be positive");
  }
};

/// theta_p = (p - 2) / (2 (p - 1)).
inline double theta_p(double p) {
  if (!(p > 2.0)) throw ConfigError("theta_p requires p > 2");
  return (p - 2.0) / (2.0 * (p - 1.0));
}

/// C_p^sw = sqrt(2(p-1)) (p-2)^{-theta} a^{-theta} M_bar^{1/(2(p-1))}.
inline double conversion_constant(const SwitchGeometry& sw, const MomentBudget& budget) {
  budget.validate();
  // a_slope = e^{-lambda R_sw^2} underflows long before a^{-theta} overflows.
  const double log_a = sw.a_slope > 0.0 ? std::log(sw.a_slope) : -sw.lambda * sw.R_sw * sw.R_sw;
  if (!(log_a < 0.0 || sw.a_slope > 0.0)) throw ConfigError("conversion_constant requires a_slope > 0");
  const double p = budget.p;
  const double th = theta_p(p);
  return std::sqrt(2.0 * (p - 1.0)) * std::pow(p - 2.0, -th) * std::exp(-th * log_a) *
         std::pow(budget.M_bar, 1.0 / (2.0 * (p - 1.0)));
}

/// One-time return from the switch metric to W2.
inline double convert_to_w2(const SwitchGeometry& sw, const MomentBudget& budget, double delta_phi) {
  if (!(delta_phi >= 0.0)) throw ConfigError("convert_to_w2 requires delta_phi >= 0");
  if (delta_phi == 0.0) return 0.0;
  return conversion_constant(sw, budget) * std::pow(delta_phi, theta_p(budget.p));
}

struct MomentStep {
  double A;
  double B;
};

/// m_{k+1} = (1 + A_k) m_k + B_k, iterated from m0.
inline double moment_recursion(double m0, std::span<const MomentStep> steps) {
  if (!(m0 >= 0.0)) throw ConfigError("moment_recursion requires m0 >= 0");
  double m = m0;
  for (const auto& st : steps) {
    if (!(st.A >= 0.0) || !(st.B >= 0.0)) throw ConfigError("moment_recursion requires A_k, B_k >= 0");
    m = (1.0 + st.A) * m + st.B;
  }
  return m;
}

struct SharpnessPoint {
  double w2;
  double wphi;
  double mp;  // E|X|^p + E|Y|^p for the pair
};

/// mu_R = (1 - R^-p) delta_0 + R^-p delta_{R e1} against nu = delta_0; the
/// Dirac coupling is the only coupling, so both costs are exact.
inline SharpnessPoint sharpness_pair(double R, double p, const SwitchGeometry& sw) {
  if (!(R >= 1.0)) throw ConfigError("sharpness_pair requires R >= 1");
  if (!(p > 2.0)) throw ConfigError("sharpness_pair requires p > 2");
  const double mass = std::pow(R, -p);
  return {std::pow(R, 1.0 - 0.5 * p), mass * phi(sw, R), mass * std::pow(R, p)};
}

/// max over pairs of <e(x) - e(y), x - y> / |x - y|^2; coincident pairs are
/// skipped.
inline double onesided_slope_check(const ScoreErrorField& field,
                                   std::span<const std::pair<Vec2, Vec2>> samples) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& [x, y] : samples) {
    const Vec2 d{x[0] - y[0], x[1] - y[1]};
    const double r2 = dot(d, d);
    if (r2 == 0.0) continue;
    worst = std::max(worst, field.increment_dot(x, y) / r2);
  }
  return worst;
}

}  // namespace wlcert
