#pragma once

// Synthetic score-error fields e_s(x) in dimension 1 or 2.

#include <array>
#include <cmath>
#include <variant>

#include "wlcert/errors.hpp"

namespace wlcert {

/// Point in R^1 or R^2; unused coordinates stay 0.
using Vec2 = std::array<double, 2>;

inline double dot(const Vec2& x, const Vec2& y) { return x[0] * y[0] + x[1] * y[1]; }
inline double norm(const Vec2& x) { return std::hypot(x[0], x[1]); }

struct NoError {};

/// e(x) = ell_bar x.
struct LinearError {
  double ell_bar;
};

/// e(x) = omega J x with J the 2D quarter rotation; one-sided slope 0.
struct SkewRotation2D {
  double omega;
};

/// e(x)_i = height tanh(x_i / width); one-sided slope <= height / width.
struct BoundedBump {
  double height;
  double width;
};

struct ScoreErrorField {
  std::variant<NoError, LinearError, SkewRotation2D, BoundedBump> kind = NoError{};

  Vec2 operator()(const Vec2& x) const {
    return std::visit(
        [&](const auto& k) -> Vec2 {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, NoError>) {
            return {0.0, 0.0};
          } else if constexpr (std::is_same_v<K, LinearError>) {
            return {k.ell_bar * x[0], k.ell_bar * x[1]};
          } else if constexpr (std::is_same_v<K, SkewRotation2D>) {
            return {-k.omega * x[1], k.omega * x[0]};
          } else {
            return {k.height * std::tanh(x[0] / k.width), k.height * std::tanh(x[1] / k.width)};
          }
        },
        kind);
  }

  /// e(x) - e(y); linear fields act on the difference directly so that
  /// structural zeros (skew rotations) survive rounding.
  Vec2 increment(const Vec2& x, const Vec2& y) const {
    const Vec2 d{x[0] - y[0], x[1] - y[1]};
    if (std::holds_alternative<LinearError>(kind) || std::holds_alternative<SkewRotation2D>(kind)) {
      return (*this)(d);
    }
    const Vec2 ex = (*this)(x), ey = (*this)(y);
    return {ex[0] - ey[0], ex[1] - ey[1]};
  }

  /// <e(x) - e(y), x - y>. For linear fields this is the quadratic form of
  /// the symmetric part, so a skew rotation contributes exactly 0.
  double increment_dot(const Vec2& x, const Vec2& y) const {
    const Vec2 d{x[0] - y[0], x[1] - y[1]};
    if (const auto* lin = std::get_if<LinearError>(&kind)) return lin->ell_bar * dot(d, d);
    if (const auto* rot = std::get_if<SkewRotation2D>(&kind)) return rot->omega * (d[0] * d[1] - d[1] * d[0]);
    return dot(increment(x, y), d);
  }

  /// Documented upper bound on the one-sided slope.
  double slope_bound() const {
    return std::visit(
        [](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, LinearError>) {
            return k.ell_bar;
          } else if constexpr (std::is_same_v<K, BoundedBump>) {
            return std::max(k.height / k.width, 0.0);
          } else {
            return 0.0;
          }
        },
        kind);
  }

  void validate() const {
    if (const auto* b = std::get_if<BoundedBump>(&kind)) {
      if (!(b->width > 0.0)) throw ConfigError("BoundedBump width must be positive");
    }
  }
};

}  // namespace wlcert
