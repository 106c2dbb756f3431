#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "support.hpp"
#include "wlcert/certificate_vp.hpp"
#include "wlcert/profile.hpp"

using namespace wlcert;
using wlcert::testing::Gen;

namespace {

RadialGeometry make_geom(ScheduleSpec spec, double alpha, double M, double ell = 0.0, double eps = 0.0) {
  return RadialGeometry(Schedule(std::move(spec)), {alpha, M}, {ell, eps});
}

// Plain bisection on the raw formula, independent of zero_cross_radius.
double envelope_root(double g2, double alpha_s, double M_s, double ell, double f) {
  const auto k = [&](double r) { return g2 * (alpha_s - 2.0 * std::sqrt(M_s) * std::tanh(0.5 * std::sqrt(M_s) * r) / r - ell) - f; };
  double lo = 1e-12, hi = 1.0;
  while (k(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (k(mid) >= 0.0 ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

TEST(FM, Examples) {
  EXPECT_DOUBLE_EQ(f_M(4.0, 0.0), 0.0);
  EXPECT_NEAR(f_M(4.0, 1e3), 4.0, 1e-15);
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(f_M(1.0, 2.0), 2.0 * (e2 - 1.0) / (e2 + 1.0), 1e-15);
  EXPECT_NEAR(f_M(1.0, 2.0), 1.5231883119115296, 1e-15);
}

TEST(FM, SeriesBranchIsContinuous) {
  for (double M : {0.01, 1.0, 100.0}) {
    const double r_switch = 2e-4 / std::sqrt(M);
    const double below = f_M_over_r(M, r_switch * (1.0 - 1e-9));
    const double above = f_M_over_r(M, r_switch * (1.0 + 1e-9));
    EXPECT_NEAR(below, above, 1e-13 * M);
  }
  EXPECT_DOUBLE_EQ(f_M_over_r(3.0, 0.0), 3.0);
  EXPECT_DOUBLE_EQ(f_M_over_r(0.0, 5.0), 0.0);
}

TEST(FM, BoundsOnRandomInputs) {
  wlcert::testing::for_cases(2000, 10, [](Gen& gen, int) {
    const double M = gen.coin() ? 0.0 : gen.log_uniform(1e-4, 1e4);
    const double r = gen.log_uniform(1e-8, 1e4);
    const double v = f_M(M, r);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, std::min(M * r, 2.0 * std::sqrt(M)) * (1.0 + 1e-15));
  });
}

TEST(SmoothedParams, NoSmoothingAtZero) {
  const auto geom = make_geom({VP{1.0}, 2.0}, 0.7, 3.0);
  const auto sp = smoothed_params(geom, 0.0);
  EXPECT_DOUBLE_EQ(sp.alpha_s, 0.7);
  EXPECT_DOUBLE_EQ(sp.M_s, 3.0);
}

TEST(SmoothedParams, VpThresholdValue) {
  const auto geom = make_geom({VP{1.0}, 3.0}, 0.25, 0.0);
  const double s = std::log(3.0);
  // sigma^2 by an independent midpoint rule of int_0^s e^{-(s-u)} du.
  double sig2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sig2 += std::exp(-(s - (i + 0.5) * s / n)) * s / n;
  const double a2 = 1.0 / 3.0;
  EXPECT_NEAR(sig2, 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(smoothed_params(geom, s).alpha_s, 0.25 / (a2 + 0.25 * sig2), 1e-9);
  EXPECT_NEAR(smoothed_params(geom, s).alpha_s, 0.5, 1e-14);
}

TEST(SmoothedParams, UnitAlphaIsPreservedUnderVp) {
  for (double beta : {0.3, 1.0, 4.0}) {
    const auto geom = make_geom({VP{beta}, 5.0}, 1.0, 2.0);
    for (double s : {0.0, 0.5, 2.0, 5.0}) EXPECT_NEAR(smoothed_params(geom, s).alpha_s, 1.0, 1e-14);
  }
}

TEST(SmoothedParams, StaysInDocumentedRange) {
  wlcert::testing::for_cases(200, 11, [](Gen& gen, int) {
    const double T = gen.uniform(0.5, 5.0);
    const auto geom = wlcert::testing::random_geometry(gen, T);
    const double s = gen.uniform(0.0, T);
    const auto sp = smoothed_params(geom, s);
    const double a = geom.schedule().a(s);
    ASSERT_GT(sp.alpha_s, 0.0);
    ASSERT_LE(sp.alpha_s, geom.weak().alpha / (a * a) * (1.0 + 1e-14));
    ASSERT_LE(sp.M_s, geom.weak().M / (a * a) * (1.0 + 1e-14));
  });
}

TEST(MarginLoad, DefectFreeLoadIsMinusAlphaS) {
  const auto geom = make_geom({ConstantOU{0.0, 1.0}, 4.0}, 2.0, 0.0);
  for (double s : {0.1, 1.0, 3.0}) {
    EXPECT_NEAR(margin_load(geom, s).load, -smoothed_params(geom, s).alpha_s, 1e-15);
    EXPECT_NEAR(margin_load(geom, s).load, -2.0 / (1.0 + 2.0 * s), 1e-15);
  }
}

TEST(MarginLoad, VpExample) {
  const auto geom = make_geom({VP{1.0}, 2.0}, 1.0, 1.0);
  const auto ml = margin_load(geom, 1.0);
  EXPECT_NEAR(ml.margin, 0.5, 1e-15);
  EXPECT_NEAR(ml.load, 0.5 + std::exp(-1.0) - 1.0, 1e-15);
}

TEST(KappaLower, Endpoints) {
  const auto geom = make_geom({VP{1.0}, 3.0}, 0.5, 2.0, 0.1);
  for (double s : {0.2, 1.0, 3.0}) {
    const auto ml = margin_load(geom, s);
    const auto sp = smoothed_params(geom, s);
    const double g2 = geom.schedule().g2(s);
    EXPECT_NEAR(kappa_lower(geom, s, 1e-12), -ml.load, 1e-9);
    EXPECT_NEAR(kappa_lower(geom, s, 1e6 / std::sqrt(sp.M_s)), ml.margin, 1e-5 * g2 * std::sqrt(sp.M_s));
  }
  EXPECT_THROW(kappa_lower(geom, 1.0, 0.0), ConfigError);
}

TEST(KappaLower, ConstantWithoutDefect) {
  const auto geom = make_geom({VP{2.0}, 3.0}, 0.4, 0.0, 0.05);
  const double m = margin_load(geom, 1.5).margin;
  for (double r : wlcert::testing::logspace(1e-9, 1e6, 50)) EXPECT_DOUBLE_EQ(kappa_lower(geom, 1.5, r), m);
}

TEST(Gamma, Examples) {
  const auto geom = make_geom({VP{1.0}, 2.0}, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(gamma(geom, 0.0), 0.0);
  EXPECT_NEAR(gamma(geom, 1.0), vp_closed_forms(1.0, 0.5, 1.0, 0.0, 1.0).gamma_pr, 1e-8);

  // alpha = 1, M = 0 under VP: b = beta (ell - 1/2) is constant.
  const auto flat = make_geom({VP{2.0}, 3.0}, 1.0, 0.0, 0.2);
  EXPECT_NEAR(gamma(flat, 2.5), 2.0 * (0.2 - 0.5) * 2.5, 1e-12);
}

TEST(Gamma, DivergentLoadReportsPartialValue) {
  // A tabulated slope near the double limit overflows g^2 ell late in the window.
  const std::vector<double> s{0.0, 0.5, 1.0};
  const auto geom = RadialGeometry(Schedule({VP{4.0}, 1.0}), {1.0, 0.0}, {PiecewiseLinear(s, {0.0, 0.0, 1e308}), 0.0});
  try {
    gamma(geom, 1.0);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_TRUE(std::isfinite(e.partial()));
  }
}

TEST(ZeroCrossRadius, Examples) {
  // Negative reserve: never crosses.
  const auto neg = make_geom({VP{1.0}, 3.0}, 0.1, 1.0, 0.0);
  ASSERT_LT(margin_load(neg, 0.5).margin, 0.0);
  EXPECT_EQ(zero_cross_radius(neg, 0.5), std::numeric_limits<double>::infinity());

  // No defect, positive reserve: nonnegative from the start.
  const auto flat = make_geom({VP{1.0}, 3.0}, 1.0, 0.0, 0.0);
  EXPECT_EQ(zero_cross_radius(flat, 1.0), 0.0);

  // OU(0, 1) at s = 1: a = 1, sigma^2 = 1, alpha_s = alpha/2, M_s = M/4.
  // With alpha = 1 and ell = -1/2, alpha_s - ell = 1 and f = 0, g^2 = 1.
  const auto touch = make_geom({ConstantOU{0.0, 1.0}, 2.0}, 1.0, 4.0, -0.5);
  EXPECT_EQ(zero_cross_radius(touch, 1.0), 0.0);
  const auto cross = make_geom({ConstantOU{0.0, 1.0}, 2.0}, 1.0, 8.0, -0.5);
  const double oracle = envelope_root(1.0, 1.0, 2.0, 0.0, 0.0);
  EXPECT_NEAR(zero_cross_radius(cross, 1.0), oracle, 1e-9);
  EXPECT_NEAR(2.0 * std::sqrt(2.0) * std::tanh(oracle / std::sqrt(2.0)) / oracle, 1.0, 1e-10);
}

TEST(ZeroCrossRadius, MatchesIndependentBisection) {
  wlcert::testing::for_cases(100, 12, [](Gen& gen, int) {
    const double T = gen.uniform(0.5, 4.0);
    const auto geom = wlcert::testing::random_geometry(gen, T);
    const double s = gen.uniform(0.05 * T, T);
    const auto ml = margin_load(geom, s);
    const double R = zero_cross_radius(geom, s);
    if (ml.margin <= 0.0) {
      ASSERT_TRUE(std::isinf(R));
      return;
    }
    if (ml.load < 0.0) {
      ASSERT_EQ(R, 0.0);
      return;
    }
    const auto sp = smoothed_params(geom, s);
    const double oracle = envelope_root(geom.schedule().g2(s), sp.alpha_s, sp.M_s, geom.score().ell(s),
                                        geom.schedule().f(s));
    ASSERT_NEAR(R, oracle, 1e-9 * std::max(1.0, oracle));
  });
}

TEST(WindowMargin, IncreasingReserveGivesLeftEndpoint) {
  const auto geom = make_geom({VP{1.0}, 4.0}, 0.3, 1.0, 0.1);
  for (double s0 : {0.5, 1.0, 3.0}) EXPECT_NEAR(window_margin(geom, s0), margin_load(geom, s0).margin, 1e-12);
}

TEST(WindowMargin, ConstantReserve) {
  const auto geom = make_geom({VP{2.0}, 4.0}, 1.0, 0.5, 0.1);
  EXPECT_NEAR(window_margin(geom, 1.0), 2.0 * (1.0 - 0.1) - 1.0, 1e-14);
}

TEST(WindowMargin, InteriorDipMatchesDenseScan) {
  const std::vector<double> s{0.0, 1.0, 1.7, 3.0};
  const auto geom = RadialGeometry(Schedule({Tabulated{s, {0.2, 0.2, 0.2, 0.2}, {1.0, 1.0, 0.4, 1.0}}, 3.0}),
                                   {1.5, 0.0}, {0.0, 0.0});
  double scan = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 60000; ++i) scan = std::min(scan, margin_load(geom, 0.5 + 2.5 * i / 60000.0).margin);
  const double wm = window_margin(geom, 0.5);
  EXPECT_NEAR(wm, scan, 1e-9);
  EXPECT_LT(wm, margin_load(geom, 0.5).margin);
  EXPECT_LT(wm, margin_load(geom, 3.0).margin);
}

TEST(ProfileProperties, EnvelopeIsNondecreasingWithCorrectEndpoints) {
  const auto radii = wlcert::testing::logspace(1e-10, 1e8, 512);
  wlcert::testing::for_cases(200, 13, [&](Gen& gen, int) {
    const double T = gen.uniform(0.5, 5.0);
    const auto geom = wlcert::testing::random_geometry(gen, T);
    const double s = gen.uniform(1e-3 * T, T);
    double prev = -std::numeric_limits<double>::infinity();
    for (double r : radii) {
      const double k = kappa_lower(geom, s, r);
      ASSERT_GE(k, prev - 1e-14 * std::abs(prev)) << "r=" << r;
      prev = k;
    }
    const auto ml = margin_load(geom, s);
    const auto sp = smoothed_params(geom, s);
    const double g2 = geom.schedule().g2(s);
    ASSERT_NEAR(kappa_lower(geom, s, 1e-12), -ml.load, 1e-8);
    ASSERT_NEAR(ml.margin + ml.load, g2 * sp.M_s, 1e-12 * std::max(1.0, g2 * (sp.alpha_s + sp.M_s)));
    if (sp.M_s > 0.0) {
      ASSERT_NEAR(kappa_lower(geom, s, 1e6 / std::sqrt(sp.M_s)), ml.margin, 1e-5 * g2 * std::sqrt(sp.M_s));
    }
  });
}

TEST(ProfileProperties, ScalingOfTheAnalyticEnvelope) {
  wlcert::testing::for_cases(500, 14, [](Gen& gen, int) {
    const double alpha = gen.log_uniform(0.01, 10.0);
    const double M = gen.log_uniform(1e-3, 100.0);
    const double a = gen.log_uniform(0.05, 20.0);
    const double r = gen.log_uniform(1e-6, 1e4);
    const double scaled = alpha / (a * a) - f_M_over_r(M / (a * a), r);
    const double pulled = (alpha - f_M_over_r(M, r / a)) / (a * a);
    ASSERT_NEAR(scaled, pulled, 1e-12 * std::max(1.0, std::abs(alpha) / (a * a) + M / (a * a)));
  });
}

TEST(ProfileProperties, GaussianTailDomination) {
  wlcert::testing::for_cases(200, 15, [](Gen& gen, int) {
    const double alpha = gen.log_uniform(0.01, 10.0);
    const double M = gen.coin() ? 0.0 : gen.log_uniform(1e-3, 100.0);
    const double grad0 = gen.uniform(0.0, 5.0);
    const double C0 = gaussian_tail_constant(alpha, M, grad0);
    const double lin = 2.0 * std::sqrt(M) + grad0;
    for (double x : wlcert::testing::linspace(0.0, 100.0, 2001)) {
      ASSERT_GE(0.5 * alpha * x * x - lin * x, 0.25 * alpha * x * x - C0 - 1e-12 * (1.0 + alpha * x * x));
    }
  });
}
