#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "support.hpp"
#include "wlcert/transport.hpp"

using namespace wlcert;
using wlcert::testing::Gen;

namespace {

SwitchGeometry identity_switch() { return switch_from_aggregates(1.0, 1.0, 1.0, 0.0, 0.0, 1.0); }

double w2(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  return std::sqrt(w_cost_discrete(a, b, TransportCost::squared_euclidean()));
}

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST(DiscreteMeasure, Validation) {
  EXPECT_THROW(DiscreteMeasure(1, {0.0, 1.0}, {0.5, 0.4}), ConfigError);
  EXPECT_THROW(DiscreteMeasure(1, {0.0, 1.0}, {1.0, 0.0}), ConfigError);
  EXPECT_THROW(DiscreteMeasure(2, {0.0, 1.0, 2.0}, {0.5, 0.5}), ConfigError);
  EXPECT_THROW(DiscreteMeasure(4, {0, 0, 0, 0}, {1.0}), ConfigError);
  EXPECT_THROW(DiscreteMeasure(1, {std::nan("")}, {1.0}), ConfigError);
  EXPECT_NO_THROW(DiscreteMeasure(3, {1, 2, 3}, {1.0}));
}

TEST(WCostDiscrete, IdenticalMeasuresCostNothing) {
  Gen gen(1);
  const auto mu = wlcert::testing::random_uniform_measure(gen, 2, 6);
  EXPECT_EQ(w_cost_discrete(mu, mu, TransportCost::squared_euclidean()), 0.0);
  EXPECT_EQ(w_cost_discrete(mu, mu, TransportCost::phi(wlcert::testing::random_switch(gen))), 0.0);
}

TEST(WCostDiscrete, DiracTarget) {
  const auto delta0 = DiscreteMeasure(2, {0.0, 0.0}, {1.0});
  const auto delta_x = DiscreteMeasure(2, {3.0, 4.0}, {1.0});
  EXPECT_DOUBLE_EQ(w_cost_discrete(delta0, delta_x, TransportCost::squared_euclidean()), 25.0);
  EXPECT_DOUBLE_EQ(w_cost_discrete(delta0, delta_x, TransportCost::euclidean()), 5.0);
  const auto sw = switch_from_aggregates(1.0, 1.0, 1.0, 0.7, 0.5, 0.4);
  EXPECT_DOUBLE_EQ(w_cost_discrete(delta0, delta_x, TransportCost::phi(sw)), phi(sw, 5.0));
}

TEST(WCostDiscrete, CrossingWeightsMatchHandEnumeration) {
  // mu = 0.3 d_0 + 0.7 d_2, nu = 0.6 d_1 + 0.4 d_3. The monotone coupling
  // moves 0.3 (0->1), 0.3 (2->1), 0.4 (2->3).
  const DiscreteMeasure mu(1, {2.0, 0.0}, {0.7, 0.3});
  const DiscreteMeasure nu(1, {1.0, 3.0}, {0.6, 0.4});
  EXPECT_NEAR(w_cost_discrete(mu, nu, TransportCost::squared_euclidean()), 0.3 + 0.3 + 0.4, 1e-15);
  // Every coupling has x = pi(0 -> 1) in [0, 0.3]; the rest follows from the
  // marginals. Minimize over x directly.
  double best = 1e300;
  for (int i = 0; i <= 3000; ++i) {
    const double x = 0.3 * i / 3000.0;  // mass 0 -> 1
    const double cost = x * 1.0 + (0.3 - x) * 9.0 + (0.6 - x) * 1.0 + (0.4 - (0.3 - x)) * 1.0;
    best = std::min(best, cost);
  }
  EXPECT_NEAR(w_cost_discrete(mu, nu, TransportCost::squared_euclidean()), best, 1e-12);
}

TEST(WCostDiscrete, QuantileAgreesWithPermutationsInOneDimension) {
  wlcert::testing::for_cases(100, 30, [](Gen& gen, int) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 7));
    const auto mu = wlcert::testing::random_uniform_measure(gen, 1, n);
    const auto nu = wlcert::testing::random_uniform_measure(gen, 1, n);
    const double perm = w_cost_discrete(mu, nu, TransportCost::squared_euclidean());
    // Duplicate one point to leave the permutation regime with the same law.
    std::vector<double> c, w;
    for (std::size_t i = 0; i < n; ++i) {
      c.push_back(nu.point(i)[0]);
      w.push_back(1.0 / static_cast<double>(n));
    }
    c.push_back(c.back());
    w.back() *= 0.5;
    w.push_back(w.back());
    const DiscreteMeasure nu_split(1, c, w);
    ASSERT_NEAR(w_cost_discrete(mu, nu_split, TransportCost::squared_euclidean()), perm, 1e-12);
  });
}

TEST(WCostDiscrete, UnsupportedInstanceNamesTheRegimes) {
  const DiscreteMeasure mu(2, {0, 0, 1, 1}, {0.5, 0.5});
  const DiscreteMeasure nu(2, {0, 0, 1, 1, 2, 2}, {0.2, 0.3, 0.5});
  try {
    w_cost_discrete(mu, nu, TransportCost::squared_euclidean());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("n <= 7"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("quantile"), std::string::npos);
  }
  Gen gen(2);
  const auto big = wlcert::testing::random_uniform_measure(gen, 2, 8);
  EXPECT_THROW(w_cost_discrete(big, big, TransportCost::squared_euclidean()), ConfigError);
  // phi is concave, so the 1D quantile shortcut does not apply to it.
  const DiscreteMeasure a(1, {0.0, 1.0}, {0.3, 0.7});
  EXPECT_THROW(w_cost_discrete(a, a, TransportCost::phi(identity_switch())), ConfigError);
}

TEST(ThetaP, Values) {
  EXPECT_DOUBLE_EQ(theta_p(4.0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(theta_p(10.0), 4.0 / 9.0);
  EXPECT_GT(theta_p(2.0 + 1e-12), 0.0);
  EXPECT_LT(theta_p(2.0 + 1e-12), 1e-11);
  EXPECT_LT(theta_p(1e12), 0.5);
  EXPECT_THROW(theta_p(2.0), ConfigError);
  EXPECT_THROW(theta_p(1.5), ConfigError);
}

TEST(ConversionConstant, Values) {
  const auto sw = identity_switch();
  EXPECT_NEAR(conversion_constant(sw, {4.0, 1.0}), std::sqrt(6.0) * std::pow(2.0, -1.0 / 3.0), 1e-15);
  EXPECT_NEAR(conversion_constant(sw, {4.0, 1.0}), 1.9441612972396, 1e-12);

  const double p = 3.5;
  const double base = conversion_constant(sw, {p, 0.7});
  EXPECT_NEAR(conversion_constant(sw, {p, 0.7 * std::pow(2.0, 2.0 * (p - 1.0))}), 2.0 * base, 1e-13);

  SwitchGeometry half = sw;
  half.a_slope = 0.5;
  EXPECT_NEAR(conversion_constant(half, {p, 0.7}), base * std::pow(2.0, theta_p(p)), 1e-13);

  // a_slope underflows to 0 while a^{-theta} is still representable.
  const auto deep = switch_from_aggregates(1.0, 1.0, 0.5, 1.0, 1.0, 0.1);
  ASSERT_EQ(deep.a_slope, 0.0);
  const double log_c = 0.5 * std::log(5.0) - theta_p(p) * std::log(p - 2.0) + theta_p(p) * deep.lambda * deep.R_sw * deep.R_sw +
                       std::log(0.7) / (2.0 * (p - 1.0));
  EXPECT_NEAR(std::log(conversion_constant(deep, {p, 0.7})), log_c, 1e-12 * log_c);

  EXPECT_THROW(conversion_constant(sw, {2.0, 1.0}), ConfigError);
  EXPECT_THROW(conversion_constant(sw, {4.0, 0.0}), ConfigError);
}

TEST(ConvertToW2, Values) {
  const auto sw = identity_switch();
  EXPECT_EQ(convert_to_w2(sw, {4.0, 1.0}, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(convert_to_w2(sw, {4.0, 1.0}, 1.0), conversion_constant(sw, {4.0, 1.0}));
  EXPECT_THROW(convert_to_w2(sw, {4.0, 1.0}, -1e-3), ConfigError);
}

TEST(ConvertToW2, BoundsBruteForceW2) {
  wlcert::testing::for_cases(300, 31, [](Gen& gen, int) {
    const auto sw = wlcert::testing::random_switch(gen);
    const int dim = gen.integer(1, 3);
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 6));
    const auto mu = wlcert::testing::random_uniform_measure(gen, dim, n, gen.log_uniform(0.1, 5.0));
    const auto nu = wlcert::testing::random_uniform_measure(gen, dim, n, gen.log_uniform(0.1, 5.0));
    const double p = gen.uniform(2.2, 8.0);
    const MomentBudget budget{p, mu.moment(p) + nu.moment(p)};
    const double wphi = w_cost_discrete(mu, nu, TransportCost::phi(sw));
    ASSERT_LE(w2(mu, nu), convert_to_w2(sw, budget, wphi) + 1e-9);
  });
}

TEST(MomentRecursion, Values) {
  EXPECT_DOUBLE_EQ(moment_recursion(2.5, std::vector<MomentStep>(5, {0.0, 0.0})), 2.5);
  EXPECT_DOUBLE_EQ(moment_recursion(2.0, std::vector<MomentStep>{{1.0, 3.0}}), 7.0);
  const double A = 0.03, B = 0.2, m0 = 1.5;
  const int K = 40;
  const double closed = std::pow(1.0 + A, K) * (m0 + B / A) - B / A;
  EXPECT_NEAR(moment_recursion(m0, std::vector<MomentStep>(K, {A, B})), closed, 1e-12 * closed);
  EXPECT_THROW(moment_recursion(-1.0, {}), ConfigError);
  EXPECT_THROW(moment_recursion(1.0, std::vector<MomentStep>{{-0.1, 0.0}}), ConfigError);
}

TEST(MomentRecursion, MatchesExplicitProductSum) {
  wlcert::testing::for_cases(50, 32, [](Gen& gen, int) {
    std::vector<MomentStep> steps(static_cast<std::size_t>(gen.integer(0, 30)));
    for (auto& s : steps) s = {gen.uniform(0.0, 0.2), gen.uniform(0.0, 2.0)};
    const double m0 = gen.uniform(0.0, 5.0);
    double prod = 1.0;
    for (const auto& s : steps) prod *= 1.0 + s.A;
    double sum = prod * m0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      double tail = 1.0;
      for (std::size_t j = i + 1; j < steps.size(); ++j) tail *= 1.0 + steps[j].A;
      sum += steps[i].B * tail;
    }
    ASSERT_NEAR(moment_recursion(m0, steps), sum, 1e-12 * std::max(1.0, sum));
  });
}

TEST(SharpnessPair, Values) {
  const auto sw = identity_switch();
  const auto pt = sharpness_pair(10.0, 4.0, sw);
  EXPECT_NEAR(pt.w2, 0.1, 1e-16);
  EXPECT_NEAR(pt.wphi, 1e-3, 1e-18);
  EXPECT_NEAR(pt.mp, 1.0, 1e-15);
  const auto one = sharpness_pair(1.0, 4.0, switch_from_aggregates(1.0, 1.0, 1.0, 0.7, 0.5, 0.4));
  EXPECT_DOUBLE_EQ(one.w2, 1.0);
  EXPECT_DOUBLE_EQ(one.wphi, phi(switch_from_aggregates(1.0, 1.0, 1.0, 0.7, 0.5, 0.4), 1.0));
  EXPECT_THROW(sharpness_pair(0.5, 4.0, sw), ConfigError);
}

TEST(SharpnessPair, AgreesWithBruteForce) {
  const auto sw = switch_from_aggregates(1.0, 1.0, 1.0, 0.7, 0.5, 0.4);
  for (double R : {1.5, 3.0, 30.0}) {
    const double p = 4.0;
    const double m = std::pow(R, -p);
    const DiscreteMeasure mu(1, {0.0, R}, {1.0 - m, m});
    const DiscreteMeasure nu(1, {0.0}, {1.0});
    EXPECT_NEAR(sharpness_pair(R, p, sw).w2, w2(mu, nu), 1e-12);
    EXPECT_NEAR(sharpness_pair(R, p, sw).mp, mu.moment(p) + nu.moment(p), 1e-12);
  }
}

TEST(SharpnessPair, ExactSlopesAndBoundedRatio) {
  const std::vector<double> R{10.0, 1e2, 1e3, 1e4};
  const auto sw = identity_switch();
  for (double p : {3.0, 4.0, 6.0}) {
    std::vector<double> w2s, wphis, ratio;
    for (double r : R) {
      const auto pt = sharpness_pair(r, p, sw);
      w2s.push_back(pt.w2);
      wphis.push_back(pt.wphi);
      ratio.push_back(pt.w2 / (std::pow(sw.a_slope, -theta_p(p)) * std::pow(pt.mp, 1.0 / (2.0 * (p - 1.0))) *
                               std::pow(pt.wphi, theta_p(p))));
    }
    EXPECT_NEAR(loglog_slope(R, w2s), 1.0 - p / 2.0, 1e-9);
    EXPECT_NEAR(loglog_slope(R, wphis), 1.0 - p, 1e-9);
    for (double q : ratio) {
      EXPECT_NEAR(q, ratio.front(), 1e-9);
      EXPECT_GT(q, 0.0);
    }
  }
}

TEST(SharpnessPair, AffineTailIntercept) {
  const auto sw = switch_from_aggregates(1.0, 1.0, 1.0, 0.7, 0.5, 0.4);
  const double intercept = phi(sw, sw.R_sw) - sw.a_slope * sw.R_sw;
  EXPECT_GT(intercept, 0.0);
  for (double p : {3.0, 4.0, 6.0}) {
    double prev_local = -1e300;
    for (double r : {2.0 * sw.R_sw, 10.0 * sw.R_sw, 1e3 * sw.R_sw}) {
      const auto pt = sharpness_pair(r, p, sw);
      EXPECT_NEAR(pt.wphi * std::pow(r, p) - sw.a_slope * r, intercept, 1e-9 * r);
      const double local = -p + sw.a_slope * r / phi(sw, r);
      EXPECT_LT(local, 1.0 - p);
      EXPECT_GT(local, prev_local);
      prev_local = local;
    }
  }
}

TEST(OneSidedSlope, Examples) {
  Gen gen(3);
  std::vector<std::pair<Vec2, Vec2>> pairs;
  for (int i = 0; i < 200; ++i) pairs.push_back({{gen.normal(), gen.normal()}, {gen.normal(), gen.normal()}});
  pairs.push_back({{1.0, 1.0}, {1.0, 1.0}});

  EXPECT_NEAR(onesided_slope_check(ScoreErrorField{LinearError{0.37}}, pairs), 0.37, 1e-15);
  EXPECT_EQ(onesided_slope_check(ScoreErrorField{NoError{}}, pairs), 0.0);
  EXPECT_LE(std::abs(onesided_slope_check(ScoreErrorField{SkewRotation2D{1e6}}, pairs)), 1e-12);
  const double bump = onesided_slope_check(ScoreErrorField{BoundedBump{0.5, 0.25}}, pairs);
  EXPECT_LE(bump, 0.5 / 0.25);
  EXPECT_GT(bump, 0.0);
}

TEST(TransportProperties, PhiMetricAxioms) {
  wlcert::testing::for_cases(150, 33, [](Gen& gen, int) {
    const auto sw = wlcert::testing::random_switch(gen);
    const auto cost = TransportCost::phi(sw);
    const int dim = gen.integer(1, 3);
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 6));
    const auto a = wlcert::testing::random_uniform_measure(gen, dim, n);
    const auto b = wlcert::testing::random_uniform_measure(gen, dim, n);
    const auto c = wlcert::testing::random_uniform_measure(gen, dim, n);
    const double ab = w_cost_discrete(a, b, cost);
    ASSERT_EQ(ab, w_cost_discrete(b, a, cost));
    ASSERT_LE(w_cost_discrete(a, c, cost), ab + w_cost_discrete(b, c, cost) + 1e-9);
  });
}

TEST(TransportProperties, CostDominanceAndInterpolation) {
  wlcert::testing::for_cases(150, 34, [](Gen& gen, int) {
    const auto sw = wlcert::testing::random_switch(gen);
    const int dim = gen.integer(1, 3);
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 6));
    const auto a = wlcert::testing::random_uniform_measure(gen, dim, n, gen.log_uniform(0.2, 4.0));
    const auto b = wlcert::testing::random_uniform_measure(gen, dim, n, gen.log_uniform(0.2, 4.0));
    const double wphi = w_cost_discrete(a, b, TransportCost::phi(sw));
    const double w1 = w_cost_discrete(a, b, TransportCost::euclidean());
    const double w2sq = w_cost_discrete(a, b, TransportCost::squared_euclidean());
    ASSERT_LE(wphi, w1 + 1e-12);
    ASSERT_LE(w1, std::sqrt(w2sq) + 1e-12);
    const double p = gen.uniform(2.2, 8.0);
    const double Mbar = a.moment(p) + b.moment(p);
    for (int j = 0; j < 20; ++j) {
      const double rho = gen.log_uniform(1e-2, 1e2);
      const double rhs = rho / sw.a_slope * wphi + std::pow(2.0, p - 1.0) * Mbar * std::pow(rho, -(p - 2.0));
      ASSERT_LE(w2sq, rhs * (1.0 + 1e-12) + 1e-12) << "rho=" << rho;
    }
  });
}
