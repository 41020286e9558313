#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "moralhazard/preferences.hpp"
#include "oracles.hpp"

using namespace moralhazard;

namespace {

std::vector<Utility> utilities() {
  return {Utility::log(50.0),        Utility::log(1.0),         Utility::crra(2.0, 1.0), Utility::crra(0.5, 10.0),
          Utility::crra(3.0, 50.0),  Utility::cara(1.0, 0.0),   Utility::cara(0.02, 2.0), Utility::cara(1.0, 2.0)};
}

}  // namespace

TEST(Utility, FloorValues) {
  EXPECT_NEAR(Utility::log(50.0).u0(), 3.9120230054281460, 1e-15);
  EXPECT_DOUBLE_EQ(Utility::log(50.0).k(Utility::log(50.0).u0()), 0.0);
  EXPECT_DOUBLE_EQ(Utility::cara(1.0, 0.0).u0(), -1.0);
}

TEST(Utility, LinkExamples) {
  const auto log50 = Utility::log(50.0);
  EXPECT_DOUBLE_EQ(log50.link_g(25.0), std::log(50.0));
  EXPECT_NEAR(log50.link_g(100.0), 4.6051701859880914, 1e-15);
  const auto cara = Utility::cara(1.0, 2.0);
  EXPECT_NEAR(cara.link_g(std::exp(2.0)), -std::exp(-2.0), 1e-16);
}

TEST(Utility, WageExamples) {
  const auto log50 = Utility::log(50.0);
  EXPECT_DOUBLE_EQ(log50.wage_of_marginal(30.0), 0.0);
  EXPECT_DOUBLE_EQ(log50.wage_of_marginal(80.0), 30.0);
  EXPECT_DOUBLE_EQ(Utility::crra(2.0, 1.0).wage_of_marginal(4.0), 1.0);
}

TEST(Utility, InvalidParametersRejected) {
  EXPECT_THROW(Utility::log(0.0), Error);
  EXPECT_THROW(Utility::crra(1.0, 1.0), Error);
  EXPECT_THROW(Utility::crra(-1.0, 1.0), Error);
  EXPECT_THROW(Utility::cara(0.0, 1.0), Error);
  EXPECT_THROW(Utility::cara(1.0, -1.0), Error);
}

TEST(Utility, BelowFloorIsAnError) {
  const auto u = Utility::log(50.0);
  try {
    u.k(u.u0() - 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BelowLimitedLiability);
  }
  EXPECT_THROW(u.u(-1.0), Error);
}

TEST(Utility, InverseIdentityOnWideRange) {
  for (const auto& u : utilities()) {
    for (double x = 0.0; x <= 1e6; x = x < 1.0 ? x + 0.1 : x * 1.37) {
      const double v = u.u(x);
      // CARA saturates in double precision far out.
      if (v >= u.u_sup() || !std::isfinite(u.k_prime(v))) continue;
      const double back = u.k(v);
      // Roundoff in u amplifies by u′(x)·k′(v) = 1 in utility but by the
      // relative precision of v in money.
      const double slack = 1e-9 * std::max(1.0, x) + 4e-16 * std::abs(v) * u.k_prime(v);
      EXPECT_LE(std::abs(back - x), slack) << to_string(u.family()) << " x=" << x;
    }
  }
}

TEST(Utility, DerivativesMatchFiniteDifferences) {
  for (const auto& u : utilities()) {
    for (double x : {0.5, 3.0, 20.0, 200.0}) {
      const double v = u.u(x);
      const double h = 1e-5 * std::max(1.0, std::abs(v)) * std::min(1.0, std::abs(u.u(x + 1.0) - v));
      auto k = [&](double t) { return u.k(t); };
      auto kp = [&](double t) { return u.k_prime(t); };
      EXPECT_LE(oracle::relative_error(oracle::central_difference(k, v, h), u.k_prime(v)), 1e-6)
          << to_string(u.family()) << " x=" << x;
      EXPECT_LE(oracle::relative_error(oracle::central_difference(kp, v, h), u.k_second(v)), 1e-6)
          << to_string(u.family()) << " x=" << x;
      // g inverts k′ above the kink.
      const double z = u.k_prime(v);
      EXPECT_LE(std::abs(u.link_g(z) - v), 1e-12 * std::max(1.0, std::abs(v)));
      const double hz = 1e-6 * z;
      auto g = [&](double t) { return u.link_g(t); };
      EXPECT_LE(oracle::relative_error(oracle::central_difference(g, z, hz), u.link_g_prime(z)), 1e-6);
      EXPECT_LE(std::abs(u.wage_of_marginal(z) - x), 1e-9 * std::max(1.0, x));
    }
  }
}

TEST(Utility, LinkShape) {
  for (const auto& u : utilities()) {
    const double kink = u.kink();
    double prev = -kInf;
    std::vector<double> zs;
    for (int i = 0; i <= 400; ++i) zs.push_back(kink * (0.2 + 0.02 * i));
    for (double z : zs) {
      const double g = u.link_g(z);
      EXPECT_GE(g, prev);
      prev = g;
      if (z <= kink) {
        EXPECT_DOUBLE_EQ(g, u.u0());
        EXPECT_EQ(u.wage_of_marginal(z), 0.0);
      }
      EXPECT_GE(u.wage_of_marginal(z), 0.0);
    }
    // Concavity above the kink on a uniform grid.
    const double h = 0.05 * kink;
    for (int i = 1; i < 300; ++i) {
      const double z = kink + i * h;
      const double second = u.link_g(z + h) - 2.0 * u.link_g(z) + u.link_g(z - h);
      EXPECT_LE(second, 1e-10 * std::max(1.0, std::abs(u.link_g(z)))) << to_string(u.family()) << " z=" << z;
    }
  }
}

TEST(Utility, MarginalLimitCheck) {
  const auto log_check = Utility::log(50.0).marginal_limit_check();
  EXPECT_TRUE(log_check.finite);
  EXPECT_NEAR(log_check.value, 1.0, 1e-12);
  EXPECT_TRUE(Utility::crra(2.0, 1.0).marginal_limit_check().finite);
  const auto low_gamma = Utility::crra(0.5, 1.0).marginal_limit_check();
  EXPECT_FALSE(low_gamma.finite);
  EXPECT_FALSE(low_gamma.warning.empty());
  EXPECT_TRUE(Utility::cara(1.0, 1.0).marginal_limit_check().finite);
}

TEST(Cost, Examples) {
  const Cost c{1.0 / 30000.0, 2.0};
  EXPECT_NEAR(c.value(100.0), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(c.d1(0.0), 0.0);
  EXPECT_NEAR(c.d1(100.0), 1.0 / 150.0, 1e-16);
  EXPECT_NEAR(c.d2(100.0), 2.0 / 30000.0, 1e-18);
  EXPECT_THROW(c.value(-1.0), Error);
  EXPECT_THROW((Cost{1.0, 1.0}.validate()), Error);
}

TEST(Cost, DerivativesMatchFiniteDifferences) {
  const Cost c{0.3, 2.7};
  for (double a : {0.5, 1.0, 3.0, 10.0}) {
    auto f = [&](double t) { return c.value(t); };
    auto f1 = [&](double t) { return c.d1(t); };
    EXPECT_LE(oracle::relative_error(oracle::central_difference(f, a, 1e-5 * a), c.d1(a)), 1e-8);
    EXPECT_LE(oracle::relative_error(oracle::central_difference(f1, a, 1e-5 * a), c.d2(a)), 1e-8);
  }
}
