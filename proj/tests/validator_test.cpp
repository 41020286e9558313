#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "moralhazard/grid_solver.hpp"
#include "moralhazard/relaxed_solver.hpp"
#include "moralhazard/validator.hpp"
#include "oracles.hpp"

using namespace moralhazard;

namespace {

FoaReport relaxed_report(const ProblemSpec& p) { return validate_foa(solve_relaxed(p).contract, p); }

// Gaussian-log reservation utility at which the relaxed contract is concave
// in the action everywhere on [0, 200].
constexpr double kConcaveU = 5.0;

}  // namespace

TEST(ValidateFoa, HighReservationUtilityIsValidAndConcave) {
  const auto p = fixture::gaussian_log(kConcaveU);
  const auto r = relaxed_report(p);
  EXPECT_TRUE(r.valid);
  EXPECT_TRUE(r.concave_everywhere);
  EXPECT_LT(r.max_U_aa, 0.0);
  EXPECT_NEAR(r.best_action, p.a0, 1e-3);
  EXPECT_LE(r.max_gain, p.tol.deviation_tol);
}

TEST(ValidateFoa, DefaultHighFixtureIsValid) {
  const auto r = relaxed_report(fixture::gaussian_log(fixture::kGaussianHighU));
  EXPECT_TRUE(r.valid);
  EXPECT_EQ(r.local_maxima.size(), 1u);
}

TEST(ValidateFoa, LowReservationUtilityHasSecondPeakAtLowAction) {
  const auto p = fixture::gaussian_log(fixture::kGaussianLowU);
  const auto r = relaxed_report(p);
  EXPECT_FALSE(r.valid);
  EXPECT_GT(r.max_gain, p.tol.deviation_tol);
  EXPECT_LT(r.best_action, 0.25 * p.a0);
  EXPECT_GE(r.local_maxima.size(), 2u);
  EXPECT_FALSE(r.concave_everywhere);
}

TEST(ValidateFoa, BestActionGainMatchesDirectEvaluation) {
  const auto p = fixture::gaussian_log(fixture::kGaussianLowU);
  const auto c = solve_relaxed(p).contract;
  const auto r = validate_foa(c, p);
  EXPECT_NEAR(r.max_gain, agent_utility(c, r.best_action) - agent_utility(c, p.a0), 1e-12);
  EXPECT_NEAR(r.intended_utility, agent_utility(c, p.a0), 1e-12);
  // No action on an independent coarse scan beats the reported best.
  for (int i = 0; i <= 400; ++i) {
    EXPECT_LE(agent_utility(c, 0.5 * i), agent_utility(c, r.best_action) + 1e-10);
  }
}

TEST(ValidateFoa, HeavyTailedFixtureIsInvalidAtPositiveProfitUtilities) {
  for (double u_bar : {3.75, 4.0, 4.3}) {
    const auto p = fixture::student_t_log(u_bar);
    const auto r = relaxed_report(p);
    EXPECT_FALSE(r.valid) << "u_bar=" << u_bar;
    EXPECT_GT(r.max_gain, p.tol.deviation_tol);
  }
}

TEST(ValidateFoa, BoundedBelowSupportsAreValid) {
  for (double u_bar : {4.0, 4.2, 4.5}) {
    EXPECT_TRUE(relaxed_report(fixture::exponential_log(u_bar)).valid) << "exponential " << u_bar;
    EXPECT_TRUE(relaxed_report(fixture::poisson_log(u_bar)).valid) << "poisson " << u_bar;
  }
}

TEST(ValidateFoa, ZeroPayProbabilityMatchesThresholdReport) {
  const auto p = fixture::gaussian_log(fixture::kGaussianLowU);
  const auto c = solve_relaxed(p).contract;
  const double t = threshold_report(c).zero_pay_prob;
  EXPECT_DOUBLE_EQ(validate_foa(c, p).zero_pay_prob, t);
  // The closed form for Gaussian output: P(Y ≤ y̲ | a0).
  const double kink = c.kinks().front();
  EXPECT_NEAR(t, oracle::normal_cdf((kink - p.a0) / 50.0), 1e-9);
}

TEST(ValidateFoa, ZeroPayProbabilityFallsFromInvalidToValid) {
  const auto lo = relaxed_report(fixture::gaussian_log(fixture::kGaussianLowU));
  const auto hi = relaxed_report(fixture::gaussian_log(fixture::kGaussianHighU));
  EXPECT_LT(hi.zero_pay_prob, lo.zero_pay_prob);
}

// Random (family, reservation utility) draws: the report's structural
// invariants hold whatever the verdict.
TEST(ValidateFoaProperty, ReportInvariants) {
  std::mt19937 rng(20261017);
  const std::vector<std::pair<ProblemSpec (*)(double), std::pair<double, double>>> gens{
      {[](double u) { return fixture::gaussian_log(u); }, {3.8, 5.2}},
      {fixture::student_t_log, {3.8, 4.6}},
      {fixture::exponential_log, {4.0, 4.5}},
      {fixture::poisson_log, {4.0, 4.5}},
      {fixture::binomial_log, {4.2, 4.6}},
      {fixture::gamma_log, {4.0, 4.6}},
  };
  std::uniform_int_distribution<std::size_t> pick(0, gens.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const auto& [make, range] = gens[pick(rng)];
    const double u_bar = range.first + (range.second - range.first) * unit(rng);
    const auto p = make(u_bar);
    const auto r = relaxed_report(p);
    SCOPED_TRACE(std::string(to_string(p.dist().family)) + " u_bar=" + std::to_string(u_bar));
    EXPECT_EQ(r.valid, r.max_gain <= p.tol.deviation_tol);
    EXPECT_GE(r.max_gain, 0.0);
    if (r.concave_everywhere) EXPECT_TRUE(r.valid);
    EXPECT_TRUE(std::any_of(r.local_maxima.begin(), r.local_maxima.end(),
                            [&](const LocalMax& m) { return m.action == r.best_action; }));
    EXPECT_LE(r.min_U_aa, r.max_U_aa);
    EXPECT_GE(r.zero_pay_prob, 0.0);
    EXPECT_LE(r.zero_pay_prob, 1.0);
  }
}

TEST(ValidateFoa, CurvatureTurnsNegativeAlongRelaxedPath) {
  for (const auto& make : {+[](double u) { return fixture::gaussian_log(u); }, +fixture::exponential_log,
                           +fixture::poisson_log, +fixture::gamma_log}) {
    for (double u_bar : {5.0, 5.5, 6.0}) {
      EXPECT_LT(relaxed_report(make(u_bar)).min_U_aa, 0.0) << u_bar;
    }
  }
}

TEST(ValidateFoa, GridSolutionIsValidOnItsActionGrid) {
  for (const auto& p : {fixture::gaussian_log(fixture::kGaussianLowU), fixture::gaussian_log(fixture::kGaussianHighU)}) {
    const auto g = solve_grid(p, 201, 200);
    const auto r = validate_grid_solution(g, p);
    EXPECT_TRUE(r.valid);
    EXPECT_LE(r.max_gain, p.tol.deviation_tol);
  }
}

TEST(UniformActions, EndpointsAndSpacing) {
  const auto p = fixture::gaussian_log();
  const auto a = uniform_actions(p, 2001);
  ASSERT_EQ(a.size(), 2001u);
  EXPECT_EQ(a.front(), p.a_min);
  EXPECT_EQ(a.back(), p.a_max);
  EXPECT_NEAR(a[1] - a[0], 0.1, 1e-12);
  EXPECT_THROW(uniform_actions(p, 1), Error);
}

TEST(FoaThreshold, GaussianTransitionIsFiniteAndMonotone) {
  const auto p = fixture::gaussian_log();
  const auto t = foa_threshold(p, fixture::kGaussianLowU, fixture::kGaussianHighU);
  EXPECT_GT(t.threshold, fixture::kGaussianLowU);
  EXPECT_LT(t.threshold, fixture::kGaussianHighU);
  EXPECT_LT(t.hi - t.lo, (fixture::kGaussianHighU - fixture::kGaussianLowU) / 31.0 / 4000.0);
  EXPECT_TRUE(t.monotone);
  EXPECT_TRUE(t.violations.empty());
  EXPECT_EQ(t.scan.size(), 32u + 12u);
  EXPECT_FALSE(relaxed_validity(p, t.lo).valid);
  EXPECT_TRUE(relaxed_validity(p, t.hi).valid);
}

TEST(FoaThreshold, ExponentialIsValidAcrossTheBracket) {
  const auto p = fixture::exponential_log(4.0);
  EXPECT_TRUE(relaxed_validity(p, 0.5).valid);
  try {
    foa_threshold(p, 0.5, 4.5, 4, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoTransition);
  }
}

TEST(FoaThreshold, EqualEndpointsRaiseNoTransition) {
  const auto p = fixture::gaussian_log();
  try {
    foa_threshold(p, kConcaveU, kConcaveU + 0.5, 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoTransition);
  }
  EXPECT_THROW(foa_threshold(p, 4.6, 4.6), Error);
}
