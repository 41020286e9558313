#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "moralhazard/contracts.hpp"
#include "oracles.hpp"

using namespace moralhazard;

namespace {

CanonicalContract gaussian_contract(double lambda, double mu, std::vector<Deviation> devs = {}) {
  return CanonicalContract(fixture::gaussian_log().model, 100.0, lambda, mu, std::move(devs));
}

struct RandomContract {
  ProblemSpec problem;
  CanonicalContract contract;
  double a;
};

// Random relaxed-shape contracts (and some with one deviation term) on the
// log-utility fixtures, with a random action in the interval.
RandomContract random_contract(std::mt19937_64& rng, bool allow_deviation) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int which = static_cast<int>(unif(rng) * 4);
  ProblemSpec p = which == 0   ? fixture::gaussian_log()
                  : which == 1 ? fixture::exponential_log(4.0)
                  : which == 2 ? fixture::poisson_log(4.0)
                               : fixture::student_t_log(4.0);
  const double lambda = 30.0 + 120.0 * unif(rng);
  const double mu_scale = which == 0 ? 3000.0 : which == 1 ? 5000.0 : which == 2 ? 100.0 : 2000.0;
  const double mu = mu_scale * (0.2 + unif(rng));
  std::vector<Deviation> devs;
  if (allow_deviation && unif(rng) < 0.5) {
    const double a_hat = p.a_min + (0.1 + 0.3 * unif(rng)) * (p.a_max - p.a_min);
    devs.push_back({a_hat, 5.0 * unif(rng)});
  }
  const double a = p.a_min + (0.05 + 0.9 * unif(rng)) * (p.a_max - p.a_min);
  CanonicalContract c(p.model, p.a0, lambda, mu, devs);
  return {p, c, a};
}

}  // namespace

TEST(ContractUtility, ZeroSlopeIsConstant) {
  const auto c = gaussian_contract(60.0, 0.0);
  for (double y : {-100.0, 0.0, 100.0, 250.0}) EXPECT_DOUBLE_EQ(c.utility(y), std::log(60.0));
}

TEST(ContractUtility, GaussianLogExamples) {
  const auto c = gaussian_contract(60.0, 1000.0);
  EXPECT_NEAR(contract_utility(c, 100.0), std::log(60.0), 1e-15);
  EXPECT_NEAR(contract_utility(c, 75.0), std::log(50.0), 1e-15);
  EXPECT_NEAR(contract_utility(c, 75.0), c.model().utility.u0(), 1e-15);
}

TEST(ContractWage, GaussianLogExamples) {
  const auto c = gaussian_contract(60.0, 1000.0);
  EXPECT_NEAR(contract_wage(c, 75.0), 0.0, 1e-12);
  EXPECT_NEAR(contract_wage(c, 100.0), 10.0, 1e-12);
  EXPECT_NEAR(contract_wage(c, 150.0), 30.0, 1e-12);
  ASSERT_EQ(c.kinks().size(), 1u);
  EXPECT_NEAR(c.kinks()[0], 75.0, 1e-10);
}

TEST(ContractUtility, DeviationTermsUseDensityRatio) {
  const auto d = OutputDistribution::gaussian(50.0);
  const auto c = gaussian_contract(60.0, 1000.0, {{20.0, 3.0}, {150.0, 0.5}});
  for (double y : {-50.0, 30.0, 100.0, 180.0}) {
    const double f0 = density(d, y, 100.0);
    const double z = 60.0 + 1000.0 * (y - 100.0) / 2500.0 + 3.0 * (1.0 - density(d, y, 20.0) / f0) +
                     0.5 * (1.0 - density(d, y, 150.0) / f0);
    EXPECT_NEAR(c.marginal(y), z, 1e-10 * std::max(1.0, std::abs(z)));
    EXPECT_DOUBLE_EQ(c.utility(y), c.model().utility.link_g(c.marginal(y)));
  }
}

TEST(ContractUtility, OutsideSupportIsAnError) {
  const auto p = fixture::exponential_log(4.0);
  CanonicalContract c(p.model, p.a0, 60.0, 1000.0);
  EXPECT_THROW(c.utility(-1.0), Error);
}

TEST(ContractValidation, RejectsBadMultipliers) {
  const auto m = fixture::gaussian_log().model;
  EXPECT_THROW(CanonicalContract(m, 100.0, -1.0, 0.0), Error);
  EXPECT_THROW(CanonicalContract(m, 100.0, 1.0, 0.0, {{50.0, -1.0}}), Error);
  EXPECT_THROW(CanonicalContract(m, 100.0, 1.0, 0.0, {{100.0, 1.0}}), Error);
}

TEST(AgentUtility, ConstantContract) {
  const auto c = gaussian_contract(60.0, 0.0);
  const Cost cost{1.0 / 30000.0, 2.0};
  for (double a : {0.0, 50.0, 100.0, 180.0}) {
    EXPECT_NEAR(agent_utility(c, a), std::log(60.0) - cost.value(a), 1e-10);
    const auto d = agent_utility_derivs(c, a);
    EXPECT_NEAR(d.U_a, -cost.d1(a), 1e-10);
  }
}

TEST(AgentUtility, ZeroContractAtZeroEffort) {
  const auto c = gaussian_contract(0.0, 0.0);
  EXPECT_NEAR(agent_utility(c, 0.0), std::log(50.0), 1e-10);
}

TEST(AgentUtility, DeltaFormAgreesAtIntendedAction) {
  const auto c = gaussian_contract(60.0, 1000.0);
  const auto direct = agent_utility_profile(c, 100.0);
  const auto delta = agent_utility_profile_delta_form(c, 100.0);
  EXPECT_NEAR(direct.U, delta.U, 1e-8);
}

TEST(ExpectedWage, Examples) {
  EXPECT_NEAR(expected_wage(gaussian_contract(0.0, 0.0), 100.0), 0.0, 1e-15);
  EXPECT_NEAR(expected_wage(gaussian_contract(60.0, 0.0), 100.0), 10.0, 1e-9);
  // Option payoff on a Gaussian: E[(L + M Z)^+] with L = 10, M = 20.
  const double L = 10.0, M = 1000.0 * 50.0 / 2500.0;
  const double k = L / M;
  const double expected = L * oracle::normal_cdf(k) + M * std::exp(-0.5 * k * k) / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(expected_wage(gaussian_contract(60.0, 1000.0), 100.0), expected, 1e-9);
}

TEST(ThresholdReport, GaussianLogExample) {
  const auto r = threshold_report(gaussian_contract(60.0, 1000.0));
  EXPECT_NEAR(r.threshold_score, -0.01, 1e-15);
  EXPECT_NEAR(r.threshold_outcome, 75.0, 1e-10);
  EXPECT_NEAR(r.zero_pay_prob, oracle::normal_cdf(-0.5), 1e-9);
  EXPECT_NEAR(r.zero_pay_prob, 0.3085, 1e-4);
}

TEST(ThresholdReport, KinkBelowBoundedSupport) {
  // Exponential scores are at least −1/a0, so λ + μ S ≥ λ − μ/a0 > w0 pays everywhere.
  const auto p = fixture::exponential_log(4.0);
  CanonicalContract c(p.model, 100.0, 80.0, 2000.0);
  const auto r = threshold_report(c);
  EXPECT_EQ(r.zero_pay_prob, 0.0);
  EXPECT_EQ(r.threshold_outcome, 0.0);
}

TEST(ThresholdReport, NonMonotoneScoreIntegratesZeroRegion) {
  const auto p = fixture::student_t_log(4.0);
  CanonicalContract c(p.model, 100.0, 40.0, 2000.0);
  const auto r = threshold_report(c);
  EXPECT_TRUE(std::isnan(r.threshold_outcome));
  // λ < w0 so both tails pay nothing; compare with a Simpson sum over the
  // region where the contract sits on the floor.
  const auto d = p.dist();
  auto zero = [&](double y) { return c.marginal(y) <= 50.0 ? density(d, y, 100.0) : 0.0; };
  const auto& k = c.kinks();
  ASSERT_EQ(k.size(), 2u);
  const double inner = oracle::simpson([&](double y) { return density(d, y, 100.0); }, k[0], k[1], 20000);
  EXPECT_NEAR(r.zero_pay_prob, 1.0 - inner, 1e-8);
  (void)zero;
}

TEST(ContractProperties, LimitedLiabilityEverywhere) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rc = random_contract(rng, true);
    const Interval q = quantile_bounds(rc.problem.dist(), rc.problem.a0, 1.0 - 1e-9);
    const double u0 = rc.problem.utility().u0();
    const int n = q.discrete() ? static_cast<int>(q.lattice_size()) : 500;
    for (int i = 0; i < n; ++i) {
      const double y = q.discrete() ? q.lo + i : q.lo + (q.hi - q.lo) * i / (n - 1);
      EXPECT_GE(rc.contract.utility(y), u0);
      EXPECT_GE(rc.contract.wage(y), 0.0);
    }
  }
}

TEST(ContractProperties, MonotoneScoreGivesMonotoneContract) {
  for (const auto& p : {fixture::gaussian_log(), fixture::exponential_log(4.0), fixture::poisson_log(4.0)}) {
    CanonicalContract c(p.model, p.a0, 55.0, p.dist().family == Family::Poisson ? 50.0 : 2000.0);
    const Interval q = quantile_bounds(p.dist(), p.a0, 1.0 - 1e-9);
    const int n = q.discrete() ? static_cast<int>(q.lattice_size()) : 1000;
    double prev = -kInf;
    for (int i = 0; i < n; ++i) {
      const double y = q.discrete() ? q.lo + i : q.lo + (q.hi - q.lo) * i / (n - 1);
      const double v = c.utility(y);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(ContractProperties, DirectAndDeltaFormsAgree) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const auto rc = random_contract(rng, false);
    const auto direct = agent_utility_profile(rc.contract, rc.a);
    const auto delta = agent_utility_profile_delta_form(rc.contract, rc.a);
    EXPECT_LE(std::abs(direct.U - delta.U), 1e-6 * std::max(1.0, std::abs(direct.U)));
    EXPECT_LE(std::abs(direct.U_a - delta.U_a), 1e-6 * std::max(std::abs(direct.U_a), 1e-6)) << trial;
    EXPECT_LE(std::abs(direct.U_aa - delta.U_aa), 1e-6 * std::max(std::abs(direct.U_aa), 1e-8)) << trial;
  }
}

TEST(ContractProperties, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  const Tolerances tight{1e-13, 1e-13};
  for (int trial = 0; trial < 10; ++trial) {
    const auto rc = random_contract(rng, true);
    const auto p = agent_utility_profile(rc.contract, rc.a, tight);
    const double h = 1e-3 * (1.0 + std::abs(rc.a)) * (rc.problem.dist().discrete() ? 0.1 : 1.0);
    auto U = [&](double a) { return agent_utility(rc.contract, a, tight); };
    auto Ua = [&](double a) { return agent_utility_profile(rc.contract, a, tight).U_a; };
    const double fd1 = oracle::five_point_derivative(U, rc.a, h);
    const double fd2 = oracle::five_point_derivative(Ua, rc.a, h);
    EXPECT_LE(std::abs(fd1 - p.U_a), 1e-4 * std::max(std::abs(p.U_a), 1e-6)) << "trial " << trial;
    EXPECT_LE(std::abs(fd2 - p.U_aa), 1e-4 * std::max(std::abs(p.U_aa), 1e-8)) << "trial " << trial;
  }
}
