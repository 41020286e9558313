#pragma once

// Shared instances for the test suite.

#include <ostream>
#include <string>
#include <vector>

#include "moralhazard/problem.hpp"

namespace fixture {

using namespace moralhazard;

inline ProblemSpec make(OutputDistribution dist, Utility utility, Cost cost, double a0, double a_min, double a_max,
                        double u_bar) {
  ProblemSpec p;
  p.model = Model{dist, utility, cost};
  p.a0 = a0;
  p.a_min = a_min;
  p.a_max = a_max;
  p.reservation_utility = u_bar;
  p.validate();
  return p;
}

inline constexpr double kGaussianLowU = 3.85;   // relaxed contract violates global IC
inline constexpr double kGaussianHighU = 4.6;   // relaxed contract is globally IC

/// Gaussian output with σ = 50, log utility with w0 = 50, c(a) = a²/30000, a0 = 100.
inline ProblemSpec gaussian_log(double u_bar = kGaussianHighU, double sigma = 50.0) {
  return make(OutputDistribution::gaussian(sigma), Utility::log(50.0), Cost{1.0 / 30000.0, 2.0}, 100.0, 0.0, 200.0,
              u_bar);
}

/// Student-t output with σ = 20, ν = 1.15; preferences as in gaussian_log.
inline ProblemSpec student_t_log(double u_bar) {
  return make(OutputDistribution::student_t(20.0, 1.15), Utility::log(50.0), Cost{1.0 / 30000.0, 2.0}, 100.0, 0.0,
              200.0, u_bar);
}

inline ProblemSpec exponential_log(double u_bar) {
  return make(OutputDistribution::exponential(), Utility::log(50.0), Cost{1.0 / 30000.0, 2.0}, 100.0, 1.0, 200.0,
              u_bar);
}

inline ProblemSpec poisson_log(double u_bar) {
  return make(OutputDistribution::poisson(), Utility::log(50.0), Cost{1.0 / 3000.0, 2.0}, 20.0, 0.01, 40.0, u_bar);
}

inline ProblemSpec geometric_log(double u_bar) {
  return make(OutputDistribution::geometric(), Utility::log(50.0), Cost{1.0 / 3000.0, 2.0}, 20.0, 1.05, 40.0, u_bar);
}

inline ProblemSpec binomial_log(double u_bar) {
  return make(OutputDistribution::binomial(50), Utility::log(50.0), Cost{1.0, 2.0}, 0.5, 0.01, 0.99, u_bar);
}

inline ProblemSpec gamma_log(double u_bar) {
  return make(OutputDistribution::gamma(2.0), Utility::log(50.0), Cost{1.0 / 30000.0, 2.0}, 50.0, 1.0, 100.0,
              u_bar);
}

struct FamilyCase {
  std::string name;
  OutputDistribution dist;
  std::vector<double> actions;  // five representative actions
};

inline void PrintTo(const FamilyCase& c, std::ostream* os) { *os << c.name; }

inline std::vector<FamilyCase> all_families() {
  return {
      {"gaussian", OutputDistribution::gaussian(50.0), {0.0, 50.0, 100.0, 150.0, 200.0}},
      {"lognormal", OutputDistribution::lognormal(0.5), {-1.0, 0.0, 1.0, 2.0, 3.0}},
      {"poisson", OutputDistribution::poisson(), {0.5, 2.0, 10.0, 20.0, 40.0}},
      {"exponential", OutputDistribution::exponential(), {0.5, 1.0, 10.0, 100.0, 200.0}},
      {"bernoulli", OutputDistribution::bernoulli(), {0.05, 0.3, 0.5, 0.7, 0.95}},
      {"geometric", OutputDistribution::geometric(), {1.2, 2.0, 5.0, 20.0, 40.0}},
      {"binomial", OutputDistribution::binomial(50), {0.05, 0.3, 0.5, 0.7, 0.95}},
      {"gamma2", OutputDistribution::gamma(2.0), {0.5, 5.0, 20.0, 50.0, 100.0}},
      {"gamma3.5", OutputDistribution::gamma(3.5), {0.5, 5.0, 20.0, 50.0, 100.0}},
      {"student_t", OutputDistribution::student_t(20.0, 1.15), {0.0, 50.0, 100.0, 150.0, 200.0}},
      {"location_normal", OutputDistribution::location(BaseDensity::Normal, 2.0), {-5.0, 0.0, 5.0, 10.0, 20.0}},
      {"location_logistic", OutputDistribution::location(BaseDensity::Logistic, 3.0), {-5.0, 0.0, 5.0, 10.0, 20.0}},
      {"scale_exponential", OutputDistribution::scale_family(BaseDensity::Exponential, 1.0), {0.5, 1.0, 2.0, 5.0, 10.0}},
      {"scale_normal", OutputDistribution::scale_family(BaseDensity::Normal, 1.0), {0.5, 1.0, 2.0, 5.0, 10.0}},
      {"scale_logistic", OutputDistribution::scale_family(BaseDensity::Logistic, 2.0), {0.5, 1.0, 2.0, 5.0, 10.0}},
  };
}

}  // namespace fixture
