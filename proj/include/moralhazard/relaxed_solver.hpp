#pragma once

// The relaxed problem (IR and local IC only): μ̃(λ) from the local-IC root,
// λ*(Ū) from the participation root, and Pareto-frontier sweeps.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "moralhazard/contracts.hpp"
#include "moralhazard/distributions.hpp"
#include "moralhazard/error.hpp"
#include "moralhazard/numerics.hpp"
#include "moralhazard/problem.hpp"

namespace moralhazard {

struct RelaxedSolution {
  double lambda_star;
  double mu_star;
  CanonicalContract contract;
  double expected_wage;
  double achieved_utility;
  bool ir_binding;
};

/// E[S(Y|a0)² | a0], the Fisher information at the intended action.
inline double fisher_information(const ProblemSpec& p) {
  const auto& d = p.dist();
  return expectation(
      d, p.a0,
      [&](double y) {
        const double s = detail::score_terms_unchecked(d, y, p.a0).first;
        return s * s;
      },
      p.tol);
}

/// Starting multipliers from the large-Ū approximation g(λ) ≈ c(a0) + Ū and
/// μ g′(λ) ∫ S² f ≈ c′(a0).
struct MultiplierSeed {
  double lambda;
  double mu;
};

inline MultiplierSeed initial_multipliers(const ProblemSpec& p) {
  const Utility& u = p.utility();
  const double target = p.reservation_utility + p.cost().value(p.a0);
  if (target >= u.u_sup()) {
    fail(ErrorKind::Infeasible, "reservation utility exceeds what any wage can deliver");
  }
  const double lambda = target <= u.u0() ? u.kink() : u.k_prime(target);
  const double slope = u.link_g_prime(std::max(lambda, u.kink()));
  const double mu = p.cost().d1(p.a0) / (slope * fisher_information(p));
  return {lambda, mu};
}

/// Contract g(λ + μ S(y|a0)) for the instance.
inline CanonicalContract relaxed_contract(const ProblemSpec& p, double lambda, double mu) {
  return CanonicalContract(p.model, p.a0, lambda, mu);
}

/// μ̃(λ): the μ > 0 with U_a(g(λ + μS), a0) = 0. U_a is nondecreasing in μ.
inline double lic_mu(const ProblemSpec& p, double lambda, std::optional<double> mu_seed = std::nullopt) {
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and nonnegative");
  double seed = 0.0;
  if (mu_seed && *mu_seed > 0.0) {
    seed = *mu_seed;
  } else {
    const Utility& u = p.utility();
    seed = p.cost().d1(p.a0) / (u.link_g_prime(std::max(lambda, u.kink())) * fisher_information(p));
  }
  const Tolerances inner = p.tol.with_root_tol(0.1 * p.tol.root_tol);
  auto u_a = [&](double mu) { return agent_utility_profile(relaxed_contract(p, lambda, mu), p.a0, inner).U_a; };
  try {
    return find_root_monotone(u_a, seed, Direction::Increasing, inner, Interval::continuous(0.0, kInf));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NoBracket) {
      fail(ErrorKind::NoBracket, "local IC cannot be met at lambda=" + std::to_string(lambda) +
                                     " (U_a stays negative for all tested mu)");
    }
    throw;
  }
}

/// Ũ(λ) = U(g(λ + μ̃(λ) S), a0).
inline double relaxed_utility(const ProblemSpec& p, double lambda, std::optional<double> mu_seed = std::nullopt) {
  const double mu = lic_mu(p, lambda, mu_seed);
  return agent_utility(relaxed_contract(p, lambda, mu), p.a0, p.tol);
}

struct RelaxedOptions {
  std::optional<double> lambda_seed;
  std::optional<double> mu_seed;
};

inline RelaxedSolution solve_relaxed(const ProblemSpec& p, const RelaxedOptions& options = {}) {
  p.validate();
  const Utility& u = p.utility();
  const double u_bar = p.reservation_utility;
  const double c0 = p.cost().value(p.a0);
  if (u_bar + c0 >= u.u_sup()) {
    fail(ErrorKind::Infeasible, "reservation utility " + std::to_string(u_bar) + " is not attainable");
  }

  // Warm μ across outer iterations: successive λ probes are close.
  std::optional<double> mu_warm = options.mu_seed;
  auto solve_at = [&](double lambda) {
    const double mu = lic_mu(p, lambda, mu_warm);
    mu_warm = mu;
    const CanonicalContract c = relaxed_contract(p, lambda, mu);
    return std::pair<double, double>{mu, agent_utility(c, p.a0, p.tol)};
  };

  auto [mu0, u_at_zero] = solve_at(0.0);
  double lambda_star = 0.0, mu_star = mu0, achieved = u_at_zero;
  bool binding = false;
  if (u_at_zero < u_bar) {
    binding = true;
    double seed = options.lambda_seed.value_or(initial_multipliers(p).lambda);
    if (!(seed > 0.0)) seed = u.kink();
    auto gap = [&](double lambda) { return solve_at(lambda).second - u_bar; };
    try {
      lambda_star = find_root_monotone(gap, seed, Direction::Increasing, p.tol, Interval::continuous(0.0, kInf));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NoBracket && std::isfinite(u.u_sup())) {
        fail(ErrorKind::Infeasible, "no multiplier attains reservation utility " + std::to_string(u_bar));
      }
      throw;
    }
    std::tie(mu_star, achieved) = solve_at(lambda_star);
  }
  CanonicalContract contract = relaxed_contract(p, lambda_star, mu_star);
  const double wage = expected_wage(contract, p.a0, p.tol);
  return {lambda_star, mu_star, std::move(contract), wage, achieved, binding};
}

struct FrontierPoint {
  double reservation_utility;
  bool feasible;
  double expected_wage;  // NaN when infeasible
  double lambda;
  double mu;
  bool ir_binding;
  std::string error;  // reason when infeasible
};

/// One relaxed solve per reservation utility (ascending), warm-starting λ*
/// and μ* from the previous point. Infeasible points are kept as markers.
inline std::vector<FrontierPoint> pareto_frontier(const ProblemSpec& p, const std::vector<double>& utility_grid) {
  for (std::size_t i = 1; i < utility_grid.size(); ++i) {
    require(utility_grid[i] >= utility_grid[i - 1], "utility grid must be sorted ascending");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<FrontierPoint> out;
  RelaxedOptions warm;
  for (double u_bar : utility_grid) {
    try {
      const RelaxedSolution s = solve_relaxed(p.with_reservation_utility(u_bar), warm);
      out.push_back({u_bar, true, s.expected_wage, s.lambda_star, s.mu_star, s.ir_binding, {}});
      if (s.lambda_star > 0.0) warm.lambda_seed = s.lambda_star;
      warm.mu_seed = s.mu_star;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Infeasible) throw;
      out.push_back({u_bar, false, nan, nan, nan, false, e.what()});
    }
  }
  return out;
}

}  // namespace moralhazard
