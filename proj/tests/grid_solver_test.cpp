#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "moralhazard/active_set_solver.hpp"
#include "moralhazard/grid_solver.hpp"
#include "moralhazard/relaxed_solver.hpp"

using namespace moralhazard;

namespace {

// Lagrangian of the discretized program at a given utility vector:
// Σ k(vⱼ) pⱼ − y_IR (Σ vⱼ pⱼ − c(a0) − Ū) − Σᵢ yᵢ (Σ vⱼ (pⱼ − qᵢⱼ) − c(a0) + c(aᵢ)).
double grid_lagrangian(const GridSolution& g, const ProblemSpec& p, const std::vector<double>& v) {
  const OutcomeGrid og{g.y_grid, g.weights};
  const double c0 = p.cost().value(p.a0);
  double obj = 0.0, ir = -(c0 + p.reservation_utility);
  for (std::size_t j = 0; j < v.size(); ++j) {
    obj += g.masses[j] * p.utility().k(v[j]);
    ir += g.masses[j] * v[j];
  }
  double out = obj - g.ir_multiplier * ir;
  for (std::size_t i = 0; i < g.a_grid.size(); ++i) {
    if (g.gic_multipliers[i] == 0.0) continue;
    const auto q = detail::grid_masses(p.dist(), og, g.a_grid[i]);
    double res = -(c0 - p.cost().value(g.a_grid[i]));
    for (std::size_t j = 0; j < v.size(); ++j) res += (g.masses[j] - q[j]) * v[j];
    out -= g.gic_multipliers[i] * res;
  }
  return out;
}

}  // namespace

TEST(OutcomeGrid, ContinuousTrapezoidCoversEnvelope) {
  const auto p = fixture::gaussian_log();
  const auto g = outcome_grid(p, 201);
  ASSERT_EQ(g.y.size(), 201u);
  EXPECT_LE(g.y.front(), p.a_min - 7 * 50.0);
  EXPECT_GE(g.y.back(), p.a_max + 7 * 50.0);
  const double h = g.y[1] - g.y[0];
  EXPECT_NEAR(g.weights.front(), 0.5 * h, 1e-9);
  EXPECT_NEAR(g.weights[100], h, 1e-9);
  EXPECT_NEAR(std::accumulate(g.weights.begin(), g.weights.end(), 0.0), g.y.back() - g.y.front(), 1e-8);
}

TEST(OutcomeGrid, LatticeUsesEveryPoint) {
  const auto g = outcome_grid(fixture::binomial_log(4.2), 201);
  ASSERT_EQ(g.y.size(), 51u);
  for (std::size_t k = 0; k < g.y.size(); ++k) {
    EXPECT_EQ(g.y[k], static_cast<double>(k));
    EXPECT_EQ(g.weights[k], 1.0);
  }
}

TEST(ActionGrid, ContainsIntendedActionExactly) {
  const auto p = fixture::gaussian_log();
  const auto a = action_grid(p, 200);
  ASSERT_EQ(a.size(), 200u);
  EXPECT_EQ(std::count(a.begin(), a.end(), p.a0), 1);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(a.front(), p.a_min);
  EXPECT_EQ(a.back(), p.a_max);
}

TEST(SolveGrid, SingleActionGridGivesFullInsurance) {
  const auto p = fixture::gaussian_log(fixture::kGaussianHighU);
  const auto g = solve_grid(p, 201, std::vector<double>{p.a0});
  const double target = p.reservation_utility + p.cost().value(p.a0);
  // Utilities are pinned down in proportion to their mass, so the check
  // covers the high-density body.
  const auto body = g.stable_mask(1e-3);
  for (std::size_t j = 0; j < g.v_values.size(); ++j) {
    if (body[j]) EXPECT_NEAR(g.v_values[j], target, 1e-6) << "y=" << g.y_grid[j];
  }
  EXPECT_NEAR(g.expected_wage, p.utility().k(target), 1e-6);
  EXPECT_TRUE(g.binding_actions.empty());
}

TEST(SolveGrid, FeasibilityAndKkt) {
  for (const auto& p : {fixture::gaussian_log(fixture::kGaussianLowU), fixture::gaussian_log(fixture::kGaussianHighU),
                        fixture::poisson_log(4.2), fixture::binomial_log(4.2), fixture::gamma_log(4.3)}) {
    SCOPED_TRACE(std::string(to_string(p.dist().family)) + " " + std::to_string(p.reservation_utility));
    const auto g = solve_grid(p, 201, 200);
    const double u0 = p.utility().u0();
    EXPECT_LE(g.kkt_residual, p.tol.kkt_tol);
    EXPECT_TRUE(std::all_of(g.v_values.begin(), g.v_values.end(), [&](double v) { return v >= u0; }));
    EXPECT_GE(g.ir_residual, -p.tol.kkt_tol);
    for (std::size_t i = 0; i < g.a_grid.size(); ++i) {
      EXPECT_GE(g.gic_residuals[i], -p.tol.kkt_tol) << "a=" << g.a_grid[i];
      EXPECT_LE(std::abs(g.gic_multipliers[i] * g.gic_residuals[i]), p.tol.kkt_tol);
    }
    EXPECT_LE(std::abs(g.ir_multiplier * g.ir_residual), p.tol.kkt_tol);
  }
}

TEST(SolveGrid, LowUtilityBindsIncentivesAtLowAction) {
  const auto p = fixture::gaussian_log(fixture::kGaussianLowU);
  const auto g = solve_grid(p, 201, 200);
  ASSERT_FALSE(g.binding_actions.empty());
  EXPECT_TRUE(std::any_of(g.binding_actions.begin(), g.binding_actions.end(), [](double a) { return a < 30.0; }));
}

TEST(SolveGrid, RefiningOutcomeGridChangesLittle) {
  const auto p = fixture::gaussian_log();
  const double w201 = solve_grid(p, 201, 200).expected_wage;
  const double w401 = solve_grid(p, 401, 200).expected_wage;
  EXPECT_LE(std::abs(w401 - w201) / w201, 1e-3);
}

TEST(SolveGrid, MidSupportTracksRelaxedContract) {
  // Within one σ of a0 the tabulated utilities follow the relaxed canonical
  // contract; the gap is set by the action spacing and halves when it does.
  const auto p = fixture::gaussian_log(fixture::kGaussianHighU);
  const auto c = solve_relaxed(p).contract;
  auto gap = [&](int n_a) {
    const auto g = solve_grid(p, 201, n_a);
    double worst = 0.0;
    for (std::size_t j = 0; j < g.y_grid.size(); ++j) {
      if (std::abs(g.y_grid[j] - p.a0) <= 50.0) worst = std::max(worst, std::abs(g.v_values[j] - c.utility(g.y_grid[j])));
    }
    return worst;
  };
  const double g200 = gap(200), g400 = gap(400);
  EXPECT_LE(g200, 2.5e-3);
  EXPECT_LE(g400, 1e-3);
  EXPECT_LT(g400, g200);
}

TEST(SolveGrid, StabilityMaskIsTheTwoTails) {
  const auto g = solve_grid(fixture::gaussian_log(), 201, 200);
  const auto mask = g.stable_mask();
  const auto first = std::find(mask.begin(), mask.end(), true);
  const auto last = std::find(mask.rbegin(), mask.rend(), true).base();
  ASSERT_NE(first, mask.end());
  EXPECT_NE(first, mask.begin());
  EXPECT_NE(last, mask.end());
  EXPECT_TRUE(std::all_of(first, last, [](bool b) { return b; }));
  const double max_f = *std::max_element(g.density.begin(), g.density.end());
  for (std::size_t j = 0; j < mask.size(); ++j) EXPECT_EQ(mask[j], g.density[j] >= 1e-8 * max_f);
}

TEST(SolveGrid, InfeasibleWhenUtilityBoundedAbove) {
  const auto p = fixture::make(OutputDistribution::gaussian(50.0), Utility::cara(1.0, 0.0), Cost{1.0 / 30000.0, 2.0},
                               100.0, 0.0, 200.0, 0.5);
  try {
    solve_grid(p, 201, 200);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
  }
}

TEST(SolveGrid, RejectsSmallGrids) {
  const auto p = fixture::gaussian_log();
  EXPECT_THROW(solve_grid(p, 50, 200), Error);
  EXPECT_THROW(solve_grid(p, 201, 19), Error);
  EXPECT_THROW(solve_grid(p, 201, std::vector<double>{50.0}), Error);
}

// Weak duality: the grid optimum is below the Lagrangian at any utility
// vector, in particular the active-set contract sampled onto the grid.
TEST(SolveGridProperty, WeakDualityAgainstActiveSetContract) {
  for (double u_bar : {fixture::kGaussianLowU, 4.2, fixture::kGaussianHighU}) {
    const auto p = fixture::gaussian_log(u_bar);
    const auto g = solve_grid(p, 201, 200);
    const auto a = solve(p);
    std::vector<double> v(g.y_grid.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = a.contract.utility(g.y_grid[j]);
    EXPECT_LE(g.expected_wage, grid_lagrangian(g, p, v) + p.tol.kkt_tol * (1.0 + g.expected_wage)) << u_bar;
    EXPECT_NEAR(grid_lagrangian(g, p, g.v_values), g.expected_wage, 1e-6 * (1.0 + g.expected_wage));
  }
}

TEST(GridCanonicalContract, ReproducesGridCost) {
  const auto p = fixture::gaussian_log(fixture::kGaussianLowU);
  const auto g = solve_grid(p, 201, 200);
  const auto c = grid_canonical_contract(g, p);
  EXPECT_EQ(c.mu(), 0.0);
  EXPECT_FALSE(c.deviations().empty());
  EXPECT_LE(std::abs(expected_wage(c, p.a0) - g.expected_wage) / g.expected_wage, 1e-2);
}
