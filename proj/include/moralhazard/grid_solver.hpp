#pragma once

// The discretized convex program: contract utilities tabulated on an outcome
// grid, minimized expected wage subject to participation and one incentive
// constraint per grid action, solved by a primal-dual interior-point method.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moralhazard/contracts.hpp"
#include "moralhazard/distributions.hpp"
#include "moralhazard/error.hpp"
#include "moralhazard/numerics.hpp"
#include "moralhazard/problem.hpp"
#include "moralhazard/validator.hpp"

namespace moralhazard {

inline constexpr double kGridTail = 1e-12;
inline constexpr double kStabilityThreshold = 1e-8;

struct OutcomeGrid {
  std::vector<double> y;
  std::vector<double> weights;  // trapezoid weights; 1 on a lattice
};

/// Uniform trapezoid grid of n points spanning the quantile envelope of
/// f(·|a) over a_min, a0 and a_max. Lattice families use every lattice point.
inline OutcomeGrid outcome_grid(const ProblemSpec& p, int n) {
  const std::array<double, 3> acts{p.a_min, p.a0, p.a_max};
  Interval range = quantile_bounds(p.dist(), acts[0], 1.0 - kGridTail);
  for (double a : acts) {
    const Interval q = quantile_bounds(p.dist(), a, 1.0 - kGridTail);
    range.lo = std::min(range.lo, q.lo);
    range.hi = std::max(range.hi, q.hi);
  }
  OutcomeGrid g;
  if (range.discrete()) {
    const std::size_t m = range.lattice_size();
    for (std::size_t k = 0; k < m; ++k) {
      g.y.push_back(range.lo + static_cast<double>(k) * *range.step);
      g.weights.push_back(*range.step);
    }
    return g;
  }
  require(n >= 2, "outcome grid needs at least two points");
  const double h = range.width() / (n - 1);
  for (int j = 0; j < n; ++j) {
    g.y.push_back(j + 1 == n ? range.hi : range.lo + j * h);
    g.weights.push_back(j == 0 || j + 1 == n ? 0.5 * h : h);
  }
  return g;
}

/// n actions uniform on [a_min, a_max] with the point nearest a0 moved onto a0.
inline std::vector<double> action_grid(const ProblemSpec& p, int n) {
  std::vector<double> a = uniform_actions(p, n);
  auto nearest = std::min_element(a.begin(), a.end(),
                                  [&](double x, double y) { return std::abs(x - p.a0) < std::abs(y - p.a0); });
  *nearest = p.a0;
  return a;
}

struct GridSolution {
  std::vector<double> y_grid;
  std::vector<double> weights;
  std::vector<double> density;   // f(y|a0)
  std::vector<double> masses;    // normalized f(y|a0) w, the objective weights
  std::vector<double> v_values;  // utils
  std::vector<double> a_grid;
  double expected_wage = 0.0;
  double kkt_residual = 0.0;
  std::vector<double> binding_actions;
  double ir_multiplier = 0.0;
  std::vector<double> gic_multipliers;  // per a_grid entry; zero at a0
  double ir_residual = 0.0;             // Σ v p − c(a0) − Ū
  std::vector<double> gic_residuals;    // per a_grid entry
  int iterations = 0;

  /// f(y|a0) ≥ threshold · max f(·|a0).
  std::vector<bool> stable_mask(double threshold = kStabilityThreshold) const {
    const double peak = *std::max_element(density.begin(), density.end());
    std::vector<bool> out(density.size());
    for (std::size_t j = 0; j < density.size(); ++j) out[j] = density[j] >= threshold * peak;
    return out;
  }
};

namespace detail {

inline double grid_density(const OutputDistribution& d, double y, double a) {
  if (!in_support(d, y, a)) return 0.0;
  return std::exp(log_density_unchecked(d, y, a));
}

// f(yⱼ|a) wⱼ normalized to unit mass, so that actions whose density the grid
// resolves poorly still carry a probability vector.
inline std::vector<double> grid_masses(const OutputDistribution& d, const OutcomeGrid& g, double a) {
  std::vector<double> q(g.y.size());
  double total = 0.0;
  for (std::size_t j = 0; j < g.y.size(); ++j) total += q[j] = grid_density(d, g.y[j], a) * g.weights[j];
  require(total > 0.0, "outcome grid carries no probability mass at action " + std::to_string(a));
  for (double& v : q) v /= total;
  return q;
}

}  // namespace detail

/// Minimize Σ k(vⱼ) f(yⱼ|a0) wⱼ over v ≥ u(0) subject to the discretized
/// participation constraint and one incentive constraint per entry of
/// `actions`, which must contain a0.
inline GridSolution solve_grid(const ProblemSpec& p, int n_y, const std::vector<double>& actions) {
  p.validate();
  require(n_y >= 51, "grid solver needs n_y >= 51");
  require(std::find(actions.begin(), actions.end(), p.a0) != actions.end(), "action grid must contain a0");
  for (double a : actions) require(a >= p.a_min && a <= p.a_max, "grid actions must lie in the action interval");
  const Utility& u = p.utility();
  const OutputDistribution& d = p.dist();
  const double c0 = p.cost().value(p.a0);
  const double target = p.reservation_utility + c0;
  if (target >= u.u_sup()) {
    fail(ErrorKind::Infeasible, "reservation utility exceeds what any wage can deliver");
  }

  const OutcomeGrid og = outcome_grid(p, n_y);
  const int n_all = static_cast<int>(og.y.size());

  GridSolution sol;
  sol.y_grid = og.y;
  sol.weights = og.weights;
  sol.a_grid = actions;
  sol.density.resize(n_all);
  Eigen::VectorXd p_all(n_all);
  const std::vector<double> p_mass = detail::grid_masses(d, og, p.a0);
  for (int j = 0; j < n_all; ++j) {
    sol.density[j] = detail::grid_density(d, og.y[j], p.a0);
    p_all[j] = p_mass[j];
  }
  std::vector<std::vector<double>> q_mass(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) q_mass[i] = detail::grid_masses(d, og, actions[i]);
  sol.masses = p_mass;
  // Outcomes with no mass under a0 cost nothing and only tighten incentive
  // constraints, so they sit at the floor and leave the optimization.
  std::vector<int> var;
  for (int j = 0; j < n_all; ++j) {
    if (p_all[j] > 0.0) var.push_back(j);
  }
  const int n = static_cast<int>(var.size());
  require(n >= 2, "outcome grid carries no probability mass under a0");
  const double u0 = u.u0();

  // Rows: participation, then every action other than a0.
  std::vector<int> row_action{-1};
  for (int i = 0; i < static_cast<int>(actions.size()); ++i) {
    if (actions[i] != p.a0) row_action.push_back(i);
  }
  const int m = static_cast<int>(row_action.size());
  Eigen::MatrixXd A(m, n);
  Eigen::VectorXd b(m), row_scale(m);
  for (int r = 0; r < m; ++r) {
    double rhs = target;
    double fixed = 0.0;  // contribution of floor-pinned outcomes
    if (row_action[r] < 0) {
      for (int k = 0; k < n; ++k) A(r, k) = p_all[var[k]];
    } else {
      const double a = actions[row_action[r]];
      rhs = c0 - p.cost().value(a);
      std::size_t k = 0;
      for (int j = 0; j < n_all; ++j) {
        const double q = q_mass[row_action[r]][j];
        if (k < var.size() && var[k] == j) {
          A(r, static_cast<Eigen::Index>(k++)) = p_all[j] - q;
        } else {
          fixed += -q * u0;
        }
      }
    }
    rhs -= fixed;
    const double s = std::max(A.row(r).cwiseAbs().maxCoeff(), 1e-300);
    row_scale[r] = s;
    A.row(r) /= s;
    b[r] = rhs / s;
  }

  Eigen::VectorXd pv(n);
  for (int k = 0; k < n; ++k) pv[k] = p_all[var[k]];
  const double u_sup = u.u_sup();

  auto objective_terms = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad, Eigen::VectorXd& hess) {
    double f = 0.0;
    for (int k = 0; k < n; ++k) {
      f += pv[k] * u.k(v[k]);
      grad[k] = pv[k] * u.k_prime(v[k]);
      hess[k] = pv[k] * u.k_second(v[k]);
    }
    return f;
  };

  // Start strictly inside the floor and below any utility ceiling.
  double start = std::max(target, u0) + 1.0;
  if (std::isfinite(u_sup)) start = std::min(start, 0.5 * (std::max(target, u0) + u_sup));
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, start);
  Eigen::VectorXd x = v.array() - u0;
  Eigen::VectorXd s = (A * v - b).cwiseMax(1.0);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd grad(n), hess(n);

  const double b_norm = b.cwiseAbs().maxCoeff();
  constexpr int kMaxIter = 200;
  constexpr double kStepFraction = 0.995;
  constexpr double kMaxUtilityStep = 3.0;
  double residual = kInf;
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    objective_terms(v, grad, hess);
    const Eigen::VectorXd r_d = grad - A.transpose() * y - z;
    const Eigen::VectorXd r_p = A * v - s - b;
    const double gap = (s.dot(y) + x.dot(z)) / (m + n);
    residual = std::max({r_d.cwiseAbs().maxCoeff() / (1.0 + grad.cwiseAbs().maxCoeff()),
                         r_p.cwiseAbs().maxCoeff() / (1.0 + b_norm), gap});
    if (residual <= p.tol.kkt_tol) break;
    if (y.maxCoeff() > 1e14 || z.maxCoeff() > 1e14) {
      std::string cert;
      for (int r = 1; r < m; ++r) {
        if (y[r] > 1e-3 * y.maxCoeff()) cert += " " + std::to_string(actions[row_action[r]]);
      }
      fail(ErrorKind::Infeasible, "discretized constraints admit no contract; diverging multipliers at actions" +
                                      (cert.empty() ? std::string(" (participation)") : cert));
    }

    const Eigen::VectorXd dy_s = y.cwiseQuotient(s);
    const Eigen::VectorXd dz_x = z.cwiseQuotient(x);
    Eigen::MatrixXd K = A.transpose() * dy_s.asDiagonal() * A;
    K.diagonal() += hess + dz_x;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
    if (ldlt.info() != Eigen::Success) fail(ErrorKind::NoConvergence, "interior-point system is singular");

    auto direction = [&](const Eigen::VectorXd& r_s, const Eigen::VectorXd& r_x, Eigen::VectorXd& dv,
                         Eigen::VectorXd& ds, Eigen::VectorXd& dyv, Eigen::VectorXd& dz) {
      const Eigen::VectorXd rhs =
          -r_d - A.transpose() * (r_s + y.cwiseProduct(r_p)).cwiseQuotient(s) - r_x.cwiseQuotient(x);
      dv = ldlt.solve(rhs);
      ds = A * dv + r_p;
      dyv = -(r_s + y.cwiseProduct(ds)).cwiseQuotient(s);
      dz = -(r_x + z.cwiseProduct(dv)).cwiseQuotient(x);
    };
    auto max_step = [&](const Eigen::VectorXd& val, const Eigen::VectorXd& dval) {
      double t = 1.0;
      for (Eigen::Index i = 0; i < val.size(); ++i) {
        if (dval[i] < 0.0) t = std::min(t, -val[i] / dval[i]);
      }
      return t;
    };

    // Predictor.
    Eigen::VectorXd dv, ds, dyv, dz;
    direction(s.cwiseProduct(y), x.cwiseProduct(z), dv, ds, dyv, dz);
    const double tp_aff = std::min(max_step(x, dv), max_step(s, ds));
    const double td_aff = std::min(max_step(y, dyv), max_step(z, dz));
    const double mu_now = gap;
    const double mu_aff = ((s + tp_aff * ds).dot(y + td_aff * dyv) + (x + tp_aff * dv).dot(z + td_aff * dz)) /
                          (m + n);
    const double sigma = std::pow(std::clamp(mu_aff / mu_now, 0.0, 1.0), 3);

    // Corrector.
    const Eigen::VectorXd r_s = s.cwiseProduct(y) + ds.cwiseProduct(dyv) - Eigen::VectorXd::Constant(m, sigma * mu_now);
    const Eigen::VectorXd r_x = x.cwiseProduct(z) + dv.cwiseProduct(dz) - Eigen::VectorXd::Constant(n, sigma * mu_now);
    direction(r_s, r_x, dv, ds, dyv, dz);
    double tp = std::min(1.0, kStepFraction * std::min(max_step(x, dv), max_step(s, ds)));
    const double td = std::min(1.0, kStepFraction * std::min(max_step(y, dyv), max_step(z, dz)));
    // The exponential-type objective is poorly modelled far from v, so a
    // single step moves no utility by more than kMaxUtilityStep.
    const double dv_max = dv.cwiseAbs().maxCoeff();
    if (tp * dv_max > kMaxUtilityStep) tp = kMaxUtilityStep / dv_max;
    // Stay below the utility ceiling, where k is finite.
    for (int k = 0; k < 60; ++k) {
      const Eigen::VectorXd trial = v + tp * dv;
      if (trial.maxCoeff() < u_sup && std::isfinite(u.k(trial.maxCoeff()))) break;
      tp *= 0.5;
    }
    v += tp * dv;
    x = v.array() - u0;
    x = x.cwiseMax(1e-300);
    s += tp * ds;
    y += td * dyv;
    z += td * dz;
  }
  if (!(residual <= p.tol.kkt_tol)) {
    fail(ErrorKind::NoConvergence, "interior-point method stopped at KKT residual " + std::to_string(residual));
  }

  sol.iterations = iter;
  sol.kkt_residual = residual;
  sol.v_values.assign(n_all, u0);
  for (int k = 0; k < n; ++k) sol.v_values[var[k]] = v[k];
  sol.expected_wage = 0.0;
  for (int j = 0; j < n_all; ++j) sol.expected_wage += p_all[j] * u.k(sol.v_values[j]);

  sol.ir_multiplier = y[0] / row_scale[0];
  sol.gic_multipliers.assign(actions.size(), 0.0);
  sol.gic_residuals.assign(actions.size(), 0.0);
  double ir = -target;
  for (int j = 0; j < n_all; ++j) ir += p_all[j] * sol.v_values[j];
  sol.ir_residual = ir;
  double y_max = 0.0;
  for (int r = 1; r < m; ++r) y_max = std::max(y_max, y[r] / row_scale[r]);
  for (int r = 1; r < m; ++r) {
    const int i = row_action[r];
    const double a = actions[i];
    sol.gic_multipliers[i] = y[r] / row_scale[r];
    double res = -(c0 - p.cost().value(a));
    for (int j = 0; j < n_all; ++j) {
      res += (p_all[j] - q_mass[i][j]) * sol.v_values[j];
    }
    sol.gic_residuals[i] = res;
    if (sol.gic_multipliers[i] > 1e-6 * std::max(y_max, 1e-300) && res <= 1e-6) sol.binding_actions.push_back(a);
  }
  return sol;
}

/// Uniform action grid of n_a points with a0 in place of its nearest point.
inline GridSolution solve_grid(const ProblemSpec& p, int n_y, int n_a) {
  require(n_a >= 20, "grid solver needs n_a >= 20");
  return solve_grid(p, n_y, action_grid(p, n_a));
}

/// U(v, a) of a tabulated contract with the solver's normalized grid masses.
inline UtilityProfile grid_agent_utility_profile(const GridSolution& g, const ProblemSpec& p, double a) {
  const auto& d = p.dist();
  double total = 0.0, U = 0.0, Ua = 0.0, Uaa = 0.0;
  for (std::size_t j = 0; j < g.y_grid.size(); ++j) {
    if (!in_support(d, g.y_grid[j], a)) continue;
    const double f = std::exp(detail::log_density_unchecked(d, g.y_grid[j], a)) * g.weights[j];
    const auto [sc, t] = detail::score_terms_unchecked(d, g.y_grid[j], a);
    total += f;
    U += g.v_values[j] * f;
    Ua += g.v_values[j] * sc * f;
    Uaa += g.v_values[j] * (sc * sc + t) * f;
  }
  require(total > 0.0, "outcome grid carries no probability mass at action " + std::to_string(a));
  return {U / total - p.cost().value(a), Ua / total - p.cost().d1(a), Uaa / total - p.cost().d2(a)};
}

/// The action scan of validate_foa applied to the tabulated contract on the
/// solver's own action grid, which is the constraint set it enforces.
inline FoaReport validate_grid_solution(const GridSolution& g, const ProblemSpec& p) {
  double zero = 0.0;
  const double u0 = p.utility().u0();
  for (std::size_t j = 0; j < g.y_grid.size(); ++j) {
    if (g.v_values[j] <= u0 + 1e-9 * (1.0 + std::abs(u0))) zero += g.masses[j];
  }
  auto profile = [&](double a) { return grid_agent_utility_profile(g, p, a); };
  auto value = [&](double a) { return grid_agent_utility_profile(g, p, a).U; };
  return detail::scan_actions(profile, value, p, g.a_grid, false, std::clamp(zero, 0.0, 1.0));
}

/// The canonical contract implied by the grid multipliers:
/// k′(v) = λ + Σ_a μ_a (1 − f(y|a)/f(y|a0)) with μ = 0.
inline CanonicalContract grid_canonical_contract(const GridSolution& g, const ProblemSpec& p,
                                                 double relative_cutoff = 1e-6) {
  double y_max = 0.0;
  for (double mu : g.gic_multipliers) y_max = std::max(y_max, mu);
  std::vector<Deviation> devs;
  std::vector<double> scan;
  for (std::size_t i = 0; i < g.a_grid.size(); ++i) {
    if (g.a_grid[i] == p.a0 || g.gic_multipliers[i] <= relative_cutoff * y_max) continue;
    devs.push_back({g.a_grid[i], g.gic_multipliers[i]});
    scan.push_back(g.a_grid[i]);
  }
  return CanonicalContract(p.model, p.a0, std::max(0.0, g.ir_multiplier), 0.0, std::move(devs), scan);
}

}  // namespace moralhazard
