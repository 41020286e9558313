#pragma once

// Full cost minimization by dual ascent over (λ, μ, μ̂) with global incentive
// constraints added one deviation at a time, an outcome cache for fast dual
// calls, an exact Newton polish, and the grid program as fallback.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moralhazard/contracts.hpp"
#include "moralhazard/distributions.hpp"
#include "moralhazard/error.hpp"
#include "moralhazard/grid_solver.hpp"
#include "moralhazard/numerics.hpp"
#include "moralhazard/problem.hpp"
#include "moralhazard/relaxed_solver.hpp"
#include "moralhazard/validator.hpp"

namespace moralhazard {

inline constexpr double kCacheTail = 1e-12;

struct OutcomeCache {
  Eigen::VectorXd y;
  Eigen::VectorXd weights;
  Eigen::VectorXd f0;      // f(y|a0)
  Eigen::VectorXd log_f0;
  Eigen::VectorXd score;   // S(y|a0)
  Eigen::VectorXd mass;    // weights · f0
  std::vector<double> deviation_actions;
  std::vector<Eigen::VectorXd> ratio_rows;  // 1 − f(y|â)/f(y|a0)

  Eigen::Index size() const { return y.size(); }

  void add_deviation(const OutputDistribution& d, double a_hat) {
    Eigen::VectorXd row(size());
    for (Eigen::Index j = 0; j < size(); ++j) {
      const double l = detail::log_density_unchecked(d, y[j], a_hat);
      row[j] = 1.0 - CanonicalContract::log_ratio_exp(l - log_f0[j]);
    }
    deviation_actions.push_back(a_hat);
    ratio_rows.push_back(std::move(row));
  }
};

/// Outcome nodes for the dual: composite Gauss–Legendre panels on the
/// quadrature partition of the action envelope (continuous families), or the
/// truncated lattice itself.
inline OutcomeCache build_cache(const ProblemSpec& p, int n_grid) {
  require(n_grid >= 51, "outcome cache needs at least 51 points");
  const auto& d = p.dist();
  const std::array<double, 3> acts{p.a_min, p.a0, p.a_max};
  const IntegrationWindow w = integration_window(d, acts, kCacheTail);
  std::vector<double> ys, ws;
  if (w.range.discrete()) {
    const std::size_t n = w.range.lattice_size();
    for (std::size_t k = 0; k < n; ++k) {
      ys.push_back(w.range.lo + static_cast<double>(k) * *w.range.step);
      ws.push_back(*w.range.step);
    }
  } else {
    std::vector<double> edges{w.range.lo};
    edges.insert(edges.end(), w.breaks.begin(), w.breaks.end());
    edges.push_back(w.range.hi);
    const int panels = static_cast<int>(edges.size()) - 1;
    const int per_panel = std::max(12, (n_grid + panels - 1) / panels);
    const QuadratureRule rule = gauss_legendre(per_panel);
    for (int i = 0; i < panels; ++i) {
      const double c = 0.5 * (edges[i] + edges[i + 1]), h = 0.5 * (edges[i + 1] - edges[i]);
      for (int k = 0; k < per_panel; ++k) {
        ys.push_back(c + h * rule.nodes[k]);
        ws.push_back(h * rule.weights[k]);
      }
    }
  }
  OutcomeCache cache;
  const Eigen::Index n = static_cast<Eigen::Index>(ys.size());
  cache.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  cache.weights = Eigen::Map<Eigen::VectorXd>(ws.data(), n);
  cache.f0.resize(n);
  cache.log_f0.resize(n);
  cache.score.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    cache.log_f0[j] = detail::log_density_unchecked(d, cache.y[j], p.a0);
    cache.f0[j] = std::exp(cache.log_f0[j]);
    cache.score[j] = detail::score_terms_unchecked(d, cache.y[j], p.a0).first;
  }
  cache.mass = cache.weights.cwiseProduct(cache.f0);
  return cache;
}

struct DualEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;  // filled by the exact evaluation only
};

namespace detail {

// x = (λ, μ, μ̂₁, …, μ̂ₖ); bounds λ ≥ 0, μ free, μ̂ ≥ 0.
inline Eigen::VectorXd dual_lower(std::size_t k) {
  Eigen::VectorXd lower = Eigen::VectorXd::Zero(2 + static_cast<Eigen::Index>(k));
  lower[1] = -kInf;
  return lower;
}

// Constant terms of the Lagrangian: λ(Ū + c(a0)) + μ c′(a0) + Σ μ̂ᵢ (c(a0) − c(âᵢ)).
inline double dual_constant(const ProblemSpec& p, const Eigen::VectorXd& x, std::span<const double> devs) {
  const double c0 = p.cost().value(p.a0);
  double out = x[0] * (p.reservation_utility + c0) + x[1] * p.cost().d1(p.a0);
  for (std::size_t i = 0; i < devs.size(); ++i) out += x[2 + i] * (c0 - p.cost().value(devs[i]));
  return out;
}

inline DualEval cache_dual(const OutcomeCache& cache, const ProblemSpec& p, const Eigen::VectorXd& x) {
  const Utility& u = p.utility();
  const std::size_t k = cache.ratio_rows.size();
  Eigen::VectorXd z = Eigen::VectorXd::Constant(cache.size(), x[0]) + x[1] * cache.score;
  for (std::size_t i = 0; i < k; ++i) z += x[2 + i] * cache.ratio_rows[i];
  double inner = 0.0;
  Eigen::VectorXd vm(cache.size());
  for (Eigen::Index j = 0; j < cache.size(); ++j) {
    const double v = u.link_g(z[j]);
    inner += cache.mass[j] * (u.wage_of_marginal(z[j]) - z[j] * v);
    vm[j] = v * cache.mass[j];
  }
  const double c0 = p.cost().value(p.a0);
  DualEval e;
  e.value = inner + dual_constant(p, x, cache.deviation_actions);
  e.grad.resize(2 + static_cast<Eigen::Index>(k));
  e.grad[0] = p.reservation_utility + c0 - vm.sum();
  e.grad[1] = p.cost().d1(p.a0) - vm.dot(cache.score);
  for (std::size_t i = 0; i < k; ++i) {
    e.grad[2 + i] = c0 - p.cost().value(cache.deviation_actions[i]) - vm.dot(cache.ratio_rows[i]);
  }
  return e;
}

inline CanonicalContract dual_contract(const ProblemSpec& p, const Eigen::VectorXd& x, std::span<const double> devs) {
  std::vector<Deviation> d;
  for (std::size_t i = 0; i < devs.size(); ++i) d.push_back({devs[i], x[2 + i]});
  return CanonicalContract(p.model, p.a0, x[0], x[1], std::move(d), devs);
}

// Dual value, gradient and Hessian −∫ g′(z) e eᵀ f0 with e = (1, S0, 1 − fᵢ/f0),
// all from one adaptive quadrature.
inline DualEval exact_dual(const ProblemSpec& p, const Eigen::VectorXd& x, std::span<const double> devs) {
  const Model& m = p.model;
  const Utility& u = m.utility;
  const auto& d = m.dist;
  const int k = static_cast<int>(devs.size());
  const int dim = 2 + k;
  const int n_out = 1 + dim + dim * (dim + 1) / 2;
  const CanonicalContract c = dual_contract(p, x, devs);
  const double a0 = p.a0;

  std::vector<double> acts{a0};
  acts.insert(acts.end(), devs.begin(), devs.end());
  IntegrationWindow w = integration_window(d, acts);
  w.breaks.insert(w.breaks.end(), c.kinks().begin(), c.kinks().end());

  Eigen::VectorXd e(dim), ef(dim);
  auto integrand = [&](double y) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_out);
    const double l0 = detail::log_density_unchecked(d, y, a0);
    const double f0 = std::exp(l0);
    const double s0 = detail::score_terms_unchecked(d, y, a0).first;
    e[0] = 1.0;
    e[1] = s0;
    ef[0] = f0;
    ef[1] = s0 * f0;
    double zf = (x[0] + x[1] * s0) * f0;
    double z = x[0] + x[1] * s0;
    for (int i = 0; i < k; ++i) {
      const double li = detail::log_density_unchecked(d, y, devs[i]);
      const double fi = std::exp(li);
      e[2 + i] = 1.0 - CanonicalContract::log_ratio_exp(li - l0);
      ef[2 + i] = f0 - fi;
      zf += x[2 + i] * ef[2 + i];
      z += x[2 + i] * e[2 + i];
    }
    const double v = u.link_g(z);
    out[0] = u.wage_of_marginal(z) * f0 - v * zf;
    out.segment(1, dim) = v * ef;
    const double gp = u.link_g_prime(z);
    if (gp > 0.0) {
      int idx = 1 + dim;
      for (int a = 0; a < dim; ++a) {
        for (int b = a; b < dim; ++b) out[idx++] = gp * ef[a] * e[b];
      }
    }
    return out;
  };
  const Eigen::VectorXd r = integrate(integrand, w.range, p.tol, w.breaks);

  const double c0 = p.cost().value(a0);
  DualEval out;
  out.value = r[0] + dual_constant(p, x, devs);
  out.grad.resize(dim);
  out.grad[0] = p.reservation_utility + c0 - r[1];
  out.grad[1] = p.cost().d1(a0) - r[2];
  for (int i = 0; i < k; ++i) out.grad[2 + i] = c0 - p.cost().value(devs[i]) - r[3 + i];
  out.hess.resize(dim, dim);
  int idx = 1 + dim;
  for (int a = 0; a < dim; ++a) {
    for (int b = a; b < dim; ++b) out.hess(a, b) = out.hess(b, a) = -r[idx++];
  }
  return out;
}

inline double projected_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lower) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool at_bound = std::isfinite(lower[i]) && x[i] <= lower[i];
    worst = std::max(worst, at_bound ? std::max(g[i], 0.0) : std::abs(g[i]));
  }
  return worst;
}

// Projected Newton ascent on the exact dual until every free gradient
// component is within root_tol.
inline Eigen::VectorXd newton_polish(const ProblemSpec& p, Eigen::VectorXd x, std::span<const double> devs) {
  const Eigen::VectorXd lower = dual_lower(devs.size());
  x = x.cwiseMax(lower);
  DualEval e = exact_dual(p, x, devs);
  double res = projected_residual(x, e.grad, lower);
  constexpr int kMaxIter = 60;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    if (res <= p.tol.root_tol) return x;
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(std::isfinite(lower[i]) && x[i] <= lower[i] && e.grad[i] <= 0.0)) free.push_back(i);
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd H(nf, nf);
    Eigen::VectorXd g(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      g[a] = e.grad[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) H(a, b) = -e.hess(free[a], free[b]);
    }
    // Small Levenberg shift keeps the system solvable when the contract sits
    // on the floor over most of the support.
    const double shift = 1e-12 * std::max(H.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    H.diagonal().array() += shift;
    const Eigen::VectorXd step_f = H.ldlt().solve(g);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(x.size());
    for (Eigen::Index a = 0; a < nf; ++a) step[free[a]] = step_f[a];
    if (!step.allFinite()) fail(ErrorKind::NoConvergence, "dual Newton step is not finite");

    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      const Eigen::VectorXd x_new = (x + t * step).cwiseMax(lower);
      DualEval e_new;
      try {
        e_new = exact_dual(p, x_new, devs);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::NonFinite && err.kind() != ErrorKind::NoConvergence) throw;
        continue;
      }
      const double res_new = projected_residual(x_new, e_new.grad, lower);
      const double ascent = e.grad.dot(x_new - x);
      if (e_new.value >= e.value + 1e-4 * ascent || res_new < (1.0 - 1e-4 * t) * res) {
        x = x_new;
        e = std::move(e_new);
        res = res_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (res <= p.tol.root_tol) return x;
  fail(ErrorKind::NoConvergence, "dual Newton polish stopped at gradient residual " + std::to_string(res));
}

}  // namespace detail

/// L(λ, μ, μ̂) on the cache at its inner-minimizing contract, and its gradient
/// (Ū − U(v,a0), −U_a(v,a0), U(v,âᵢ) − U(v,a0)).
inline DualEval dual_value_grad(const OutcomeCache& cache, const ProblemSpec& p, double lambda, double mu,
                                std::span<const double> mu_hat) {
  require(lambda >= 0.0, "lambda must be nonnegative");
  require(mu_hat.size() == cache.ratio_rows.size(), "one deviation multiplier per cached deviation");
  Eigen::VectorXd x(2 + static_cast<Eigen::Index>(mu_hat.size()));
  x[0] = lambda;
  x[1] = mu;
  for (std::size_t i = 0; i < mu_hat.size(); ++i) {
    require(mu_hat[i] >= 0.0, "deviation multipliers must be nonnegative");
    x[2 + i] = mu_hat[i];
  }
  return detail::cache_dual(cache, p, x);
}

struct BestDeviation {
  double a_hat;
  double gain;  // U(v, â) − U(v, a0)
};

/// Grid search over the action interval with golden refinement of the best
/// bracket.
inline BestDeviation find_best_deviation(const CanonicalContract& c, const ProblemSpec& p) {
  auto value = [&](double a) { return agent_utility(c, a, p.tol); };
  const ScalarMax m = maximize_scalar(value, p.actions(), p.grids.deviation_grid, p.tol);
  return {m.argmax, m.max - value(p.a0)};
}

enum class Provenance { ActiveSetFirstIteration, ActiveSetMultiIteration, GridFallback };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::ActiveSetFirstIteration: return "ActiveSetFirstIteration";
    case Provenance::ActiveSetMultiIteration: return "ActiveSetMultiIteration";
    case Provenance::GridFallback: return "GridFallback";
  }
  return "Unknown";
}

struct SolveResult {
  CanonicalContract contract;
  double expected_wage;
  double lambda;
  double mu;
  std::vector<double> mu_hat;
  std::vector<double> deviations_added;
  FoaReport foa_report;
  Provenance provenance;
  std::chrono::duration<double, std::milli> wall_time;
  int iterations = 0;
  double dual_value = 0.0;
  double ir_residual = 0.0;   // U(v, a0) − Ū
  double lic_residual = 0.0;  // U_a(v, a0)
  std::string fallback_reason;
  std::optional<GridSolution> grid;
};

struct SolveOptions {
  std::optional<double> lambda_seed;
  std::optional<double> mu_seed;
};

namespace detail {

inline SolveResult finish_result(const ProblemSpec& p, CanonicalContract contract, const Eigen::VectorXd& x,
                                 std::vector<double> devs, FoaReport report, Provenance prov, int iterations,
                                 std::chrono::steady_clock::time_point start) {
  const UtilityProfile prof = agent_utility_profile(contract, p.a0, p.tol);
  const double wage = expected_wage(contract, p.a0, p.tol);
  std::vector<double> mu_hat(x.data() + 2, x.data() + x.size());
  double dual = kInf;
  try {
    dual = exact_dual(p, x, devs).value;
  } catch (const Error&) {
  }
  SolveResult r{std::move(contract),
                wage,
                x[0],
                x[1],
                std::move(mu_hat),
                std::move(devs),
                std::move(report),
                prov,
                std::chrono::steady_clock::now() - start,
                iterations,
                dual,
                prof.U - p.reservation_utility,
                prof.U_a,
                {},
                std::nullopt};
  return r;
}

// Maximize the cached dual from `x0`, then polish on exact quadrature.
// Perturbed restarts cover the nonconvex cases before giving up.
inline Eigen::VectorXd maximize_dual(const OutcomeCache& cache, const ProblemSpec& p, const Eigen::VectorXd& x0,
                                     std::span<const double> devs, std::string& failure) {
  const Eigen::VectorXd lower = dual_lower(devs.size());
  Tolerances cache_tol = p.tol;
  cache_tol.grad_tol = std::max(p.tol.grad_tol, 1e-8);
  const std::array<std::array<double, 2>, 3> perturb{{{1.0, 1.0}, {1.5, 0.7}, {0.7, 1.5}}};
  for (const auto& [fl, fm] : perturb) {
    Eigen::VectorXd init = x0;
    init[0] *= fl;
    init[1] *= fm;
    for (Eigen::Index i = 2; i < init.size(); ++i) init[i] *= fm;
    try {
      auto vg = [&](const Eigen::VectorXd& x) {
        DualEval e = cache_dual(cache, p, x);
        return std::pair<double, Eigen::VectorXd>{e.value, std::move(e.grad)};
      };
      BoxMaxOptions opts;
      opts.max_iterations = 2000;
      const BoxMaxResult r = maximize_box(vg, lower, init, cache_tol, opts);
      return newton_polish(p, r.x, devs);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence && e.kind() != ErrorKind::NonFinite) throw;
      failure = e.what();
    }
  }
  fail(ErrorKind::NoConvergence, "dual maximization failed from every start: " + failure);
}

inline SolveResult grid_fallback(const ProblemSpec& p, const std::string& reason, int iterations,
                                 std::chrono::steady_clock::time_point start) {
  GridSolution g;
  try {
    g = solve_grid(p, p.grids.n_outcome, p.grids.n_action);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Infeasible) throw;
    fail(ErrorKind::GridFallbackFailed, "active set: " + reason + "; grid: " + e.what());
  }
  CanonicalContract c = grid_canonical_contract(g, p);
  Eigen::VectorXd x(2 + static_cast<Eigen::Index>(c.deviations().size()));
  x[0] = c.lambda();
  x[1] = c.mu();
  std::vector<double> devs;
  for (std::size_t i = 0; i < c.deviations().size(); ++i) {
    x[2 + i] = c.deviations()[i].mu_hat;
    devs.push_back(c.deviations()[i].a_hat);
  }
  FoaReport report = validate_foa(c, p);
  SolveResult r =
      finish_result(p, std::move(c), x, std::move(devs), std::move(report), Provenance::GridFallback, iterations, start);
  r.fallback_reason = reason;
  r.grid = std::move(g);
  r.wall_time = std::chrono::steady_clock::now() - start;
  return r;
}

}  // namespace detail

/// Active-set loop: maximize the dual over the current deviation set, find
/// the agent's best deviation from the resulting contract, add it as a
/// constraint, and repeat until no action gains more than deviation_tol.
inline SolveResult solve(const ProblemSpec& p, const SolveOptions& options = {}) {
  const auto start = std::chrono::steady_clock::now();
  p.validate();
  const MultiplierSeed seed = initial_multipliers(p);
  Eigen::VectorXd x(2);
  x[0] = options.lambda_seed.value_or(seed.lambda);
  x[1] = options.mu_seed.value_or(seed.mu);
  require(x[0] >= 0.0 && std::isfinite(x[0]) && std::isfinite(x[1]), "multiplier seeds must be finite, lambda >= 0");

  OutcomeCache cache = build_cache(p, p.grids.cache_points);
  std::vector<double> devs;
  const double radius = p.tol.root_tol * (1.0 + std::abs(p.a0));
  for (int iter = 1;; ++iter) {
    std::string failure;
    try {
      x = detail::maximize_dual(cache, p, x, devs, failure);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence) throw;
      return detail::grid_fallback(p, e.what(), iter, start);
    }
    CanonicalContract contract = detail::dual_contract(p, x, devs);
    BestDeviation best = find_best_deviation(contract, p);
    if (best.gain <= p.tol.deviation_tol) {
      FoaReport report = validate_foa(contract, p);
      if (report.valid) {
        const Provenance prov =
            devs.empty() && iter == 1 ? Provenance::ActiveSetFirstIteration : Provenance::ActiveSetMultiIteration;
        return detail::finish_result(p, std::move(contract), x, devs, std::move(report), prov, iter, start);
      }
      best = {report.best_action, report.max_gain};
    }
    if (static_cast<int>(devs.size()) >= p.grids.max_deviations) {
      return detail::grid_fallback(p, "deviation limit reached", iter, start);
    }
    const bool repeated = std::any_of(devs.begin(), devs.end(), [&](double a) { return std::abs(a - best.a_hat) <= radius; }) ||
                          std::abs(best.a_hat - p.a0) <= radius;
    if (repeated) {
      return detail::grid_fallback(p, "deviation search returned an action already in the active set", iter, start);
    }
    devs.push_back(best.a_hat);
    cache.add_deviation(p.dist(), best.a_hat);
    x.conservativeResize(x.size() + 1);
    x[x.size() - 1] = 0.0;
  }
}

struct ComparisonRow {
  double y;
  double density;  // f(y|a0)
  double wage_active;
  double wage_grid;
  double difference;  // wage_grid − wage_active
  bool stable;
};

struct SolverComparison {
  std::vector<ComparisonRow> rows;
  double wage_active;
  double wage_grid;
  double objective_gap;          // |W_grid − W_active| / W_active
  double max_stable_difference;  // over rows outside the stability mask
  double stable_wage_range;      // range of the active-set wage on those rows
  int masked_points;
  SolveResult active;
  GridSolution grid;
};

/// Solve with both methods on the grid sizes in `grids` and tabulate the two
/// wage schedules on the grid outcomes.
inline SolverComparison compare_solvers(const ProblemSpec& p, const SolverGrids& grids) {
  ProblemSpec q = p;
  q.grids = grids;
  SolveResult active = solve(q);
  GridSolution grid = solve_grid(q, grids.n_outcome, grids.n_action);
  const std::vector<bool> stable = grid.stable_mask();
  const Utility& u = q.utility();
  std::vector<ComparisonRow> rows;
  double max_diff = 0.0, lo = kInf, hi = -kInf;
  int masked = 0;
  for (std::size_t j = 0; j < grid.y_grid.size(); ++j) {
    const double wa = active.contract.wage(grid.y_grid[j]);
    const double wg = u.k(grid.v_values[j]);
    rows.push_back({grid.y_grid[j], grid.density[j], wa, wg, wg - wa, stable[j]});
    if (stable[j]) {
      max_diff = std::max(max_diff, std::abs(wg - wa));
      lo = std::min(lo, wa);
      hi = std::max(hi, wa);
    } else {
      ++masked;
    }
  }
  const double wa = active.expected_wage, wg = grid.expected_wage;
  return {std::move(rows), wa, wg, std::abs(wg - wa) / std::max(std::abs(wa), 1e-300), max_diff, hi - lo, masked,
          std::move(active), std::move(grid)};
}

}  // namespace moralhazard
