#pragma once

// First-order-approach diagnostics: a dense scan of the agent's utility over
// the action interval, its local maxima, concavity, and the reservation
// utility at which the relaxed contract becomes globally incentive compatible.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "moralhazard/contracts.hpp"
#include "moralhazard/error.hpp"
#include "moralhazard/numerics.hpp"
#include "moralhazard/problem.hpp"
#include "moralhazard/relaxed_solver.hpp"

namespace moralhazard {

struct LocalMax {
  double action;
  double utility;
};

struct FoaReport {
  bool valid = false;
  double best_action = 0.0;
  double max_gain = 0.0;  // U(best) − U(a0), never negative
  std::vector<LocalMax> local_maxima;
  bool concave_everywhere = false;
  double min_U_aa = 0.0;
  double max_U_aa = 0.0;
  double zero_pay_prob = 0.0;
  double intended_utility = 0.0;  // U(a0)
};

/// P(v(Y) = u(0) | a0): the threshold report where it applies, otherwise a
/// direct quadrature of the zero-pay region.
inline double zero_pay_probability(const CanonicalContract& c, const Tolerances& tol = {}) {
  if (c.deviations().empty() && c.mu() > 0.0) return threshold_report(c, tol).zero_pay_prob;
  const Model& m = c.model();
  const double kink = m.utility.kink();
  const double p = integrate_over(
      m.dist, c.a0(),
      [&](double y) {
        return c.marginal_unchecked(y) <= kink ? std::exp(detail::log_density_unchecked(m.dist, y, c.a0())) : 0.0;
      },
      tol, c.kinks());
  return std::clamp(p, 0.0, 1.0);
}

/// n equally spaced actions covering [a_min, a_max].
inline std::vector<double> uniform_actions(const ProblemSpec& p, int n) {
  require(n >= 2, "action scan needs at least two points");
  std::vector<double> a(n);
  const double h = (p.a_max - p.a_min) / (n - 1);
  for (int i = 0; i < n; ++i) a[i] = i + 1 == n ? p.a_max : p.a_min + i * h;
  return a;
}

namespace detail {

// Shared scan for any representation of U(·): `profile(a)` returns a
// UtilityProfile, `value(a)` the utility alone. With `refine`, each local
// peak of the scan is polished by golden section between its neighbours.
template <class Profile, class Value>
FoaReport scan_actions(Profile&& profile, Value&& value, const ProblemSpec& p, const std::vector<double>& actions,
                       bool refine, double zero_pay_prob) {
  const int n = static_cast<int>(actions.size());
  std::vector<double> utils(n);
  FoaReport r;
  r.min_U_aa = kInf;
  r.max_U_aa = -kInf;
  for (int i = 0; i < n; ++i) {
    const UtilityProfile u = profile(actions[i]);
    utils[i] = u.U;
    r.min_U_aa = std::min(r.min_U_aa, u.U_aa);
    r.max_U_aa = std::max(r.max_U_aa, u.U_aa);
  }
  r.intended_utility = value(p.a0);

  for (int i = 0; i < n; ++i) {
    const bool left = i == 0 || utils[i] > utils[i - 1];
    const bool right = i + 1 == n || utils[i] >= utils[i + 1];
    if (!(left && right)) continue;
    if (!refine) {
      r.local_maxima.push_back({actions[i], utils[i]});
      continue;
    }
    const double a_lo = actions[std::max(0, i - 1)], a_hi = actions[std::min(n - 1, i + 1)];
    const ScalarMax m = maximize_scalar(value, Interval::continuous(a_lo, a_hi), 3, p.tol);
    r.local_maxima.push_back({m.argmax, m.max});
  }
  // a0 is the reference point when no scanned peak beats it.
  auto best = std::max_element(r.local_maxima.begin(), r.local_maxima.end(),
                               [](const LocalMax& x, const LocalMax& y) { return x.utility < y.utility; });
  if (best == r.local_maxima.end() || best->utility < r.intended_utility) {
    r.best_action = p.a0;
    r.max_gain = 0.0;
  } else {
    r.best_action = best->action;
    r.max_gain = best->utility - r.intended_utility;
  }
  if (std::none_of(r.local_maxima.begin(), r.local_maxima.end(),
                   [&](const LocalMax& m) { return m.action == r.best_action; })) {
    r.local_maxima.push_back({r.best_action, r.intended_utility});
  }
  r.valid = r.max_gain <= p.tol.deviation_tol;
  r.concave_everywhere = r.max_U_aa <= 0.0;
  r.zero_pay_prob = zero_pay_prob;
  return r;
}

}  // namespace detail

/// Scan U(contract, ·) on `validation_grid` actions, refine every local peak
/// by golden section and record the worst curvature.
inline FoaReport validate_foa(const CanonicalContract& c, const ProblemSpec& p) {
  auto profile = [&](double a) { return agent_utility_profile(c, a, p.tol); };
  auto value = [&](double a) { return agent_utility(c, a, p.tol); };
  return detail::scan_actions(profile, value, p, uniform_actions(p, p.grids.validation_grid), true,
                              zero_pay_probability(c, p.tol));
}

struct ThresholdPoint {
  double reservation_utility;
  bool valid;
  double max_gain;
};

struct FoaThreshold {
  double threshold;                    // midpoint of the final bracket
  double lo;                           // last reservation utility found invalid
  double hi;                           // first reservation utility found valid above it
  std::vector<ThresholdPoint> scan;    // prescan and bisection probes, in evaluation order
  std::vector<double> violations;      // valid prescan points below the transition
  bool monotone;
};

/// Validity of the relaxed optimum at one reservation utility.
inline ThresholdPoint relaxed_validity(const ProblemSpec& p, double u_bar) {
  const ProblemSpec q = p.with_reservation_utility(u_bar);
  const RelaxedSolution s = solve_relaxed(q);
  const FoaReport r = validate_foa(s.contract, q);
  return {u_bar, r.valid, r.max_gain};
}

/// Locate the reservation utility where the relaxed contract turns valid:
/// a `prescan`-point scan of [u_lo, u_hi], then bisection of the bracket
/// above the last invalid point.
inline FoaThreshold foa_threshold(const ProblemSpec& p, double u_lo, double u_hi, int prescan = 32,
                                  int bisections = 12) {
  require(u_lo < u_hi, "threshold search needs u_lo < u_hi");
  require(prescan >= 2 && bisections >= 0, "threshold search needs at least two prescan points");
  FoaThreshold out{};
  std::vector<ThresholdPoint> grid;
  for (int i = 0; i < prescan; ++i) {
    const double u = i + 1 == prescan ? u_hi : u_lo + (u_hi - u_lo) * i / (prescan - 1);
    grid.push_back(relaxed_validity(p, u));
  }
  out.scan = grid;
  if (grid.front().valid == grid.back().valid) {
    fail(ErrorKind::NoTransition, std::string("relaxed contract is ") + (grid.front().valid ? "valid" : "invalid") +
                                      " at both ends of the reservation-utility bracket");
  }
  if (grid.front().valid) {
    fail(ErrorKind::NoTransition, "relaxed contract is valid at the low end and invalid at the high end");
  }
  std::size_t last_invalid = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!grid[i].valid) last_invalid = i;
  }
  for (std::size_t i = 0; i < last_invalid; ++i) {
    if (grid[i].valid) out.violations.push_back(grid[i].reservation_utility);
  }
  out.monotone = out.violations.empty();
  double lo = grid[last_invalid].reservation_utility, hi = grid[last_invalid + 1].reservation_utility;
  for (int k = 0; k < bisections; ++k) {
    const double mid = 0.5 * (lo + hi);
    const ThresholdPoint t = relaxed_validity(p, mid);
    out.scan.push_back(t);
    (t.valid ? hi : lo) = mid;
  }
  out.lo = lo;
  out.hi = hi;
  out.threshold = 0.5 * (lo + hi);
  return out;
}

}  // namespace moralhazard
