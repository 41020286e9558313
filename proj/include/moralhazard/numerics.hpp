#pragma once

// Shared numerical kernels: adaptive quadrature and lattice summation,
// bracketed monotone root finding, scalar maximization on an interval and
// a small projected quasi-Newton ascent for box-constrained problems.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "moralhazard/error.hpp"

namespace moralhazard {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  std::optional<double> step;  // lattice spacing; present iff the support is discrete

  static Interval continuous(double lo, double hi) { return Interval{lo, hi, std::nullopt}; }
  static Interval lattice(double lo, double hi, double step = 1.0) { return Interval{lo, hi, step}; }

  bool discrete() const { return step.has_value(); }
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
  double width() const { return hi - lo; }

  bool contains(double x) const {
    if (!(x >= lo && x <= hi)) return false;
    if (!discrete()) return true;
    const double k = (x - lo) / *step;
    return std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, std::abs(k));
  }

  /// Number of lattice points; only meaningful for bounded lattices.
  std::size_t lattice_size() const {
    return static_cast<std::size_t>(std::llround((hi - lo) / *step)) + 1;
  }

  void validate() const {
    require(!std::isnan(lo) && !std::isnan(hi), "interval endpoints must not be NaN");
    require(lo < hi, "interval requires lo < hi");
    if (discrete()) {
      require(*step > 0.0 && std::isfinite(*step), "lattice step must be positive and finite");
      require(std::isfinite(lo), "lattice must have a finite lower end");
      if (std::isfinite(hi)) {
        const double k = (hi - lo) / *step;
        require(std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k) && std::round(k) >= 1.0,
                "lattice width must be a positive multiple of the step");
      }
    }
  }
};

struct Tolerances {
  double abs_int = 1e-11;
  double rel_int = 1e-10;
  double root_tol = 1e-10;
  double grad_tol = 1e-9;
  double deviation_tol = 1e-6;  // utils
  double kkt_tol = 1e-8;

  void validate() const {
    for (double t : {abs_int, rel_int, root_tol, grad_tol, deviation_tol, kkt_tol}) {
      require(t > 0.0 && std::isfinite(t), "tolerances must be strictly positive and finite");
    }
  }

  Tolerances with_root_tol(double value) const {
    Tolerances copy = *this;
    copy.root_tol = value;
    return copy;
  }
};

namespace detail {

inline double magnitude(double v) { return std::abs(v); }
template <class Derived>
double magnitude(const Eigen::MatrixBase<Derived>& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

inline bool all_finite(double v) { return std::isfinite(v); }
template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

inline double abs_value(double v) { return std::abs(v); }
template <class Derived>
Eigen::VectorXd abs_value(const Eigen::MatrixBase<Derived>& v) {
  return v.cwiseAbs();
}

inline double zero_like(double) { return 0.0; }
inline Eigen::VectorXd zero_like(const Eigen::VectorXd& v) { return Eigen::VectorXd::Zero(v.size()); }

// Largest component of err / max(abs, rel |total|): <= 1 means converged.
inline double scaled_error(double err, double total, double abs_tol, double rel_tol) {
  return err / std::max(abs_tol, rel_tol * std::abs(total));
}
inline double scaled_error(const Eigen::VectorXd& err, const Eigen::VectorXd& total, double abs_tol,
                           double rel_tol) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    worst = std::max(worst, err[i] / std::max(abs_tol, rel_tol * std::abs(total[i])));
  }
  return worst;
}

inline double componentwise_max(double a, double b) { return std::max(a, b); }
inline Eigen::VectorXd componentwise_max(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.cwiseMax(b);
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15 nodes).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class V>
struct Panel {
  double a;
  double b;
  V value;
  V error;
  double priority;
};

template <class F>
auto kronrod_panel(F& fn, double a, double b) {
  using V = std::decay_t<decltype(fn(a))>;
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const V fc = fn(center);
  if (!all_finite(fc)) fail(ErrorKind::NonFinite, "integrand is not finite at y=" + std::to_string(center));
  V kronrod = kKronrodWeights[7] * fc;
  V gauss = kGaussWeights[3] * fc;
  V abs_sum = abs_value(fc) * kKronrodWeights[7];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const V f1 = fn(center - dx);
    const V f2 = fn(center + dx);
    if (!all_finite(f1) || !all_finite(f2)) {
      fail(ErrorKind::NonFinite, "integrand is not finite near y=" + std::to_string(center - dx));
    }
    kronrod += kKronrodWeights[j] * (f1 + f2);
    abs_sum += kKronrodWeights[j] * (abs_value(f1) + abs_value(f2));
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * (f1 + f2);
  }
  V value = kronrod * half;
  V err = abs_value(V((kronrod - gauss) * half));
  // Roundoff floor: the estimate cannot beat the precision of the sum itself.
  const V floor = abs_sum * (50.0 * std::numeric_limits<double>::epsilon() * std::abs(half));
  err = componentwise_max(err, floor);
  return std::pair<V, V>{value, err};
}

template <class F>
auto integrate_lattice(F& fn, const Interval& support, const Tolerances& tol) {
  using V = std::decay_t<decltype(fn(support.lo))>;
  const double step = *support.step;
  constexpr std::size_t kMaxTerms = 10'000'000;
  if (std::isfinite(support.hi)) {
    const std::size_t n = support.lattice_size();
    if (n > kMaxTerms) fail(ErrorKind::NoConvergence, "lattice too large to sum");
    V total = fn(support.lo);
    if (!all_finite(total)) fail(ErrorKind::NonFinite, "summand is not finite");
    for (std::size_t k = 1; k < n; ++k) {
      const V term = fn(support.lo + static_cast<double>(k) * step);
      if (!all_finite(term)) fail(ErrorKind::NonFinite, "summand is not finite");
      total += term;
    }
    return total;
  }
  // Unbounded lattice: stop once the terms decay geometrically and the
  // geometric tail bound falls below a tenth of the absolute tolerance.
  V total = fn(support.lo);
  if (!all_finite(total)) fail(ErrorKind::NonFinite, "summand is not finite");
  double previous = magnitude(total);
  bool seen_nonzero = previous > 0.0;
  int decreasing_run = 0;
  std::size_t zero_run = 0;
  for (std::size_t k = 1; k < kMaxTerms; ++k) {
    const V term = fn(support.lo + static_cast<double>(k) * step);
    if (!all_finite(term)) fail(ErrorKind::NonFinite, "summand is not finite");
    total += term;
    const double m = magnitude(term);
    if (m == 0.0) {
      ++zero_run;
      if (seen_nonzero && zero_run >= 10'000) return total;
      previous = 0.0;
      decreasing_run = 0;
      continue;
    }
    zero_run = 0;
    seen_nonzero = true;
    if (previous > 0.0 && m < previous) {
      ++decreasing_run;
      const double ratio = m / previous;
      if (decreasing_run >= 4 && ratio < 1.0 && m * ratio / (1.0 - ratio) <= 0.1 * tol.abs_int) {
        return total;
      }
    } else {
      decreasing_run = 0;
    }
    previous = m;
  }
  fail(ErrorKind::NoConvergence, "lattice sum did not reach its tail bound");
}

}  // namespace detail

/// Integrates `fn` over `support` to within max(abs_int, rel_int |value|)
/// (componentwise when `fn` returns an Eigen vector).
///
/// Continuous supports must be finite; callers truncate infinite supports
/// upstream with quantile bounds. `breakpoints` seed the initial partition,
/// which is how heavy tails and known kinks are handled. Discrete supports
/// are summed over the lattice.
template <class F>
auto integrate(F&& fn, const Interval& support, const Tolerances& tol,
               std::span<const double> breakpoints = {}) {
  using V = std::decay_t<decltype(fn(support.lo))>;
  support.validate();
  if (support.discrete()) return detail::integrate_lattice(fn, support, tol);
  if (!support.bounded()) {
    fail(ErrorKind::ValidationError, "continuous integration requires a truncated (finite) support");
  }

  std::vector<double> edges{support.lo, support.hi};
  for (double b : breakpoints) {
    if (b > support.lo && b < support.hi) edges.push_back(b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<detail::Panel<V>> panels;
  panels.reserve(edges.size() + 64);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    auto [value, err] = detail::kronrod_panel(fn, edges[i], edges[i + 1]);
    panels.push_back({edges[i], edges[i + 1], std::move(value), std::move(err), 0.0});
  }

  auto sum = [&](auto member) {
    V total = panels.front().*member;
    for (std::size_t i = 1; i < panels.size(); ++i) total += panels[i].*member;
    return total;
  };
  V total = sum(&detail::Panel<V>::value);
  V total_err = sum(&detail::Panel<V>::error);

  // Priorities are fixed against the tolerance implied by the first pass so
  // that small components of a vector integrand are not starved.
  const V scale_ref = detail::abs_value(total);
  auto priority = [&](const V& err) { return detail::scaled_error(err, scale_ref, tol.abs_int, tol.rel_int); };
  auto cmp = [&](std::size_t l, std::size_t r) { return panels[l].priority < panels[r].priority; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);
  for (std::size_t i = 0; i < panels.size(); ++i) {
    panels[i].priority = priority(panels[i].error);
    heap.push(i);
  }

  constexpr std::size_t kMaxPanels = 20'000;
  std::size_t since_refresh = 0;
  while (detail::scaled_error(total_err, total, tol.abs_int, tol.rel_int) > 1.0) {
    if (panels.size() >= kMaxPanels) {
      fail(ErrorKind::NoConvergence, "adaptive quadrature reached its subdivision limit");
    }
    const std::size_t worst = heap.top();
    heap.pop();
    const double a = panels[worst].a;
    const double b = panels[worst].b;
    const double mid = 0.5 * (a + b);
    if (!(mid > a && mid < b) || (b - a) <= 1e-15 * std::max(1.0, std::abs(mid))) {
      fail(ErrorKind::NoConvergence, "adaptive quadrature cannot subdivide further near y=" + std::to_string(mid));
    }
    auto [v1, e1] = detail::kronrod_panel(fn, a, mid);
    auto [v2, e2] = detail::kronrod_panel(fn, mid, b);
    total += v1 + v2 - panels[worst].value;
    total_err += e1 + e2 - panels[worst].error;
    panels[worst] = {a, mid, std::move(v1), std::move(e1), 0.0};
    panels[worst].priority = priority(panels[worst].error);
    heap.push(worst);
    panels.push_back({mid, b, std::move(v2), std::move(e2), 0.0});
    panels.back().priority = priority(panels.back().error);
    heap.push(panels.size() - 1);
    if (++since_refresh == 64) {
      // Running sums drift by cancellation; rebuild them periodically.
      total = sum(&detail::Panel<V>::value);
      total_err = sum(&detail::Panel<V>::error);
      since_refresh = 0;
    }
  }
  return sum(&detail::Panel<V>::value);
}

enum class Direction { Increasing = 1, Decreasing = -1 };

/// Root of a monotone function. The bracket is grown geometrically from
/// `seed` (doubling the step toward an infinite end of `domain`, halving the
/// distance toward a finite end) and then closed with Brent's method.
template <class F>
double find_root_monotone(F&& fn, double seed, Direction direction, const Tolerances& tol,
                          Interval domain = Interval::continuous(-kInf, kInf)) {
  const double sign = direction == Direction::Increasing ? 1.0 : -1.0;
  auto g = [&](double x) {
    const double v = sign * fn(x);
    if (std::isnan(v)) fail(ErrorKind::NonFinite, "root function returned NaN at x=" + std::to_string(x));
    return v;
  };
  auto converged = [&](double fx) { return std::abs(fx) <= tol.root_tol; };

  double x0 = seed;
  if (!(x0 > domain.lo)) x0 = std::isfinite(domain.hi) ? 0.5 * (domain.lo + domain.hi) : domain.lo + 1.0;
  if (!(x0 < domain.hi)) x0 = std::isfinite(domain.lo) ? 0.5 * (domain.lo + domain.hi) : domain.hi - 1.0;
  double g0 = g(x0);
  if (converged(g0)) return x0;

  // Expand toward the side where the root must lie.
  const bool go_up = g0 < 0.0;
  const double boundary = go_up ? domain.hi : domain.lo;
  double step = 0.25 * std::max(1.0, std::abs(x0));
  double prev_x = x0, prev_g = g0;
  double next_x = x0, next_g = g0;
  bool bracketed = false;
  constexpr int kMaxExpansions = 200;
  for (int k = 0; k < kMaxExpansions; ++k) {
    if (std::isfinite(boundary)) {
      next_x = boundary + 0.5 * (prev_x - boundary);
    } else {
      next_x = go_up ? prev_x + step : prev_x - step;
      step *= 2.0;
    }
    next_g = g(next_x);
    if (converged(next_g)) return next_x;
    if ((next_g > 0.0) == go_up) {
      bracketed = true;
      break;
    }
    prev_x = next_x, prev_g = next_g;
  }
  if (!bracketed) {
    fail(ErrorKind::NoBracket, "no sign change found after geometric expansion from seed " + std::to_string(seed));
  }
  const double lo_x = go_up ? prev_x : next_x, lo_g = go_up ? prev_g : next_g;
  const double hi_x = go_up ? next_x : prev_x, hi_g = go_up ? next_g : prev_g;

  // Brent's method on [lo_x, hi_x] with g(lo_x) < 0 < g(hi_x).
  double a = lo_x, fa = lo_g, b = hi_x, fb = hi_g;
  double c = a, fc = fa, d = b - a, e = d;
  constexpr int kMaxIter = 300;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a, fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b, b = c, c = a;
      fa = fb, fb = fc, fc = fa;
    }
    const double width_tol = 0.5 * tol.root_tol * std::max(1.0, std::abs(b));
    const double xm = 0.5 * (c - b);
    if (converged(fb) || std::abs(xm) <= width_tol) return b;
    if (std::abs(e) >= width_tol && std::abs(fa) > std::abs(fb)) {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(width_tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b, fa = fb;
    b += std::abs(d) > width_tol ? d : (xm > 0.0 ? width_tol : -width_tol);
    fb = g(b);
  }
  fail(ErrorKind::NoConvergence, "root refinement exceeded its iteration limit");
}

struct QuadratureRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// m-point Gauss–Legendre rule by Newton iteration on P_m.
inline QuadratureRule gauss_legendre(int m) {
  require(m >= 1, "Gauss-Legendre rule needs at least one node");
  QuadratureRule rule{std::vector<double>(m), std::vector<double>(m)};
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[m - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[m - 1 - i] = w;
  }
  return rule;
}

struct ScalarMax {
  double argmax;
  double max;
};

/// Grid search followed by golden-section refinement of the best bracket.
template <class F>
ScalarMax maximize_scalar(F&& fn, const Interval& domain, int n_grid, const Tolerances& tol = {}) {
  require(domain.bounded(), "maximize_scalar needs a bounded domain");
  require(n_grid >= 2, "maximize_scalar needs at least two grid points");
  auto eval = [&](double x) {
    const double v = fn(x);
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "objective is not finite at x=" + std::to_string(x));
    return v;
  };
  const double h = domain.width() / (n_grid - 1);
  int best = 0;
  double best_value = -kInf;
  for (int i = 0; i < n_grid; ++i) {
    const double v = eval(i + 1 == n_grid ? domain.hi : domain.lo + i * h);
    if (v > best_value) best_value = v, best = i;
  }
  double lo = domain.lo + std::max(0, best - 1) * h;
  double hi = best + 1 >= n_grid ? domain.hi : domain.lo + (best + 1) * h;
  const bool at_lo = best <= 1, at_hi = best + 2 >= n_grid;
  const double best_x = best + 1 == n_grid ? domain.hi : domain.lo + best * h;

  const double target = tol.root_tol * domain.width();
  constexpr double kInvPhi = 0.6180339887498948482;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = eval(x1), f2 = eval(x2);
  for (int iter = 0; iter < 200 && hi - lo > target; ++iter) {
    if (f1 >= f2) {
      hi = x2, x2 = x1, f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = eval(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = eval(x2);
    }
  }
  ScalarMax refined = f1 >= f2 ? ScalarMax{x1, f1} : ScalarMax{x2, f2};
  if (refined.max < best_value) refined = {best_x, best_value};
  // A bracket on a domain end keeps the end when the two agree to rounding.
  const double ulps = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(refined.max);
  for (auto [end, near] : {std::pair{domain.lo, at_lo}, std::pair{domain.hi, at_hi}}) {
    if (!near || refined.argmax == end) continue;
    const double v = eval(end);
    if (v >= refined.max - ulps) refined = {end, v};
  }
  return refined;
}

struct BoxMaxResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd grad;
  double projected_grad_norm = 0.0;
  int iterations = 0;
};

struct BoxMaxOptions {
  int max_iterations = 500;
  int memory = 10;
  double armijo = 1e-4;
  double backtrack = 0.5;
};

namespace detail {

inline Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower) {
  return x.cwiseMax(lower);
}

inline double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                      const Eigen::VectorXd& lower) {
  return (project(x + g, lower) - x).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Projected limited-memory quasi-Newton ascent for max fn(x) s.t. x >= lower.
/// `value_grad` returns (fn(x), grad fn(x)); use -inf in `lower` for free
/// coordinates. Throws NoConvergence when the projected gradient does not
/// reach grad_tol within the iteration budget.
template <class F>
BoxMaxResult maximize_box(F&& value_grad, const Eigen::VectorXd& lower, const Eigen::VectorXd& init,
                          const Tolerances& tol, const BoxMaxOptions& options = {}) {
  require(lower.size() == init.size(), "maximize_box: bound and init sizes differ");
  const Eigen::Index n = init.size();
  auto evaluate = [&](const Eigen::VectorXd& x) {
    auto [v, g] = value_grad(x);
    if (!std::isfinite(v) || !g.allFinite()) fail(ErrorKind::NonFinite, "objective or gradient is not finite");
    return std::pair<double, Eigen::VectorXd>{v, g};
  };

  Eigen::VectorXd x = detail::project(init, lower);
  auto [f, g] = evaluate(x);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const double pg = detail::projected_gradient_norm(x, g, lower);
    if (pg <= tol.grad_tol) return {x, f, g, pg, iter};

    Eigen::VectorXd free = Eigen::VectorXd::Ones(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double slack = 1e-12 * (1.0 + std::abs(lower[i]));
      if (std::isfinite(lower[i]) && x[i] <= lower[i] + slack && g[i] <= 0.0) free[i] = 0.0;
    }

    // Two-loop recursion on the negated objective, restricted to free coordinates.
    auto direction = [&]() -> Eigen::VectorXd {
      Eigen::VectorXd q = g.cwiseProduct(free);
      if (memory.empty()) {
        const double gmax = q.cwiseAbs().maxCoeff();
        return q * (0.01 * std::max(1.0, x.cwiseAbs().maxCoeff()) / gmax);
      }
      std::vector<double> alpha(memory.size());
      for (std::size_t k = memory.size(); k-- > 0;) {
        const auto& [s, y] = memory[k];
        const double rho = 1.0 / y.dot(s);
        alpha[k] = rho * s.dot(q);
        q -= alpha[k] * y.cwiseProduct(free);
      }
      const auto& [s_last, y_last] = memory.back();
      q *= s_last.dot(y_last) / y_last.dot(y_last);
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const auto& [s, y] = memory[k];
        const double rho = 1.0 / y.dot(s);
        const double beta = rho * y.dot(q);
        q += (alpha[k] - beta) * s.cwiseProduct(free);
      }
      return q.cwiseProduct(free);
    };

    Eigen::VectorXd d = direction();
    if (!(g.dot(d) > 0.0)) {
      memory.clear();
      d = direction();
    }

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    Eigen::VectorXd g_new;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double step = 1.0;
      for (int ls = 0; ls < 60; ++ls, step *= options.backtrack) {
        x_new = detail::project(x + step * d, lower);
        const Eigen::VectorXd dx = x_new - x;
        if (dx.cwiseAbs().maxCoeff() == 0.0) break;
        auto [fv, gv] = evaluate(x_new);
        // Armijo, or the approximate Wolfe test once values agree to roundoff.
        const double slope0 = g.dot(dx), slope = gv.dot(dx);
        const bool armijo = fv >= f + options.armijo * slope0;
        const bool approx_wolfe = fv >= f - 1e-14 * (1.0 + std::abs(f)) &&
                                  slope >= -(1.0 - 2.0 * options.armijo) * slope0 && slope <= 0.9 * slope0;
        if (armijo || approx_wolfe) {
          f_new = fv;
          g_new = std::move(gv);
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (memory.empty()) break;
        memory.clear();
        d = direction();
      }
    }
    if (!accepted) {
      fail(ErrorKind::NoConvergence,
           "line search stalled with projected gradient " + std::to_string(pg));
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g - g_new;  // gradient change of the negated objective
    if (s.dot(y) > 1e-14 * s.norm() * y.norm()) {
      memory.emplace_back(s, y);
      if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
    }
    x = std::move(x_new);
    f = f_new;
    g = std::move(g_new);
  }
  const double pg = detail::projected_gradient_norm(x, g, lower);
  if (pg <= tol.grad_tol) return {x, f, g, pg, options.max_iterations};
  fail(ErrorKind::NoConvergence, "projected quasi-Newton ascent hit its iteration limit");
}

/// Convenience overload taking the objective and its gradient separately.
template <class Fn, class Grad>
BoxMaxResult maximize_box(Fn&& fn, Grad&& grad, const Eigen::VectorXd& lower, const Eigen::VectorXd& init,
                          const Tolerances& tol, const BoxMaxOptions& options = {}) {
  return maximize_box(
      [&](const Eigen::VectorXd& x) { return std::pair<double, Eigen::VectorXd>{fn(x), grad(x)}; }, lower, init,
      tol, options);
}

}  // namespace moralhazard
