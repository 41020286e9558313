#pragma once

// Output distributions f(y|a) indexed by the agent's action: densities,
// action derivatives, closed-form scores and their inverses, supports,
// means and conservative tail bounds.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moralhazard/error.hpp"
#include "moralhazard/numerics.hpp"

namespace moralhazard {

enum class Family {
  Gaussian,
  LogNormal,
  Poisson,
  Exponential,
  Bernoulli,
  Geometric,
  Binomial,
  Gamma,
  StudentT,
  LocationFamily,
  ScaleFamily,
};

/// Base density h for the y = a + X and y = aX wrappers, rescaled by `scale`.
enum class BaseDensity { Normal, Logistic, Exponential };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::LogNormal: return "lognormal";
    case Family::Poisson: return "poisson";
    case Family::Exponential: return "exponential";
    case Family::Bernoulli: return "bernoulli";
    case Family::Geometric: return "geometric";
    case Family::Binomial: return "binomial";
    case Family::Gamma: return "gamma";
    case Family::StudentT: return "student_t";
    case Family::LocationFamily: return "location";
    case Family::ScaleFamily: return "scale";
  }
  return "unknown";
}

inline std::string_view to_string(BaseDensity b) {
  switch (b) {
    case BaseDensity::Normal: return "normal";
    case BaseDensity::Logistic: return "logistic";
    case BaseDensity::Exponential: return "exponential";
  }
  return "unknown";
}

struct ScoreShape {
  bool monotone = true;
  bool unbounded_below = true;
  bool unbounded_above = true;
};

struct OutputDistribution {
  Family family = Family::Gaussian;
  double sigma = 1.0;  // Gaussian, LogNormal, StudentT; base scale for the wrappers
  double nu = 1.0;     // StudentT
  double n = 1.0;      // Binomial trials or Gamma shape
  BaseDensity base = BaseDensity::Normal;
  double edge_eps = 1e-9;  // distance kept from singular action boundaries

  static OutputDistribution gaussian(double sigma) { return make(Family::Gaussian, sigma); }
  static OutputDistribution lognormal(double sigma) { return make(Family::LogNormal, sigma); }
  static OutputDistribution poisson() { return make(Family::Poisson); }
  static OutputDistribution exponential() { return make(Family::Exponential); }
  static OutputDistribution bernoulli() { return make(Family::Bernoulli); }
  static OutputDistribution geometric() { return make(Family::Geometric); }
  static OutputDistribution binomial(int trials) { return make(Family::Binomial, 1.0, 1.0, trials); }
  static OutputDistribution gamma(double shape) { return make(Family::Gamma, 1.0, 1.0, shape); }
  static OutputDistribution student_t(double sigma, double nu) { return make(Family::StudentT, sigma, nu); }
  static OutputDistribution location(BaseDensity base, double scale = 1.0) {
    auto d = make(Family::LocationFamily, scale, 1.0, 1.0, base, false);
    d.validate();
    return d;
  }
  static OutputDistribution scale_family(BaseDensity base, double scale = 1.0) {
    auto d = make(Family::ScaleFamily, scale, 1.0, 1.0, base, false);
    d.validate();
    return d;
  }

  void validate() const {
    require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
    require(nu > 0.0 && std::isfinite(nu), "nu must be positive");
    require(edge_eps > 0.0 && edge_eps < 0.5, "edge_eps must lie in (0, 0.5)");
    if (family == Family::Binomial) {
      require(n >= 1.0 && n == std::floor(n) && n <= 1e7, "binomial n must be a positive integer");
    }
    if (family == Family::Gamma) {
      // Below shape 1 the density is unbounded at zero.
      require(n >= 1.0 && std::isfinite(n), "gamma shape n must be at least 1");
    }
    if (family == Family::LocationFamily) {
      require(base != BaseDensity::Exponential, "location family needs a base density with full support");
    }
  }

  ScoreShape score_shape() const {
    switch (family) {
      case Family::Gaussian:
      case Family::LogNormal: return {true, true, true};
      case Family::Poisson:
      case Family::Exponential:
      case Family::Geometric:
      case Family::Gamma: return {true, false, true};
      case Family::Bernoulli:
      case Family::Binomial: return {true, false, false};
      case Family::StudentT: return {false, false, false};
      case Family::LocationFamily:
        return base == BaseDensity::Normal ? ScoreShape{true, true, true} : ScoreShape{true, false, false};
      case Family::ScaleFamily:
        return base == BaseDensity::Exponential ? ScoreShape{true, false, true} : ScoreShape{false, false, true};
    }
    return {};
  }

  bool discrete() const {
    return family == Family::Poisson || family == Family::Bernoulli || family == Family::Geometric ||
           family == Family::Binomial;
  }

  /// Actions for which the family is defined and its score is finite.
  Interval action_domain() const {
    switch (family) {
      case Family::Gaussian:
      case Family::LogNormal:
      case Family::StudentT:
      case Family::LocationFamily: return Interval::continuous(-kInf, kInf);
      case Family::Poisson:
      case Family::Exponential:
      case Family::Gamma:
      case Family::ScaleFamily: return Interval::continuous(edge_eps, kInf);
      case Family::Bernoulli:
      case Family::Binomial: return Interval::continuous(edge_eps, 1.0 - edge_eps);
      case Family::Geometric: return Interval::continuous(1.0 + edge_eps, kInf);
    }
    return Interval::continuous(-kInf, kInf);
  }

  void validate_action(double a) const {
    const Interval dom = action_domain();
    if (!(a >= dom.lo && a <= dom.hi)) {
      fail(ErrorKind::OutOfActionDomain,
           std::string(to_string(family)) + " is not defined at action a=" + std::to_string(a));
    }
  }

 private:
  static OutputDistribution make(Family f, double sigma = 1.0, double nu = 1.0, double n = 1.0,
                                 BaseDensity base = BaseDensity::Normal, bool check = true) {
    OutputDistribution d;
    d.family = f;
    d.sigma = sigma;
    d.nu = nu;
    d.n = n;
    d.base = base;
    if (check) d.validate();
    return d;
  }
};

namespace detail {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

struct BaseTerms {
  double log_h;  // log of the rescaled base density at x
  double l1;     // d/dx log h
  double l2;     // d²/dx² log h
};

inline BaseTerms base_terms(BaseDensity base, double scale, double x) {
  const double t = x / scale;
  const double ls = std::log(scale);
  switch (base) {
    case BaseDensity::Normal: return {-0.5 * t * t - kLogSqrt2Pi - ls, -t / scale, -1.0 / (scale * scale)};
    case BaseDensity::Logistic: {
      const double e = std::exp(-std::abs(t));
      const double sig = 1.0 / (1.0 + std::exp(-t));
      return {-std::abs(t) - 2.0 * std::log1p(e) - ls, -std::tanh(0.5 * t) / scale,
              -2.0 * sig * (1.0 - sig) / (scale * scale)};
    }
    case BaseDensity::Exponential: return {-t - ls, -1.0 / scale, 0.0};
  }
  return {0.0, 0.0, 0.0};
}

inline double base_mean(BaseDensity base, double scale) { return base == BaseDensity::Exponential ? scale : 0.0; }

// Half-width, in base-scale units, of a symmetric window carrying all but
// `tail` of the base mass (one-sided for the exponential base).
inline double base_tail_width(BaseDensity base, double tail) {
  switch (base) {
    case BaseDensity::Normal: return std::sqrt(2.0 * std::log(1.0 / tail)) + 1.0;
    case BaseDensity::Logistic: return std::log(2.0 / tail);
    case BaseDensity::Exponential: return std::log(1.0 / tail);
  }
  return 0.0;
}

inline bool is_lattice_point(double y, double lo) {
  const double k = y - lo;
  return k >= -1e-9 && std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, std::abs(k));
}

inline double log_binomial_coefficient(double n, double y) {
  return std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
}

}  // namespace detail

/// Support of f(·|a); lattices carry step 1.
inline Interval support(const OutputDistribution& d, double a) {
  switch (d.family) {
    case Family::Gaussian:
    case Family::StudentT:
    case Family::LocationFamily: return Interval::continuous(-kInf, kInf);
    case Family::LogNormal: return Interval::continuous(0.0, kInf);
    case Family::Exponential:
    case Family::Gamma: return Interval::continuous(0.0, kInf);
    case Family::ScaleFamily:
      return d.base == BaseDensity::Exponential ? Interval::continuous(0.0, kInf)
                                                : Interval::continuous(-kInf, kInf);
    case Family::Poisson: return Interval::lattice(0.0, kInf);
    case Family::Bernoulli: return Interval::lattice(0.0, 1.0);
    case Family::Geometric: return Interval::lattice(1.0, kInf);
    case Family::Binomial: return Interval::lattice(0.0, d.n);
  }
  (void)a;
  return Interval::continuous(-kInf, kInf);
}

inline bool in_support(const OutputDistribution& d, double y, double a) {
  const Interval s = support(d, a);
  if (std::isnan(y) || y < s.lo || y > s.hi) return false;
  if (d.family == Family::LogNormal) return y > 0.0;
  return !s.discrete() || detail::is_lattice_point(y, s.lo);
}

namespace detail {

inline void check_point(const OutputDistribution& d, double y, double a) {
  d.validate_action(a);
  if (!in_support(d, y, a)) {
    fail(ErrorKind::OutOfSupport, std::string(to_string(d.family)) + " support excludes y=" + std::to_string(y));
  }
}

inline double log_density_unchecked(const OutputDistribution& d, double y, double a) {
  switch (d.family) {
    case Family::Gaussian: {
      const double z = (y - a) / d.sigma;
      return -0.5 * z * z - kLogSqrt2Pi - std::log(d.sigma);
    }
    case Family::LogNormal: {
      const double ly = std::log(y);
      const double z = (ly - a) / d.sigma;
      return -0.5 * z * z - kLogSqrt2Pi - std::log(d.sigma) - ly;
    }
    case Family::Poisson: return (y == 0.0 ? 0.0 : y * std::log(a)) - a - std::lgamma(y + 1.0);
    case Family::Exponential: return -y / a - std::log(a);
    case Family::Bernoulli: return y > 0.5 ? std::log(a) : std::log1p(-a);
    case Family::Geometric: return (y - 1.0) * std::log1p(-1.0 / a) - std::log(a);
    case Family::Binomial: {
      double v = log_binomial_coefficient(d.n, y);
      if (y > 0.0) v += y * std::log(a);
      if (d.n - y > 0.0) v += (d.n - y) * std::log1p(-a);
      return v;
    }
    case Family::Gamma: {
      const double lead = d.n == 1.0 ? 0.0 : (d.n - 1.0) * std::log(y);
      return lead - y / a - std::lgamma(d.n) - d.n * std::log(a);
    }
    case Family::StudentT: {
      const double z = (y - a) / d.sigma;
      return std::lgamma(0.5 * (d.nu + 1.0)) - std::lgamma(0.5 * d.nu) - 0.5 * std::log(std::numbers::pi * d.nu) -
             std::log(d.sigma) - 0.5 * (d.nu + 1.0) * std::log1p(z * z / d.nu);
    }
    case Family::LocationFamily: return base_terms(d.base, d.sigma, y - a).log_h;
    case Family::ScaleFamily: return base_terms(d.base, d.sigma, y / a).log_h - std::log(a);
  }
  return 0.0;
}

// Score S and its action derivative T = ∂S/∂a, from the closed forms.
inline std::pair<double, double> score_terms_unchecked(const OutputDistribution& d, double y, double a) {
  switch (d.family) {
    case Family::Gaussian: {
      const double s2 = d.sigma * d.sigma;
      return {(y - a) / s2, -1.0 / s2};
    }
    case Family::LogNormal: {
      const double s2 = d.sigma * d.sigma;
      return {(std::log(y) - a) / s2, -1.0 / s2};
    }
    case Family::Poisson: return {(y - a) / a, -y / (a * a)};
    case Family::Exponential: return {(y - a) / (a * a), 1.0 / (a * a) - 2.0 * y / (a * a * a)};
    case Family::Bernoulli:
    case Family::Binomial: {
      const double n = d.family == Family::Bernoulli ? 1.0 : d.n;
      const double q = 1.0 - a;
      return {(y - n * a) / (a * q), -y / (a * a) - (n - y) / (q * q)};
    }
    case Family::Geometric: {
      const double den = a * a - a;
      return {(y - a) / den, -1.0 / den - (y - a) * (2.0 * a - 1.0) / (den * den)};
    }
    case Family::Gamma: return {(y - d.n * a) / (a * a), d.n / (a * a) - 2.0 * y / (a * a * a)};
    case Family::StudentT: {
      const double dev = y - a;
      const double ns2 = d.nu * d.sigma * d.sigma;
      const double den = ns2 + dev * dev;
      return {(d.nu + 1.0) * dev / den, (d.nu + 1.0) * (dev * dev - ns2) / (den * den)};
    }
    case Family::LocationFamily: {
      const auto b = base_terms(d.base, d.sigma, y - a);
      return {-b.l1, b.l2};
    }
    case Family::ScaleFamily: {
      const double x = y / a;
      const auto b = base_terms(d.base, d.sigma, x);
      return {-1.0 / a - x * b.l1 / a, (1.0 + 2.0 * x * b.l1 + x * x * b.l2) / (a * a)};
    }
  }
  return {0.0, 0.0};
}

}  // namespace detail

inline double log_density(const OutputDistribution& d, double y, double a) {
  detail::check_point(d, y, a);
  return detail::log_density_unchecked(d, y, a);
}

/// f(y|a); the pmf for lattice families.
inline double density(const OutputDistribution& d, double y, double a) { return std::exp(log_density(d, y, a)); }

/// S(y|a) = ∂_a log f(y|a), evaluated from its closed form.
inline double score(const OutputDistribution& d, double y, double a) {
  detail::check_point(d, y, a);
  return detail::score_terms_unchecked(d, y, a).first;
}

/// ∂_a S(y|a).
inline double score_derivative(const OutputDistribution& d, double y, double a) {
  detail::check_point(d, y, a);
  return detail::score_terms_unchecked(d, y, a).second;
}

struct DensityDerivs {
  double f_a;
  double f_aa;
};

/// ∂f/∂a = S f and ∂²f/∂a² = (S² + ∂_a S) f.
inline DensityDerivs density_derivs(const OutputDistribution& d, double y, double a) {
  detail::check_point(d, y, a);
  const double f = std::exp(detail::log_density_unchecked(d, y, a));
  const auto [s, t] = detail::score_terms_unchecked(d, y, a);
  return {s * f, (s * s + t) * f};
}

inline double mean(const OutputDistribution& d, double a) {
  d.validate_action(a);
  switch (d.family) {
    case Family::LogNormal: return std::exp(a + 0.5 * d.sigma * d.sigma);
    case Family::Binomial:
    case Family::Gamma: return d.n * a;
    case Family::LocationFamily: return a + detail::base_mean(d.base, d.sigma);
    case Family::ScaleFamily: return a * detail::base_mean(d.base, d.sigma);
    default: return a;
  }
}

/// Closed interval of attainable score values at action a. Infinite ends
/// mean the score is unbounded in that direction.
inline Interval score_image(const OutputDistribution& d, double a) {
  d.validate_action(a);
  const Interval sup = support(d, a);
  auto s_at = [&](double y) { return detail::score_terms_unchecked(d, y, a).first; };
  switch (d.family) {
    case Family::Gaussian:
    case Family::LogNormal: return Interval::continuous(-kInf, kInf);
    case Family::Exponential:
    case Family::Gamma:
    case Family::Poisson:
    case Family::Geometric: return Interval::continuous(s_at(sup.lo), kInf);
    case Family::Bernoulli:
    case Family::Binomial: return Interval::continuous(s_at(sup.lo), s_at(sup.hi));
    case Family::StudentT: {
      const double peak = 0.5 * (d.nu + 1.0) / (std::sqrt(d.nu) * d.sigma);
      return Interval::continuous(-peak, peak);
    }
    case Family::LocationFamily:
      return d.base == BaseDensity::Normal ? Interval::continuous(-kInf, kInf)
                                           : Interval::continuous(-1.0 / d.sigma, 1.0 / d.sigma);
    case Family::ScaleFamily: return Interval::continuous(-1.0 / a, kInf);
  }
  return Interval::continuous(-kInf, kInf);
}

struct ScoreInverse {
  double y;
  bool exact;  // false when a lattice family has no point with S(y|a) = s exactly
};

/// The outcome whose score equals `s`. Lattice families return the largest
/// lattice point with S(y|a) ≤ s.
inline ScoreInverse score_inverse(const OutputDistribution& d, double s, double a) {
  d.validate_action(a);
  if (!d.score_shape().monotone) {
    fail(ErrorKind::ScoreNotInvertible, std::string(to_string(d.family)) + " score is not monotone in y");
  }
  const Interval image = score_image(d, a);
  if (std::isnan(s)) fail(ErrorKind::ScoreOutOfRange, "score value is NaN");
  const Interval sup = support(d, a);

  if (d.discrete()) {
    if (s < image.lo) {
      fail(ErrorKind::ScoreOutOfRange, "score " + std::to_string(s) + " lies below the score image");
    }
    double y_cont = 0.0;
    switch (d.family) {
      case Family::Poisson: y_cont = a + a * s; break;
      case Family::Geometric: y_cont = a + (a * a - a) * s; break;
      case Family::Bernoulli: y_cont = a + a * (1.0 - a) * s; break;
      case Family::Binomial: y_cont = d.n * a + a * (1.0 - a) * s; break;
      default: break;
    }
    double y = std::floor(y_cont + 1e-9 * std::max(1.0, std::abs(y_cont)));
    y = std::clamp(y, sup.lo, sup.hi);
    while (y > sup.lo && detail::score_terms_unchecked(d, y, a).first > s) y -= 1.0;
    const double sy = detail::score_terms_unchecked(d, y, a).first;
    return {y, std::abs(sy - s) <= 1e-12 * std::max(1.0, std::abs(s))};
  }

  if (s < image.lo || s > image.hi) {
    fail(ErrorKind::ScoreOutOfRange, "score " + std::to_string(s) + " lies outside the score image");
  }
  switch (d.family) {
    case Family::Gaussian: return {a + d.sigma * d.sigma * s, true};
    case Family::LogNormal: return {std::exp(a + d.sigma * d.sigma * s), true};
    case Family::Exponential: return {a + a * a * s, true};
    case Family::Gamma: return {d.n * a + a * a * s, true};
    case Family::LocationFamily:
      if (d.base == BaseDensity::Normal) return {a + d.sigma * d.sigma * s, true};
      if (std::abs(s) >= 1.0 / d.sigma) fail(ErrorKind::ScoreOutOfRange, "score outside the logistic image");
      return {a + 2.0 * d.sigma * std::atanh(d.sigma * s), true};
    case Family::ScaleFamily: return {a * d.sigma * (1.0 + a * s), true};
    default: break;
  }
  fail(ErrorKind::ScoreNotInvertible, "no inverse available");
}

/// Interval carrying at least `mass` of f(·|a), from conservative closed-form
/// tail bounds. Lattice families return a bounded lattice.
inline Interval quantile_bounds(const OutputDistribution& d, double a, double mass) {
  d.validate_action(a);
  require(mass > 0.0 && mass < 1.0, "mass must lie in (0, 1)");
  const double tail = 1.0 - mass;
  const double z = std::sqrt(2.0 * std::log(1.0 / tail)) + 1.0;
  switch (d.family) {
    case Family::Gaussian: return Interval::continuous(a - z * d.sigma, a + z * d.sigma);
    case Family::LogNormal: return Interval::continuous(std::exp(a - z * d.sigma), std::exp(a + z * d.sigma));
    case Family::StudentT: {
      // Density of the standardized t is at most C ν^{(ν+1)/2} |t|^{-(ν+1)}.
      const double c = std::exp(std::lgamma(0.5 * (d.nu + 1.0)) - std::lgamma(0.5 * d.nu)) /
                       std::sqrt(std::numbers::pi * d.nu);
      const double t = std::pow(2.0 * c * std::pow(d.nu, 0.5 * (d.nu - 1.0)) / tail, 1.0 / d.nu);
      const double w = std::max(z, t) * d.sigma;
      return Interval::continuous(a - w, a + w);
    }
    case Family::Exponential: return Interval::continuous(0.0, a * std::log(1.0 / tail));
    case Family::Gamma: {
      // Chernoff: P(Y ≥ xa) ≤ exp(-(x - n) + n log(x/n)) for x > n.
      const double target = std::log(1.0 / tail);
      double x = d.n + target;
      while (x - d.n - d.n * std::log(x / d.n) < target) x *= 1.5;
      return Interval::continuous(0.0, x * a);
    }
    case Family::Poisson: {
      // Chernoff: P(Y ≥ t) ≤ exp(-a) (e a / t)^t for t > a.
      const double target = std::log(1.0 / tail);
      double t = std::ceil(std::max(1.0, std::numbers::e * a));
      while (t * std::log(t / (std::numbers::e * a)) + a < target) t = std::ceil(t * 1.25);
      return Interval::lattice(0.0, t);
    }
    case Family::Geometric: {
      const double t = std::ceil(std::log(tail) / std::log1p(-1.0 / a));
      return Interval::lattice(1.0, 1.0 + std::max(1.0, t));
    }
    case Family::Bernoulli:
    case Family::Binomial: return support(d, a);
    case Family::LocationFamily: {
      const double w = detail::base_tail_width(d.base, tail) * d.sigma;
      return Interval::continuous(a - w, a + w);
    }
    case Family::ScaleFamily: {
      const double w = detail::base_tail_width(d.base, tail) * d.sigma * a;
      if (d.base == BaseDensity::Exponential) return Interval::continuous(0.0, w);
      return Interval::continuous(-w, w);
    }
  }
  return support(d, a);
}

/// Tail mass left out by the windows used for all expectations.
inline constexpr double kIntegrationTail = 1e-14;

struct IntegrationWindow {
  Interval range;
  std::vector<double> breaks;  // initial partition for adaptive quadrature
};

namespace detail {

// center ± spread·2^k for k ≥ -2, kept inside (lo, hi).
inline void add_geometric_breaks(std::vector<double>& out, double center, double spread, double lo, double hi) {
  if (center > lo && center < hi) out.push_back(center);
  for (double w = 0.25 * spread; w < 1e300; w *= 2.0) {
    const double left = center - w, right = center + w;
    const bool l_in = left > lo && left < hi, r_in = right > lo && right < hi;
    if (l_in) out.push_back(left);
    if (r_in) out.push_back(right);
    if (left <= lo && right >= hi) break;
  }
}

inline double spread_of(const OutputDistribution& d, double a) {
  switch (d.family) {
    case Family::Gaussian:
    case Family::StudentT:
    case Family::LocationFamily:
    case Family::LogNormal: return d.sigma;
    case Family::Exponential: return a;
    case Family::Gamma: return std::sqrt(d.n) * a;
    case Family::ScaleFamily: return d.sigma * a;
    default: return 1.0;
  }
}

}  // namespace detail

/// Truncated support and initial quadrature partition covering f(·|a) for
/// every action in `actions`.
inline IntegrationWindow integration_window(const OutputDistribution& d, std::span<const double> actions,
                                            double tail = kIntegrationTail) {
  require(!actions.empty(), "integration window needs at least one action");
  Interval range = quantile_bounds(d, actions[0], 1.0 - tail);
  for (double a : actions.subspan(1)) {
    const Interval q = quantile_bounds(d, a, 1.0 - tail);
    range.lo = std::min(range.lo, q.lo);
    range.hi = std::max(range.hi, q.hi);
  }
  IntegrationWindow w{range, {}};
  if (range.discrete()) return w;
  for (double a : actions) {
    if (d.family == Family::LogNormal) {
      std::vector<double> logs;
      detail::add_geometric_breaks(logs, a, d.sigma, std::log(range.lo), std::log(range.hi));
      for (double v : logs) w.breaks.push_back(std::exp(v));
    } else {
      detail::add_geometric_breaks(w.breaks, mean(d, a), detail::spread_of(d, a), range.lo, range.hi);
    }
  }
  std::sort(w.breaks.begin(), w.breaks.end());
  w.breaks.erase(std::unique(w.breaks.begin(), w.breaks.end()), w.breaks.end());
  return w;
}

inline IntegrationWindow integration_window(const OutputDistribution& d, double a, double tail = kIntegrationTail) {
  const std::array<double, 1> one{a};
  return integration_window(d, std::span<const double>(one), tail);
}

/// ∫ fn(y) dy over the window of f(·|a). `fn` is expected to carry the
/// density itself; `extra_breaks` mark known kinks.
template <class F>
auto integrate_over(const OutputDistribution& d, double a, F&& fn, const Tolerances& tol,
                    std::span<const double> extra_breaks = {}) {
  IntegrationWindow w = integration_window(d, a);
  w.breaks.insert(w.breaks.end(), extra_breaks.begin(), extra_breaks.end());
  return integrate(std::forward<F>(fn), w.range, tol, w.breaks);
}

/// E[fn(Y) | a].
template <class F>
auto expectation(const OutputDistribution& d, double a, F&& fn, const Tolerances& tol,
                 std::span<const double> extra_breaks = {}) {
  return integrate_over(
      d, a, [&](double y) { return fn(y) * std::exp(detail::log_density_unchecked(d, y, a)); }, tol,
      extra_breaks);
}

/// P(Y ≤ y | a), by quadrature over the truncated window.
inline double probability_at_most(const OutputDistribution& d, double y, double a, const Tolerances& tol) {
  const IntegrationWindow w = integration_window(d, a);
  if (y < w.range.lo) return 0.0;
  if (y >= w.range.hi) return 1.0;
  Interval part = w.range;
  if (part.discrete()) {
    part.hi = std::floor(y - part.lo + 1e-9) + part.lo;
    if (part.hi <= part.lo) return std::exp(detail::log_density_unchecked(d, part.lo, a));
  } else {
    part.hi = y;
  }
  const double p = integrate([&](double t) { return std::exp(detail::log_density_unchecked(d, t, a)); }, part, tol,
                             w.breaks);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace moralhazard
