#pragma once

// Canonical contracts v(y) = g(λ + μ S(y|a0) + Σ μ̂ᵢ (1 − f(y|âᵢ)/f(y|a0))),
// their pointwise wages, the agent's expected utility and its action
// derivatives, the expected wage and zero-pay diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "moralhazard/distributions.hpp"
#include "moralhazard/error.hpp"
#include "moralhazard/numerics.hpp"
#include "moralhazard/preferences.hpp"
#include "moralhazard/problem.hpp"

namespace moralhazard {

struct Deviation {
  double a_hat;
  double mu_hat;
};

class CanonicalContract {
 public:
  /// `scan_actions` widens the outcome window searched for kinks (points
  /// where the contract meets the limited-liability floor); a0 is always
  /// included.
  CanonicalContract(Model model, double a0, double lambda, double mu, std::vector<Deviation> deviations = {},
                    std::span<const double> scan_actions = {})
      : model_(std::move(model)), a0_(a0), lambda_(lambda), mu_(mu), deviations_(std::move(deviations)) {
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be finite and nonnegative");
    require(std::isfinite(mu), "mu must be finite");
    require(a0 > 0.0, "a0 must be positive");
    model_.dist.validate_action(a0);
    for (const auto& dev : deviations_) {
      require(std::isfinite(dev.a_hat) && std::isfinite(dev.mu_hat) && dev.mu_hat >= 0.0,
              "deviation multipliers must be finite and nonnegative");
      require(dev.a_hat != a0, "deviation action must differ from a0");
      model_.dist.validate_action(dev.a_hat);
    }
    std::vector<double> actions{a0};
    actions.insert(actions.end(), scan_actions.begin(), scan_actions.end());
    locate_kinks(actions);
  }

  const Model& model() const { return model_; }
  double a0() const { return a0_; }
  double lambda() const { return lambda_; }
  double mu() const { return mu_; }
  const std::vector<Deviation>& deviations() const { return deviations_; }
  /// Outcomes where the contract meets the utility floor, sorted.
  const std::vector<double>& kinks() const { return kinks_; }

  /// λ + μ S(y|a0) + Σ μ̂ᵢ (1 − f(y|âᵢ)/f(y|a0)), the argument of g.
  double marginal(double y) const {
    detail::check_point(model_.dist, y, a0_);
    return marginal_unchecked(y);
  }

  double marginal_unchecked(double y) const {
    double z = lambda_ + mu_ * detail::score_terms_unchecked(model_.dist, y, a0_).first;
    if (!deviations_.empty()) {
      const double l0 = detail::log_density_unchecked(model_.dist, y, a0_);
      for (const auto& dev : deviations_) {
        if (dev.mu_hat == 0.0) continue;
        z += dev.mu_hat * (1.0 - log_ratio_exp(detail::log_density_unchecked(model_.dist, y, dev.a_hat) - l0));
      }
    }
    return z;
  }

  /// v(y), always at least u(0).
  double utility(double y) const { return model_.utility.link_g(marginal(y)); }
  double utility_unchecked(double y) const { return model_.utility.link_g(marginal_unchecked(y)); }

  /// w(y) = k(v(y)), always nonnegative.
  double wage(double y) const { return model_.utility.wage_of_marginal(marginal(y)); }
  double wage_unchecked(double y) const { return model_.utility.wage_of_marginal(marginal_unchecked(y)); }

  /// exp(x) for a log density ratio, clamped so the deviation terms stay finite.
  static double log_ratio_exp(double x) { return std::exp(std::min(x, 600.0)); }

 private:
  void locate_kinks(std::span<const double> actions) {
    if (model_.dist.discrete()) return;
    const double kink = model_.utility.kink();
    if (deviations_.empty() && model_.dist.score_shape().monotone) {
      // v meets the floor where the score crosses (kink − λ)/μ.
      if (mu_ <= 0.0) return;
      const double s_bar = (kink - lambda_) / mu_;
      const Interval image = score_image(model_.dist, a0_);
      if (s_bar > image.lo && s_bar < image.hi) kinks_.push_back(score_inverse(model_.dist, s_bar, a0_).y);
      return;
    }
    const IntegrationWindow w = integration_window(model_.dist, actions);
    std::vector<double> edges{w.range.lo};
    edges.insert(edges.end(), w.breaks.begin(), w.breaks.end());
    edges.push_back(w.range.hi);
    auto side = [&](double y) { return marginal_unchecked(y) > kink; };
    constexpr int kSub = 16;
    double prev_y = edges.front();
    bool prev_side = side(prev_y);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      for (int j = 1; j <= kSub; ++j) {
        const double y = edges[i] + (edges[i + 1] - edges[i]) * j / kSub;
        const bool s = side(y);
        if (s != prev_side) {
          double lo = prev_y, hi = y;
          for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (side(mid) == prev_side ? lo : hi) = mid;
          }
          kinks_.push_back(0.5 * (lo + hi));
        }
        prev_y = y;
        prev_side = s;
      }
    }
  }

  Model model_;
  double a0_;
  double lambda_;
  double mu_;
  std::vector<Deviation> deviations_;
  std::vector<double> kinks_;
};

inline double contract_utility(const CanonicalContract& c, double y) { return c.utility(y); }
inline double contract_wage(const CanonicalContract& c, double y) { return c.wage(y); }

struct UtilityProfile {
  double U;     // U(v, a)
  double U_a;   // ∂U/∂a
  double U_aa;  // ∂²U/∂a²
};

/// U(v,a), U_a and U_aa from one vector quadrature of v·(f, f_a, f_aa).
inline UtilityProfile agent_utility_profile(const CanonicalContract& c, double a, const Tolerances& tol = {}) {
  const Model& m = c.model();
  m.dist.validate_action(a);
  auto integrand = [&](double y) {
    const double f = std::exp(detail::log_density_unchecked(m.dist, y, a));
    const auto [s, t] = detail::score_terms_unchecked(m.dist, y, a);
    const double v = c.utility_unchecked(y);
    Eigen::Vector3d out(v * f, v * s * f, v * (s * s + t) * f);
    return Eigen::VectorXd(out);
  };
  const Eigen::VectorXd r = integrate_over(m.dist, a, integrand, tol, c.kinks());
  return {r[0] - m.cost.value(a), r[1] - m.cost.d1(a), r[2] - m.cost.d2(a)};
}

/// U(v,a) = ∫ v(y) f(y|a) dy − c(a).
inline double agent_utility(const CanonicalContract& c, double a, const Tolerances& tol = {}) {
  const Model& m = c.model();
  m.dist.validate_action(a);
  const double value = integrate_over(
      m.dist, a,
      [&](double y) { return c.utility_unchecked(y) * std::exp(detail::log_density_unchecked(m.dist, y, a)); }, tol,
      c.kinks());
  return value - m.cost.value(a);
}

struct UtilityDerivs {
  double U_a;
  double U_aa;
};

inline UtilityDerivs agent_utility_derivs(const CanonicalContract& c, double a, const Tolerances& tol = {}) {
  const auto p = agent_utility_profile(c, a, tol);
  return {p.U_a, p.U_aa};
}

namespace detail {

// Δg(y) = (g(λ + μS) − g(λ)) / (μS), with the limit g′(λ) where |μS| is tiny.
inline double delta_g(const Utility& u, double lambda, double mu_s) {
  if (std::abs(mu_s) < 1e-12) return u.link_g_prime(lambda);
  return (u.link_g(lambda + mu_s) - u.link_g(lambda)) / mu_s;
}

}  // namespace detail

/// The same profile through the Δg decomposition
/// U = g(λ) + μ ∫ Δg S0 f dy − c, U_a = μ ∫ Δg S0 f_a dy − c′, U_aa = μ ∫ Δg S0 f_aa dy − c″,
/// where S0 = S(y|a0). Only defined for contracts without deviation terms.
inline UtilityProfile agent_utility_profile_delta_form(const CanonicalContract& c, double a,
                                                       const Tolerances& tol = {}) {
  require(c.deviations().empty(), "the delta-g form needs a contract without deviation terms");
  const Model& m = c.model();
  m.dist.validate_action(a);
  const double lambda = c.lambda(), mu = c.mu(), a0 = c.a0();
  auto integrand = [&](double y) {
    const double f = std::exp(detail::log_density_unchecked(m.dist, y, a));
    const auto [s, t] = detail::score_terms_unchecked(m.dist, y, a);
    const double s0 = detail::score_terms_unchecked(m.dist, y, a0).first;
    const double w = detail::delta_g(m.utility, lambda, mu * s0) * s0 * f;
    Eigen::Vector3d out(w, w * s, w * (s * s + t));
    return Eigen::VectorXd(out);
  };
  const Eigen::VectorXd r = integrate_over(m.dist, a, integrand, tol, c.kinks());
  return {m.utility.link_g(lambda) + mu * r[0] - m.cost.value(a), mu * r[1] - m.cost.d1(a),
          mu * r[2] - m.cost.d2(a)};
}

inline constexpr double kWageOverflowGuard = 1e300;

/// W(v,a) = ∫ k(v(y)) f(y|a) dy.
inline double expected_wage(const CanonicalContract& c, double a, const Tolerances& tol = {}) {
  const Model& m = c.model();
  m.dist.validate_action(a);
  double value = 0.0;
  try {
    value = integrate_over(
        m.dist, a,
        [&](double y) { return c.wage_unchecked(y) * std::exp(detail::log_density_unchecked(m.dist, y, a)); }, tol,
        c.kinks());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFinite) fail(ErrorKind::Diverged, "expected wage overflows");
    throw;
  }
  if (!(value <= kWageOverflowGuard)) fail(ErrorKind::Diverged, "expected wage exceeds the overflow guard");
  return std::max(0.0, value);
}

struct ThresholdReport {
  double threshold_score;    // S̲: largest score at which the wage is zero
  double threshold_outcome;  // y̲; NaN when the score cannot be inverted
  double zero_pay_prob;      // P(w(Y) = 0 | a0)
};

/// Zero-pay diagnostics of a relaxed contract (μ > 0, no deviation terms).
inline ThresholdReport threshold_report(const CanonicalContract& c, const Tolerances& tol = {}) {
  require(c.mu() > 0.0, "threshold report needs mu > 0");
  require(c.deviations().empty(), "threshold report is defined for contracts without deviation terms");
  const Model& m = c.model();
  const double a0 = c.a0();
  const double s_bar = (m.utility.kink() - c.lambda()) / c.mu();
  ThresholdReport r{s_bar, std::numeric_limits<double>::quiet_NaN(), 0.0};

  if (!m.dist.score_shape().monotone) {
    const double kink = m.utility.kink();
    r.zero_pay_prob = integrate_over(
        m.dist, a0,
        [&](double y) {
          return c.marginal_unchecked(y) <= kink ? std::exp(detail::log_density_unchecked(m.dist, y, a0)) : 0.0;
        },
        tol, c.kinks());
    r.zero_pay_prob = std::clamp(r.zero_pay_prob, 0.0, 1.0);
    return r;
  }

  const Interval image = score_image(m.dist, a0);
  const Interval sup = support(m.dist, a0);
  if (s_bar < image.lo) {
    r.threshold_outcome = sup.lo;
    r.zero_pay_prob = 0.0;
    return r;
  }
  if (s_bar >= image.hi) {
    r.threshold_outcome = sup.hi;
    r.zero_pay_prob = 1.0;
    return r;
  }
  const ScoreInverse inv = score_inverse(m.dist, s_bar, a0);
  r.threshold_outcome = inv.y;
  r.zero_pay_prob = probability_at_most(m.dist, inv.y, a0, tol);
  return r;
}

}  // namespace moralhazard
