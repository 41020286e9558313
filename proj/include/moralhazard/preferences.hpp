#pragma once

// Agent preferences: utility of money with its inverse k (the cost of
// delivering utility), the limited-liability link function g and the
// effort cost c(a) = κ a^p.

#include <cmath>
#include <string>
#include <string_view>

#include "moralhazard/error.hpp"
#include "moralhazard/numerics.hpp"

namespace moralhazard {

enum class UtilityFamily { Log, CRRA, CARA };

inline std::string_view to_string(UtilityFamily f) {
  switch (f) {
    case UtilityFamily::Log: return "log";
    case UtilityFamily::CRRA: return "crra";
    case UtilityFamily::CARA: return "cara";
  }
  return "unknown";
}

struct LimitCheck {
  bool finite;
  double value;  // z·(d/dz)k′⁻¹(z) at the largest probe
  std::string warning;
};

class Utility {
 public:
  static Utility log(double w0) { return Utility(UtilityFamily::Log, w0, 1.0, 1.0); }
  static Utility crra(double gamma, double w0) { return Utility(UtilityFamily::CRRA, w0, gamma, 1.0); }
  static Utility cara(double alpha, double w0) { return Utility(UtilityFamily::CARA, w0, 1.0, alpha); }

  UtilityFamily family() const { return family_; }
  double w0() const { return w0_; }
  double gamma() const { return gamma_; }
  double alpha() const { return alpha_; }

  /// u(0): the utility floor imposed by limited liability.
  double u0() const { return u0_; }
  /// 1/u′(0): marginal costs at or below this pay nothing.
  double kink() const { return kink_; }
  /// sup of u over x ≥ 0 (infinite unless utility is bounded above).
  double u_sup() const {
    if (family_ == UtilityFamily::CARA) return 0.0;
    if (family_ == UtilityFamily::CRRA && gamma_ > 1.0) return 0.0;
    return kInf;
  }

  double u(double x) const {
    if (!(x >= 0.0)) fail(ErrorKind::BelowLimitedLiability, "transfer " + std::to_string(x) + " is negative");
    return u_unchecked(x);
  }

  /// k = u⁻¹: money needed to deliver utility v.
  double k(double v) const {
    check_floor(v);
    switch (family_) {
      case UtilityFamily::Log: return std::max(0.0, std::exp(v) - w0_);
      case UtilityFamily::CRRA: return std::max(0.0, std::pow((1.0 - gamma_) * v, 1.0 / (1.0 - gamma_)) - w0_);
      case UtilityFamily::CARA: return std::max(0.0, -std::log(-alpha_ * v) / alpha_ - w0_);
    }
    return 0.0;
  }

  double k_prime(double v) const {
    check_floor(v);
    switch (family_) {
      case UtilityFamily::Log: return std::exp(v);
      case UtilityFamily::CRRA: return std::pow((1.0 - gamma_) * v, gamma_ / (1.0 - gamma_));
      case UtilityFamily::CARA: return -1.0 / (alpha_ * v);
    }
    return 0.0;
  }

  double k_second(double v) const {
    check_floor(v);
    switch (family_) {
      case UtilityFamily::Log: return std::exp(v);
      case UtilityFamily::CRRA:
        return gamma_ * std::pow((1.0 - gamma_) * v, (2.0 * gamma_ - 1.0) / (1.0 - gamma_));
      case UtilityFamily::CARA: return 1.0 / (alpha_ * v * v);
    }
    return 0.0;
  }

  /// g(z) = k′⁻¹(max(1/u′(0), z)).
  double link_g(double z) const {
    const double m = std::max(kink_, z);
    if (m == kink_) return u0_;
    switch (family_) {
      case UtilityFamily::Log: return std::log(m);
      case UtilityFamily::CRRA: return std::pow(m, (1.0 - gamma_) / gamma_) / (1.0 - gamma_);
      case UtilityFamily::CARA: return -1.0 / (alpha_ * m);
    }
    return u0_;
  }

  /// g′(z); zero on the flat segment z ≤ 1/u′(0), right derivative at the kink.
  double link_g_prime(double z) const {
    if (z < kink_) return 0.0;
    switch (family_) {
      case UtilityFamily::Log: return 1.0 / z;
      case UtilityFamily::CRRA: return std::pow(z, (1.0 - 2.0 * gamma_) / gamma_) / gamma_;
      case UtilityFamily::CARA: return 1.0 / (alpha_ * z * z);
    }
    return 0.0;
  }

  /// k(g(z)) in closed form.
  double wage_of_marginal(double z) const {
    if (z <= kink_) return 0.0;
    switch (family_) {
      case UtilityFamily::Log: return z - w0_;
      case UtilityFamily::CRRA: return std::max(0.0, std::pow(z, 1.0 / gamma_) - w0_);
      case UtilityFamily::CARA: return std::max(0.0, std::log(z) - alpha_ * w0_) / alpha_;
    }
    return 0.0;
  }

  /// Numerical probe of z·(d/dz)k′⁻¹(z) as z → ∞. Non-finite limits produce
  /// a warning, not an error.
  LimitCheck marginal_limit_check() const {
    const double z1 = kink_ * 1e8, z2 = kink_ * 1e16;
    const double v1 = z1 * link_g_prime(z1), v2 = z2 * link_g_prime(z2);
    const bool finite = std::isfinite(v2) && (v2 <= v1 * (1.0 + 1e-6) || v2 - v1 <= 1e-6 * std::max(1.0, v1));
    std::string warning;
    if (!finite) {
      warning = std::string(to_string(family_)) + " utility: z g'(z) grows without bound (gamma < 1)";
    }
    return {finite, v2, warning};
  }

 private:
  Utility(UtilityFamily family, double w0, double gamma, double alpha)
      : family_(family), w0_(w0), gamma_(gamma), alpha_(alpha) {
    require(std::isfinite(w0), "w0 must be finite");
    switch (family_) {
      case UtilityFamily::Log:
        require(w0 > 0.0, "log utility requires w0 > 0");
        kink_ = w0;
        break;
      case UtilityFamily::CRRA:
        require(w0 > 0.0, "CRRA utility requires w0 > 0");
        require(gamma > 0.0 && std::isfinite(gamma) && gamma != 1.0, "CRRA requires gamma > 0 and gamma != 1");
        kink_ = std::pow(w0, gamma);
        break;
      case UtilityFamily::CARA:
        require(w0 >= 0.0, "CARA utility requires w0 >= 0");
        require(alpha > 0.0 && std::isfinite(alpha), "CARA requires alpha > 0");
        kink_ = std::exp(alpha * w0);
        break;
    }
    u0_ = u_unchecked(0.0);
    require(std::isfinite(u0_) && std::isfinite(kink_) && kink_ > 0.0, "utility floor is not finite");
  }

  double u_unchecked(double x) const {
    switch (family_) {
      case UtilityFamily::Log: return std::log(x + w0_);
      case UtilityFamily::CRRA: return std::pow(x + w0_, 1.0 - gamma_) / (1.0 - gamma_);
      case UtilityFamily::CARA: return -std::exp(-alpha_ * (x + w0_)) / alpha_;
    }
    return 0.0;
  }

  void check_floor(double v) const {
    if (!(v >= u0_ - 1e-12 * (1.0 + std::abs(u0_)))) {
      fail(ErrorKind::BelowLimitedLiability,
           "utility " + std::to_string(v) + " is below the limited-liability floor " + std::to_string(u0_));
    }
    if (v >= u_sup()) fail(ErrorKind::Infeasible, "utility " + std::to_string(v) + " is not attainable");
  }

  UtilityFamily family_;
  double w0_;
  double gamma_;
  double alpha_;
  double kink_ = 1.0;
  double u0_ = 0.0;
};

/// Effort cost c(a) = κ a^p.
struct Cost {
  double kappa = 1.0;
  double power = 2.0;

  void validate() const {
    require(kappa > 0.0 && std::isfinite(kappa), "cost kappa must be positive");
    require(power > 1.0 && std::isfinite(power), "cost power must exceed 1");
  }

  double operator()(double a) const { return value(a); }

  double value(double a) const {
    check(a);
    return kappa * std::pow(a, power);
  }
  double d1(double a) const {
    check(a);
    return a == 0.0 ? 0.0 : kappa * power * std::pow(a, power - 1.0);
  }
  double d2(double a) const {
    check(a);
    if (a == 0.0) return power == 2.0 ? 2.0 * kappa : (power > 2.0 ? 0.0 : kInf);
    return kappa * power * (power - 1.0) * std::pow(a, power - 2.0);
  }

 private:
  static void check(double a) {
    if (!(a >= 0.0)) fail(ErrorKind::OutOfActionDomain, "effort cost needs a >= 0, got " + std::to_string(a));
  }
};

}  // namespace moralhazard
