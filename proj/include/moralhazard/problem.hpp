#pragma once

// A full cost-minimization instance: technology, preferences, intended
// action, reservation utility and solver settings.

#include <cmath>
#include <string>
#include <vector>

#include "moralhazard/distributions.hpp"
#include "moralhazard/error.hpp"
#include "moralhazard/numerics.hpp"
#include "moralhazard/preferences.hpp"

namespace moralhazard {

struct Model {
  OutputDistribution dist;
  Utility utility = Utility::log(1.0);
  Cost cost;
};

struct SolverGrids {
  int n_outcome = 201;     // grid solver outcome points
  int n_action = 200;      // grid solver action points
  int cache_points = 401;  // active-set outcome cache (continuous families)
  int deviation_grid = 200;
  int validation_grid = 2001;
  int max_deviations = 25;
};

struct ProblemSpec {
  Model model;
  double a0 = 1.0;
  double a_min = 0.0;
  double a_max = 2.0;
  double reservation_utility = 0.0;
  std::vector<double> sweep;  // optional list of reservation utilities
  Tolerances tol;
  SolverGrids grids;

  const OutputDistribution& dist() const { return model.dist; }
  const Utility& utility() const { return model.utility; }
  const Cost& cost() const { return model.cost; }

  Interval actions() const { return Interval::continuous(a_min, a_max); }

  ProblemSpec with_reservation_utility(double u_bar) const {
    ProblemSpec copy = *this;
    copy.reservation_utility = u_bar;
    return copy;
  }

  void validate() const {
    model.dist.validate();
    model.cost.validate();
    tol.validate();
    require(std::isfinite(a0) && std::isfinite(a_min) && std::isfinite(a_max), "actions must be finite");
    require(a_min >= 0.0, "action interval must satisfy a_min >= 0");
    require(a_min < a_max, "action interval must satisfy a_min < a_max");
    require(a0 > 0.0, "intended action a0 must be positive");
    require(a0 >= a_min && a0 <= a_max, "a0 must lie in the action interval");
    const Interval dom = model.dist.action_domain();
    if (a_min < dom.lo || a_max > dom.hi) {
      fail(ErrorKind::OutOfActionDomain, std::string(to_string(model.dist.family)) +
                                             " is undefined on part of the action interval [" +
                                             std::to_string(a_min) + ", " + std::to_string(a_max) + "]");
    }
    require(std::isfinite(reservation_utility), "reservation utility must be finite");
    for (double u : sweep) require(std::isfinite(u), "sweep utilities must be finite");
    require(grids.n_outcome >= 51, "grid solver needs n_outcome >= 51");
    require(grids.n_action >= 20, "grid solver needs n_action >= 20");
    require(grids.cache_points >= 51, "outcome cache needs at least 51 points");
    require(grids.deviation_grid >= 3, "deviation search grid needs at least 3 points");
    require(grids.validation_grid >= 3, "validation grid needs at least 3 points");
    require(grids.max_deviations >= 1, "max_deviations must be positive");
  }
};

}  // namespace moralhazard
