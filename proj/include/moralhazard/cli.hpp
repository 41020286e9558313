#pragma once

// Command-line front end: JSON configs, the seven commands, and their CSV and
// JSON artifacts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "moralhazard/active_set_solver.hpp"
#include "moralhazard/contracts.hpp"
#include "moralhazard/distributions.hpp"
#include "moralhazard/error.hpp"
#include "moralhazard/grid_solver.hpp"
#include "moralhazard/preferences.hpp"
#include "moralhazard/problem.hpp"
#include "moralhazard/relaxed_solver.hpp"
#include "moralhazard/validator.hpp"

namespace moralhazard::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum class Command { Solve, Relaxed, Sweep, Pareto, Validate, CompareSolvers, Bench };

inline constexpr std::array<std::pair<std::string_view, Command>, 7> kCommands{{
    {"solve", Command::Solve},
    {"relaxed", Command::Relaxed},
    {"sweep", Command::Sweep},
    {"pareto", Command::Pareto},
    {"validate", Command::Validate},
    {"compare-solvers", Command::CompareSolvers},
    {"bench", Command::Bench},
}};

inline std::string_view to_string(Command c) {
  for (const auto& [name, cmd] : kCommands) {
    if (cmd == c) return name;
  }
  return "unknown";
}

inline Command parse_command(std::string_view name) {
  for (const auto& [n, cmd] : kCommands) {
    if (n == name) return cmd;
  }
  fail(ErrorKind::ParseError, "unknown command '" + std::string(name) + "'");
}

// Frozen CSV headers.
namespace header {
inline constexpr std::string_view kContract = "y_thousand_usd,wage_thousand_usd,utility_utils";
inline constexpr std::string_view kActionCurve = "action_thousand_usd,expected_utility_utils";
inline constexpr std::string_view kSweep =
    "reservation_utility_utils,valid,best_action_thousand_usd,max_gain_utils,zero_pay_prob";
inline constexpr std::string_view kSweepContracts = "reservation_utility_utils,y_thousand_usd,wage_thousand_usd";
inline constexpr std::string_view kSweepActions =
    "reservation_utility_utils,action_thousand_usd,expected_utility_utils";
inline constexpr std::string_view kFrontier =
    "reservation_utility_utils,relaxed_wage_thousand_usd,full_wage_thousand_usd,foa_valid,lambda,mu,ir_binding,"
    "feasible";
inline constexpr std::string_view kComparison =
    "y_thousand_usd,wage_active_thousand_usd,wage_grid_thousand_usd,difference_thousand_usd,density,stable";
inline constexpr std::string_view kComparisonActions =
    "action_thousand_usd,utility_active_utils,utility_grid_utils";
inline constexpr std::string_view kBench =
    "run,wall_time_ms,provenance,expected_wage_thousand_usd,deviations";
}  // namespace header

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(ErrorKind::ParseError, "field '" + path_ + "' must be an object");
  }

  std::string field(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  bool has(std::string_view key) const { return obj_.contains(std::string(key)); }

  const json& get(std::string_view key) const {
    seen_.insert(std::string(key));
    const auto it = obj_.find(std::string(key));
    if (it == obj_.end()) fail(ErrorKind::ParseError, "missing field '" + field(key) + "'");
    return *it;
  }

  double number(std::string_view key) const {
    const json& v = get(key);
    if (!v.is_number()) fail(ErrorKind::ParseError, "field '" + field(key) + "' must be a number");
    return v.get<double>();
  }

  double number_or(std::string_view key, double fallback) const { return has(key) ? number(key) : fallback; }

  int integer(std::string_view key) const {
    const json& v = get(key);
    if (!v.is_number_integer()) fail(ErrorKind::ParseError, "field '" + field(key) + "' must be an integer");
    return v.get<int>();
  }

  int integer_or(std::string_view key, int fallback) const { return has(key) ? integer(key) : fallback; }

  std::string string(std::string_view key) const {
    const json& v = get(key);
    if (!v.is_string()) fail(ErrorKind::ParseError, "field '" + field(key) + "' must be a string");
    return v.get<std::string>();
  }

  // Every key present must have been read.
  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) fail(ErrorKind::ParseError, "unknown field '" + field(key) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

// Runs `build`, prefixing validation failures with the field they concern.
template <class F>
auto validated(const std::string& field, F&& build) {
  try {
    return build();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ValidationError) throw;
    std::string msg = e.what();
    const std::string prefix = "ValidationError: ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    fail(ErrorKind::ValidationError, field + ": " + msg);
  }
}

inline BaseDensity parse_base(const std::string& name, const std::string& field) {
  for (BaseDensity b : {BaseDensity::Normal, BaseDensity::Logistic, BaseDensity::Exponential}) {
    if (name == moralhazard::to_string(b)) return b;
  }
  fail(ErrorKind::ParseError, "field '" + field + "' must be one of normal, logistic, exponential");
}

inline OutputDistribution parse_distribution(const json& j) {
  const Fields f(j, "distribution");
  const std::string family = f.string("family");
  const OutputDistribution d = validated("distribution", [&]() -> OutputDistribution {
    if (family == "gaussian") return OutputDistribution::gaussian(f.number("sigma"));
    if (family == "lognormal") return OutputDistribution::lognormal(f.number("sigma"));
    if (family == "student_t") return OutputDistribution::student_t(f.number("sigma"), f.number("nu"));
    if (family == "poisson") return OutputDistribution::poisson();
    if (family == "exponential") return OutputDistribution::exponential();
    if (family == "bernoulli") return OutputDistribution::bernoulli();
    if (family == "geometric") return OutputDistribution::geometric();
    if (family == "binomial") return OutputDistribution::binomial(f.integer("n"));
    if (family == "gamma") return OutputDistribution::gamma(f.number("shape"));
    if (family == "location") {
      return OutputDistribution::location(parse_base(f.string("base"), f.field("base")), f.number_or("scale", 1.0));
    }
    if (family == "scale") {
      return OutputDistribution::scale_family(parse_base(f.string("base"), f.field("base")),
                                              f.number_or("scale", 1.0));
    }
    fail(ErrorKind::ParseError, "field 'distribution.family': unknown family '" + family + "'");
  });
  f.finish();
  return d;
}

inline Utility parse_utility(const json& j) {
  const Fields f(j, "utility");
  const std::string family = f.string("family");
  const Utility u = validated("utility", [&]() -> Utility {
    if (family == "log") return Utility::log(f.number("w0"));
    if (family == "crra") return Utility::crra(f.number("gamma"), f.number("w0"));
    if (family == "cara") return Utility::cara(f.number("alpha"), f.number("w0"));
    fail(ErrorKind::ParseError, "field 'utility.family': unknown family '" + family + "'");
  });
  f.finish();
  return u;
}

inline Cost parse_cost(const json& j) {
  const Fields f(j, "cost");
  Cost c{f.number("kappa"), f.number("power")};
  f.finish();
  validated("cost", [&] {
    c.validate();
    return 0;
  });
  return c;
}

inline Tolerances parse_tolerances(const json& j) {
  const Fields f(j, "tolerances");
  Tolerances t;
  t.abs_int = f.number_or("abs_int", t.abs_int);
  t.rel_int = f.number_or("rel_int", t.rel_int);
  t.root_tol = f.number_or("root_tol", t.root_tol);
  t.grad_tol = f.number_or("grad_tol", t.grad_tol);
  t.deviation_tol = f.number_or("deviation_tol", t.deviation_tol);
  t.kkt_tol = f.number_or("kkt_tol", t.kkt_tol);
  f.finish();
  return t;
}

inline SolverGrids parse_grids(const json& j) {
  const Fields f(j, "grids");
  SolverGrids g;
  g.n_outcome = f.integer_or("n_outcome", g.n_outcome);
  g.n_action = f.integer_or("n_action", g.n_action);
  g.cache_points = f.integer_or("cache_points", g.cache_points);
  g.deviation_grid = f.integer_or("deviation_grid", g.deviation_grid);
  g.validation_grid = f.integer_or("validation_grid", g.validation_grid);
  g.max_deviations = f.integer_or("max_deviations", g.max_deviations);
  f.finish();
  return g;
}

}  // namespace detail

/// ProblemSpec from a parsed JSON document. A list-valued reservation_utility
/// becomes the sweep, with its first entry as the single-point value.
inline ProblemSpec spec_from_json(const json& j) {
  const detail::Fields f(j, "");
  ProblemSpec p;
  p.model.dist = detail::parse_distribution(f.get("distribution"));
  p.model.utility = detail::parse_utility(f.get("utility"));
  p.model.cost = detail::parse_cost(f.get("cost"));
  p.a0 = f.number("a0");
  const json& interval = f.get("action_interval");
  if (!interval.is_array() || interval.size() != 2 || !interval[0].is_number() || !interval[1].is_number()) {
    fail(ErrorKind::ParseError, "field 'action_interval' must be a two-number array [a_min, a_max]");
  }
  p.a_min = interval[0].get<double>();
  p.a_max = interval[1].get<double>();
  const json& u = f.get("reservation_utility");
  if (u.is_number()) {
    p.reservation_utility = u.get<double>();
  } else if (u.is_array() && !u.empty() && std::all_of(u.begin(), u.end(), [](const json& x) { return x.is_number(); })) {
    for (const json& x : u) p.sweep.push_back(x.get<double>());
    p.reservation_utility = p.sweep.front();
  } else {
    fail(ErrorKind::ParseError, "field 'reservation_utility' must be a number or a nonempty list of numbers");
  }
  if (f.has("tolerances")) p.tol = detail::parse_tolerances(f.get("tolerances"));
  if (f.has("grids")) p.grids = detail::parse_grids(f.get("grids"));
  f.finish();
  p.validate();
  return p;
}

inline ProblemSpec parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, std::string("malformed JSON: ") + e.what());
  }
  return spec_from_json(j);
}

/// Reads and validates a JSON config file.
inline ProblemSpec parse_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ParseError, "cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const OutputDistribution& d) {
  json j{{"family", moralhazard::to_string(d.family)}};
  switch (d.family) {
    case Family::Gaussian:
    case Family::LogNormal: j["sigma"] = d.sigma; break;
    case Family::StudentT:
      j["sigma"] = d.sigma;
      j["nu"] = d.nu;
      break;
    case Family::Binomial: j["n"] = static_cast<int>(d.n); break;
    case Family::Gamma: j["shape"] = d.n; break;
    case Family::LocationFamily:
    case Family::ScaleFamily:
      j["base"] = moralhazard::to_string(d.base);
      j["scale"] = d.sigma;
      break;
    default: break;
  }
  return j;
}

inline json to_json(const Utility& u) {
  json j{{"family", moralhazard::to_string(u.family())}, {"w0", u.w0()}};
  if (u.family() == UtilityFamily::CRRA) j["gamma"] = u.gamma();
  if (u.family() == UtilityFamily::CARA) j["alpha"] = u.alpha();
  return j;
}

/// The config document that reproduces `p`.
inline json to_json(const ProblemSpec& p) {
  json j;
  j["distribution"] = to_json(p.dist());
  j["utility"] = to_json(p.utility());
  j["cost"] = {{"kappa", p.cost().kappa}, {"power", p.cost().power}};
  j["a0"] = p.a0;
  j["action_interval"] = {p.a_min, p.a_max};
  if (p.sweep.empty()) {
    j["reservation_utility"] = p.reservation_utility;
  } else {
    j["reservation_utility"] = p.sweep;
  }
  j["tolerances"] = {{"abs_int", p.tol.abs_int},   {"rel_int", p.tol.rel_int},
                     {"root_tol", p.tol.root_tol}, {"grad_tol", p.tol.grad_tol},
                     {"deviation_tol", p.tol.deviation_tol}, {"kkt_tol", p.tol.kkt_tol}};
  j["grids"] = {{"n_outcome", p.grids.n_outcome},           {"n_action", p.grids.n_action},
                {"cache_points", p.grids.cache_points},     {"deviation_grid", p.grids.deviation_grid},
                {"validation_grid", p.grids.validation_grid}, {"max_deviations", p.grids.max_deviations}};
  return j;
}

inline json to_json(const CanonicalContract& c) {
  json devs = json::array();
  for (const auto& d : c.deviations()) devs.push_back({{"a_hat", d.a_hat}, {"mu_hat", d.mu_hat}});
  return {{"a0", c.a0()}, {"lambda", c.lambda()}, {"mu", c.mu()}, {"deviations", devs}};
}

/// Rebuilds a contract serialized by to_json on the given model.
inline CanonicalContract contract_from_json(const json& j, const Model& model) {
  std::vector<Deviation> devs;
  std::vector<double> scan;
  for (const json& d : j.at("deviations")) {
    devs.push_back({d.at("a_hat").get<double>(), d.at("mu_hat").get<double>()});
    scan.push_back(devs.back().a_hat);
  }
  return CanonicalContract(model, j.at("a0").get<double>(), j.at("lambda").get<double>(), j.at("mu").get<double>(),
                           std::move(devs), scan);
}

inline json to_json(const FoaReport& r) {
  json maxima = json::array();
  for (const auto& m : r.local_maxima) maxima.push_back({{"action", m.action}, {"utility", m.utility}});
  return {{"valid", r.valid},
          {"best_action", r.best_action},
          {"max_gain", r.max_gain},
          {"local_maxima", maxima},
          {"concave_everywhere", r.concave_everywhere},
          {"min_U_aa", r.min_U_aa},
          {"max_U_aa", r.max_U_aa},
          {"zero_pay_prob", r.zero_pay_prob},
          {"intended_utility", r.intended_utility}};
}

inline json to_json(const SolveResult& r) {
  json devs = json::array();
  for (std::size_t i = 0; i < r.deviations_added.size(); ++i) {
    devs.push_back({{"a_hat", r.deviations_added[i]}, {"mu_hat", r.mu_hat[i]}});
  }
  json j{{"provenance", moralhazard::to_string(r.provenance)},
         {"expected_wage", r.expected_wage},
         {"multipliers", {{"lambda", r.lambda}, {"mu", r.mu}, {"mu_hat", r.mu_hat}}},
         {"deviations_added", devs},
         {"contract", to_json(r.contract)},
         {"foa_report", to_json(r.foa_report)},
         {"wall_time_ms", r.wall_time.count()},
         {"iterations", r.iterations},
         {"dual_value", r.dual_value},
         {"ir_residual", r.ir_residual},
         {"lic_residual", r.lic_residual}};
  if (!r.fallback_reason.empty()) j["fallback_reason"] = r.fallback_reason;
  if (r.grid) j["grid"] = {{"expected_wage", r.grid->expected_wage}, {"kkt_residual", r.grid->kkt_residual}};
  return j;
}

inline json error_json(const std::string& kind, const std::string& message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

// ---------------------------------------------------------------------------
// Output

/// Shortest text that reads back to the same double; NaN as "nan".
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline std::string fmt(bool b) { return b ? "true" : "false"; }
inline std::string fmt(int i) { return std::to_string(i); }
inline std::string fmt(std::size_t i) { return std::to_string(i); }
inline std::string fmt(std::string_view s) { return std::string(s); }

class Csv {
 public:
  explicit Csv(std::string_view header) : text_(std::string(header) + "\n") {}

  template <class... T>
  void row(const T&... cells) {
    bool first = true;
    ((text_ += (first ? "" : ","), text_ += fmt(cells), first = false), ...);
    text_ += "\n";
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

/// Writes via a temporary file in the same directory and renames it into place.
inline void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::ValidationError, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) fail(ErrorKind::ValidationError, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorKind::ValidationError, "cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

inline void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Commands

struct RunOptions {
  std::optional<std::pair<double, double>> seed_multipliers;  // (λ, μ)
  int repeats = 20;
  int curve_points = 201;
  int contract_points = 401;
};

/// Outcomes at which wage schedules are tabulated: every lattice point of the
/// a0 window for discrete families; otherwise `n` points over the central
/// region of the outcome distribution across the action interval.
inline std::vector<double> display_outcomes(const ProblemSpec& p, int n) {
  const auto& d = p.dist();
  if (d.discrete()) {
    const Interval w = quantile_bounds(d, p.a0, 1.0 - 1e-9);
    std::vector<double> ys;
    for (std::size_t k = 0; k < w.lattice_size(); ++k) ys.push_back(w.lo + static_cast<double>(k) * *w.step);
    return ys;
  }
  const double a_lo = std::max(p.a_min, p.a0 * 1e-3);
  Interval lo_q = quantile_bounds(d, a_lo, 1.0 - 1e-4), hi_q = quantile_bounds(d, p.a_max, 1.0 - 1e-4);
  double lo = lo_q.lo, hi = hi_q.hi;
  // Heavy tails: stay within a few scale units of the action means.
  const double spread_lo = moralhazard::detail::spread_of(d, a_lo), spread_hi = moralhazard::detail::spread_of(d, p.a_max);
  if (d.family != Family::LogNormal) {
    lo = std::max(lo, mean(d, a_lo) - 6.0 * spread_lo);
    hi = std::min(hi, mean(d, p.a_max) + 6.0 * spread_hi);
  }
  const Interval sup = support(d, p.a0);
  lo = std::max(lo, sup.lo);
  hi = std::min(hi, sup.hi);
  std::vector<double> ys(n);
  for (int i = 0; i < n; ++i) ys[i] = i + 1 == n ? hi : lo + (hi - lo) * i / (n - 1);
  return ys;
}

namespace detail {

inline std::string contract_csv(const CanonicalContract& c, const std::vector<double>& ys) {
  Csv csv(header::kContract);
  for (double y : ys) csv.row(y, c.wage(y), c.utility(y));
  return csv.text();
}

inline std::string action_curve_csv(const CanonicalContract& c, const ProblemSpec& p, int n) {
  Csv csv(header::kActionCurve);
  for (double a : uniform_actions(p, n)) csv.row(a, agent_utility(c, a, p.tol));
  return csv.text();
}

// Evaluates `fn` on every element, in parallel, keeping input order.
template <class T, class F>
auto parallel_map(const std::vector<T>& items, F&& fn) {
  using R = decltype(fn(items.front()));
  std::vector<std::optional<R>> out(items.size());
  const std::size_t workers = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  for (std::size_t start = 0; start < items.size(); start += workers) {
    std::vector<std::future<R>> jobs;
    const std::size_t stop = std::min(items.size(), start + workers);
    for (std::size_t i = start; i < stop; ++i) jobs.push_back(std::async(std::launch::async, fn, items[i]));
    for (std::size_t i = start; i < stop; ++i) out[i].emplace(jobs[i - start].get());
  }
  std::vector<R> result;
  for (auto& r : out) result.push_back(std::move(*r));
  return result;
}

inline std::vector<double> utility_list(const ProblemSpec& p) {
  return p.sweep.empty() ? std::vector<double>{p.reservation_utility} : p.sweep;
}

inline void require_single_point(const ProblemSpec& p, Command c) {
  if (p.sweep.size() > 1) {
    fail(ErrorKind::ValidationError,
         "command '" + std::string(to_string(c)) + "' needs a single reservation_utility, not a list");
  }
}

inline SolveOptions solve_options(const RunOptions& o) {
  SolveOptions s;
  if (o.seed_multipliers) {
    s.lambda_seed = o.seed_multipliers->first;
    s.mu_seed = o.seed_multipliers->second;
  }
  return s;
}

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
}

inline void run_solve(const ProblemSpec& p, const fs::path& out, const RunOptions& o) {
  const SolveResult r = solve(p, solve_options(o));
  json j = to_json(r);
  j["command"] = "solve";
  j["problem"] = to_json(p);
  write_json(out / "result.json", j);
  atomic_write(out / "contract.csv", contract_csv(r.contract, display_outcomes(p, o.contract_points)));
  atomic_write(out / "action_curve.csv", action_curve_csv(r.contract, p, o.curve_points));
}

inline void run_relaxed(const ProblemSpec& p, const fs::path& out, const RunOptions& o) {
  RelaxedOptions ro;
  if (o.seed_multipliers) {
    ro.lambda_seed = o.seed_multipliers->first;
    ro.mu_seed = o.seed_multipliers->second;
  }
  const RelaxedSolution s = solve_relaxed(p, ro);
  json j{{"command", "relaxed"},
         {"problem", to_json(p)},
         {"lambda", s.lambda_star},
         {"mu", s.mu_star},
         {"expected_wage", s.expected_wage},
         {"achieved_utility", s.achieved_utility},
         {"ir_binding", s.ir_binding},
         {"contract", to_json(s.contract)}};
  if (s.mu_star > 0.0) {
    const ThresholdReport t = threshold_report(s.contract, p.tol);
    j["threshold"] = {{"threshold_score", t.threshold_score},
                      {"threshold_outcome", t.threshold_outcome},
                      {"zero_pay_prob", t.zero_pay_prob}};
  }
  write_json(out / "result.json", j);
  atomic_write(out / "contract.csv", contract_csv(s.contract, display_outcomes(p, o.contract_points)));
  atomic_write(out / "action_curve.csv", action_curve_csv(s.contract, p, o.curve_points));
}

inline void run_validate(const ProblemSpec& p, const fs::path& out, const RunOptions& o) {
  const RelaxedSolution s = solve_relaxed(p);
  const FoaReport r = validate_foa(s.contract, p);
  write_json(out / "validation.json", {{"command", "validate"},
                                       {"problem", to_json(p)},
                                       {"reservation_utility", p.reservation_utility},
                                       {"contract", to_json(s.contract)},
                                       {"foa_report", to_json(r)}});
  atomic_write(out / "action_curve.csv", action_curve_csv(s.contract, p, o.curve_points));
}

inline void run_sweep(const ProblemSpec& p, const fs::path& out, const RunOptions& o) {
  std::vector<double> us = utility_list(p);
  std::sort(us.begin(), us.end());
  struct Point {
    double u;
    CanonicalContract contract;
    FoaReport report;
    std::string contracts;
    std::string actions;
  };
  const std::vector<double> ys = display_outcomes(p, o.contract_points);
  const std::vector<double> as = uniform_actions(p, o.curve_points);
  const auto points = parallel_map(us, [&](double u) {
    const ProblemSpec q = p.with_reservation_utility(u);
    const RelaxedSolution s = solve_relaxed(q);
    Point pt{u, s.contract, validate_foa(s.contract, q), {}, {}};
    for (double y : ys) pt.contracts += fmt(u) + "," + fmt(y) + "," + fmt(s.contract.wage(y)) + "\n";
    for (double a : as) pt.actions += fmt(u) + "," + fmt(a) + "," + fmt(agent_utility(s.contract, a, q.tol)) + "\n";
    return pt;
  });
  Csv rows(header::kSweep);
  std::string contracts = std::string(header::kSweepContracts) + "\n";
  std::string actions = std::string(header::kSweepActions) + "\n";
  json summary = json::array();
  std::optional<double> last_invalid, first_valid_after;
  for (const auto& pt : points) {
    rows.row(pt.u, pt.report.valid, pt.report.best_action, pt.report.max_gain, pt.report.zero_pay_prob);
    contracts += pt.contracts;
    actions += pt.actions;
    summary.push_back({{"reservation_utility", pt.u}, {"foa_report", to_json(pt.report)}, {"contract", to_json(pt.contract)}});
    if (!pt.report.valid) last_invalid = pt.u;
  }
  if (last_invalid) {
    for (const auto& pt : points) {
      if (pt.u > *last_invalid && pt.report.valid) {
        first_valid_after = pt.u;
        break;
      }
    }
  }
  json j{{"command", "sweep"}, {"problem", to_json(p)}, {"points", summary}};
  j["transition"] = (last_invalid && first_valid_after)
                        ? json{{"last_invalid", *last_invalid}, {"first_valid", *first_valid_after}}
                        : json(nullptr);
  atomic_write(out / "sweep.csv", rows.text());
  atomic_write(out / "sweep_contracts.csv", contracts);
  atomic_write(out / "sweep_actions.csv", actions);
  write_json(out / "sweep.json", j);
}

inline void run_pareto(const ProblemSpec& p, const fs::path& out, const RunOptions&) {
  std::vector<double> us = utility_list(p);
  std::sort(us.begin(), us.end());
  const std::vector<FrontierPoint> relaxed = pareto_frontier(p, us);
  struct Full {
    double wage;
    bool valid;
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> idx(us.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto full = parallel_map(idx, [&](std::size_t i) -> Full {
    if (!relaxed[i].feasible) return {nan, false};
    const ProblemSpec q = p.with_reservation_utility(us[i]);
    const SolveResult r = solve(q);
    return {r.expected_wage, r.deviations_added.empty() && r.provenance != Provenance::GridFallback};
  });
  Csv csv(header::kFrontier);
  json rows = json::array();
  for (std::size_t i = 0; i < us.size(); ++i) {
    const auto& f = relaxed[i];
    csv.row(f.reservation_utility, f.expected_wage, full[i].wage, full[i].valid, f.lambda, f.mu, f.ir_binding, f.feasible);
    json row{{"reservation_utility", f.reservation_utility}, {"relaxed_wage", f.expected_wage},
             {"full_wage", full[i].wage}, {"foa_valid", full[i].valid}, {"feasible", f.feasible}};
    if (!f.error.empty()) row["error"] = f.error;
    rows.push_back(row);
  }
  atomic_write(out / "frontier.csv", csv.text());
  write_json(out / "frontier.json", {{"command", "pareto"}, {"problem", to_json(p)}, {"points", rows}});
}

inline void run_compare(const ProblemSpec& p, const fs::path& out, const RunOptions& o) {
  const SolverComparison c = compare_solvers(p, p.grids);
  Csv rows(header::kComparison);
  for (const auto& r : c.rows) rows.row(r.y, r.wage_active, r.wage_grid, r.difference, r.density, r.stable);
  Csv actions(header::kComparisonActions);
  for (double a : uniform_actions(p, o.curve_points)) {
    actions.row(a, agent_utility(c.active.contract, a, p.tol), grid_agent_utility_profile(c.grid, p, a).U);
  }
  atomic_write(out / "comparison.csv", rows.text());
  atomic_write(out / "comparison_actions.csv", actions.text());
  write_json(out / "comparison.json", {{"command", "compare-solvers"},
                                       {"problem", to_json(p)},
                                       {"expected_wage_active", c.wage_active},
                                       {"expected_wage_grid", c.wage_grid},
                                       {"objective_gap", c.objective_gap},
                                       {"max_stable_difference", c.max_stable_difference},
                                       {"stable_wage_range", c.stable_wage_range},
                                       {"masked_points", c.masked_points},
                                       {"grid_kkt_residual", c.grid.kkt_residual},
                                       {"grid_binding_actions", c.grid.binding_actions},
                                       {"active", to_json(c.active)}});
}

inline void run_bench(const ProblemSpec& p, const fs::path& out, const RunOptions& o) {
  require(o.repeats >= 20, "bench needs at least 20 repeats");
  Csv csv(header::kBench);
  std::vector<double> times;
  json runs = json::array();
  for (int i = 0; i < o.repeats; ++i) {
    const SolveResult r = solve(p, solve_options(o));
    const double ms = r.wall_time.count();
    times.push_back(ms);
    csv.row(i, ms, moralhazard::to_string(r.provenance), r.expected_wage, r.deviations_added.size());
    runs.push_back({{"run", i}, {"wall_time_ms", ms}, {"provenance", moralhazard::to_string(r.provenance)}});
  }
  atomic_write(out / "bench.csv", csv.text());
  write_json(out / "bench.json", {{"command", "bench"},
                                  {"problem", to_json(p)},
                                  {"repeats", o.repeats},
                                  {"median_ms", percentile(times, 0.5)},
                                  {"p10_ms", percentile(times, 0.1)},
                                  {"p90_ms", percentile(times, 0.9)},
                                  {"max_ms", *std::max_element(times.begin(), times.end())},
                                  {"runs", runs}});
}

}  // namespace detail

/// Runs one command and writes its artifacts into `out_dir` (created if
/// needed). Errors propagate as moralhazard::Error.
inline void run_command(Command command, const ProblemSpec& p, const fs::path& out_dir, const RunOptions& options = {}) {
  p.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::ValidationError, "cannot create output directory '" + out_dir.string() + "': " + ec.message());
  switch (command) {
    case Command::Solve:
      detail::require_single_point(p, command);
      return detail::run_solve(p, out_dir, options);
    case Command::Relaxed:
      detail::require_single_point(p, command);
      return detail::run_relaxed(p, out_dir, options);
    case Command::Validate:
      detail::require_single_point(p, command);
      return detail::run_validate(p, out_dir, options);
    case Command::CompareSolvers:
      detail::require_single_point(p, command);
      return detail::run_compare(p, out_dir, options);
    case Command::Bench:
      detail::require_single_point(p, command);
      return detail::run_bench(p, out_dir, options);
    case Command::Sweep: return detail::run_sweep(p, out_dir, options);
    case Command::Pareto: return detail::run_pareto(p, out_dir, options);
  }
}

/// "λ,μ" as given to --seed-multipliers.
inline std::pair<double, double> parse_seed(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) fail(ErrorKind::ParseError, "--seed-multipliers expects \"lambda,mu\"");
  try {
    std::size_t used_l = 0, used_m = 0;
    const std::string ls = text.substr(0, comma), ms = text.substr(comma + 1);
    const double l = std::stod(ls, &used_l);
    const double m = std::stod(ms, &used_m);
    if (used_l != ls.size() || used_m != ms.size()) throw std::invalid_argument("trailing characters");
    return {l, m};
  } catch (const std::exception&) {
    fail(ErrorKind::ParseError, "--seed-multipliers expects \"lambda,mu\", got '" + text + "'");
  }
}

}  // namespace moralhazard::cli
