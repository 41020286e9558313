#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "moralhazard/cli.hpp"

namespace cli = moralhazard::cli;

namespace {

constexpr const char* kConfigHelp = R"(Config file (JSON):
  distribution        {"family": gaussian|lognormal (sigma), student_t (sigma, nu),
                       binomial (n), gamma (shape), poisson|exponential|bernoulli|geometric,
                       location|scale (base: normal|logistic|exponential, scale = 1)}
  utility             {"family": log (w0) | crra (gamma, w0) | cara (alpha, w0)}
  cost                {"kappa": k, "power": p}        c(a) = k a^p
  a0                  intended action
  action_interval     [a_min, a_max]
  reservation_utility number, or a list for sweep/pareto
  tolerances          optional: abs_int 1e-11, rel_int 1e-10, root_tol 1e-10, grad_tol 1e-9,
                      deviation_tol 1e-6, kkt_tol 1e-8
  grids               optional: n_outcome 201, n_action 200, cache_points 401,
                      deviation_grid 200, validation_grid 2001, max_deviations 25
Unknown keys are rejected.)";

int report(const std::filesystem::path& out, const std::string& kind, const std::string& message) {
  const auto doc = cli::error_json(kind, message);
  std::cerr << doc.dump() << "\n";
  try {
    if (!out.empty() && std::filesystem::is_directory(out)) cli::write_json(out / "error.json", doc);
  } catch (...) {
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal contracts under moral hazard"};
  app.footer(kConfigHelp);
  std::string config, out_dir = ".", command, seed;
  std::optional<int> grid_ny, grid_na;
  int repeats = 20;
  app.add_option("--config", config, "JSON problem config")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--command", command, "solve, relaxed, sweep, pareto, validate, compare-solvers or bench")
      ->required()
      ->check(CLI::IsMember({"solve", "relaxed", "sweep", "pareto", "validate", "compare-solvers", "bench"}));
  app.add_option("--seed-multipliers", seed, "Warm start \"lambda,mu\"");
  app.add_option("--grid-ny", grid_ny, "Grid solver outcome points (default 201)");
  app.add_option("--grid-na", grid_na, "Grid solver action points (default 200)");
  app.add_option("--repeats", repeats, "Bench repetitions (at least 20)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(out_dir, "ParseError", e.what());
  }

  try {
    auto spec = cli::parse_config(config);
    if (grid_ny) spec.grids.n_outcome = *grid_ny;
    if (grid_na) spec.grids.n_action = *grid_na;
    cli::RunOptions options;
    if (!seed.empty()) options.seed_multipliers = cli::parse_seed(seed);
    options.repeats = repeats;
    cli::run_command(cli::parse_command(command), spec, out_dir, options);
  } catch (const moralhazard::Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(moralhazard::to_string(e.kind())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    return report(out_dir, std::string(moralhazard::to_string(e.kind())), msg);
  } catch (const std::exception& e) {
    return report(out_dir, "InternalError", e.what());
  }
  return 0;
}
