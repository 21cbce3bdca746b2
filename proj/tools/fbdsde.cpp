// fbdsde: check hypotheses, solve, verify and probe FBDSDEJ instances.
#include "fbdsde/app.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace fbdsde;
  CLI::App app{"Solver and verification toolkit for forward-backward doubly stochastic "
               "differential equations with jumps"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::string closed_form, solution_file;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--seed", ov.seed, "master seed (overrides the config)");
    sub->add_option("--steps", ov.steps, "number of time steps");
    sub->add_option("--paths", ov.paths, "number of Monte Carlo paths");
    sub->add_option("--out", ov.out, "output directory");
    sub->add_option("--case", ov.case_choice, "continuation case")
        ->check(CLI::IsMember({"auto", "1", "2"}));
    sub->add_option("--tol", ov.tol, "Picard tolerance");
    sub->add_option("--delta", ov.delta, "initial continuation step");
    sub->add_option("--workers", ov.workers, "worker threads (wall time only)");
  };
  auto* check = app.add_subcommand("check", "verify the structural hypotheses");
  auto* solve = app.add_subcommand("solve", "run the continuation ladder");
  auto* verify = app.add_subcommand("verify", "integral-equation residuals of a solution");
  auto* probe = app.add_subcommand("probe", "empirical contraction ratios over a step grid");
  for (auto* s : {check, solve, verify, probe}) add_common(s);
  auto* cf_opt = verify->add_option("--closed-form", closed_form, "evaluate a named closed form");
  verify->add_option("--solution", solution_file, "solution CSV written by solve")->excludes(cf_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? exit_code::ok : exit_code::config_error;
  }

  RunRequest req;
  req.subcommand = app.get_subcommands().front()->get_name();
  req.closed_form = closed_form;
  req.solution_file = solution_file;
  try {
    req.config = parse_config_file(config_path);
    req.overrides = ov.apply(req.config);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    try {
      write_failure_manifest(ov.out.value_or("out"), req.subcommand, json{{"config", config_path}},
                             e.what());
    } catch (const std::exception&) {
    }
    return exit_code::config_error;
  }
  return run(req, std::cout);
}
