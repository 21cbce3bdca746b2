// The four workflows behind the command-line tool. Each run writes its
// artifacts plus manifest.json into the output directory and returns the
// process exit code.
#pragma once

#include "fbdsde/config.hpp"

#include <iosfwd>
#include <string>

namespace fbdsde {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 1;
inline constexpr int hypothesis_violation = 2;
inline constexpr int solver_failure = 3;
}  // namespace exit_code

struct RunRequest {
  std::string subcommand;  // check | solve | verify | probe
  RunConfig config;
  json overrides = json::object();
  std::string closed_form;    // verify: evaluate this closed form instead of solving
  std::string solution_file;  // verify: solution CSV written by solve
};

/// Library version string.
std::string version();

/// Hash of everything that determines the artifacts: subcommand, normalized
/// config, overrides, verify inputs and versions.
std::string manifest_hash(const RunRequest& req);

/// Runs one workflow. Progress and summaries go to `log`.
int run(const RunRequest& req, std::ostream& log);

/// Manifest for a run that failed before a configuration existed.
void write_failure_manifest(const std::string& out_dir, const std::string& subcommand,
                            const json& overrides, const std::string& error);

/// Reads a solution CSV back; paths keep their indices, so the noise can be
/// regenerated from the seed.
EnsembleProcess read_solution_csv(std::istream& is, const StateLayout& layout, double T,
                                  int steps);

}  // namespace fbdsde
