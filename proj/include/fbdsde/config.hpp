// Run configuration: schema-checked JSON with defaults, flag overrides and
// problem construction.
#pragma once

#include "fbdsde/continuation.hpp"
#include "fbdsde/io.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbdsde {

/// Schema or consistency violation; `key()` is the JSON path at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& msg)
      : std::runtime_error(key.empty() ? msg : key + ": " + msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::string problem;       // example1 | example2 | decoupled | linear
  std::string problem_file;  // linear problem definition
  StateLayout layout;
  double T = 1.0;
  int steps = 100;
  int paths = 10000;
  std::uint64_t seed = 1;
  Eigen::VectorXd x;
  std::optional<DecoupledParams> decoupled;
  ContinuationConfig continuation;
  int hypothesis_samples = 10000;
  double probe_alpha0 = 0.0;
  std::vector<double> probe_deltas = {1.0 / 64, 1.0 / 32, 1.0 / 16, 0.125, 0.25, 0.5, 1.0};
  int probe_pairs = 5;
  std::string out_dir = "out";
  int sample_paths = 16;
  int workers = 1;
  std::vector<std::string> warnings;

  /// Normalized configuration with every default filled in.
  json echo() const;
  void validate() const;
};

RunConfig parse_config(const json& j);
RunConfig parse_config_file(const std::string& path);

/// Command-line overrides; unset fields leave the configuration alone.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps, paths, workers;
  std::optional<std::string> out, case_choice;
  std::optional<double> tol, delta;

  /// Applies the overrides and returns them as a JSON record.
  json apply(RunConfig& cfg) const;
};

CaseChoice parse_case(const std::string& s, const std::string& key = "continuation.case");

/// Linear problem file: {"drift": S x S, "offset": S, "h_matrix": d_H x d_H,
/// "h_offset": d_H, "constants": {...}?, "name": "..."?} on the stacked
/// coordinates (y, Y, z, Z, k) -> (f, b, g, sigma, phi).
std::shared_ptr<CoefficientSet> load_linear_problem(const json& j, const StateLayout& layout);

BuiltinProblem make_problem(const RunConfig& cfg);

}  // namespace fbdsde
