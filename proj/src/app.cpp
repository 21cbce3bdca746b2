#include "fbdsde/app.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef FBDSDE_VERSION
#define FBDSDE_VERSION "0.0.0"
#endif

namespace fbdsde {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json versions() {
  return {{"fbdsde", FBDSDE_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Collects artifacts and timings, and writes the manifest however the run ends.
class Run {
 public:
  Run(const RunRequest& req, std::ostream& log)
      : req_(req), log_(log), hash_(manifest_hash(req)), dir_(req.config.out_dir), t0_(Clock::now()) {
    fs::create_directories(dir_);
  }

  const std::string& hash() const { return hash_; }
  std::ostream& log() { return log_; }

  std::string path(const std::string& name) {
    artifacts_.push_back(name);
    return (dir_ / name).string();
  }

  std::ofstream open(const std::string& name) {
    std::ofstream os(path(name), std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
    return os;
  }

  void write_json(const std::string& name, json body) {
    body["manifest_hash"] = hash_;
    write_json_file(path(name), body);
  }

  void time(const std::string& what, double s) { timings_[what] = s; }
  void note(const std::string& key, json v) { extra_[key] = std::move(v); }

  int finish(int code, const std::string& status, const std::string& error = {}) {
    timings_["total"] = seconds_since(t0_);
    json m = {{"tool", "fbdsde"},
              {"subcommand", req_.subcommand},
              {"config", req_.config.echo()},
              {"overrides", req_.overrides},
              {"seed", req_.config.seed},
              {"versions", versions()},
              {"manifest_hash", hash_},
              {"exit_code", code},
              {"status", status},
              {"warnings", req_.config.warnings},
              {"artifacts", artifacts_},
              {"timings", timings_},
              {"timestamp", utc_timestamp()}};
    if (!req_.closed_form.empty()) m["closed_form"] = req_.closed_form;
    if (!req_.solution_file.empty()) m["solution_file"] = req_.solution_file;
    if (!error.empty()) m["error"] = error;
    for (auto& [k, v] : extra_.items()) m[k] = v;
    write_json_file((dir_ / "manifest.json").string(), m);
    return code;
  }

 private:
  const RunRequest& req_;
  std::ostream& log_;
  std::string hash_;
  fs::path dir_;
  Clock::time_point t0_;
  std::vector<std::string> artifacts_;
  json timings_ = json::object();
  json extra_ = json::object();
};

NoiseEnsemble make_noise(const RunConfig& cfg, int n_paths) {
  return sample_noise(cfg.seed, n_paths, TimeGrid(cfg.T, cfg.steps), cfg.layout, cfg.workers);
}

json closed_form_errors(const EnsembleProcess& v, const BuiltinProblem& p) {
  json out = json::object();
  for (const auto& cf : p.closed_forms) out[cf.name] = to_json(closed_form_error(v, cf));
  return out;
}

const ClosedForm& find_closed_form(const BuiltinProblem& p, const std::string& name) {
  for (const auto& cf : p.closed_forms)
    if (cf.name == name) return cf;
  std::string known;
  for (const auto& cf : p.closed_forms) known += (known.empty() ? "" : ", ") + cf.name;
  throw ConfigError("--closed-form", "problem has no closed form '" + name + "' (available: " +
                                         (known.empty() ? "none" : known) + ")");
}

ContinuationProblem make_continuation(const BuiltinProblem& p, const RunConfig& cfg,
                                      const NoiseEnsemble& noise) {
  const auto [which, theta] = resolve_case(*p.coeffs, cfg.continuation.case_choice);
  return ContinuationProblem(*p.coeffs, cfg.x, noise, which, theta, cfg.continuation.kernel);
}

struct Solved {
  LadderResult ladder;
  bool ok() const { return ladder.converged(); }
};

Solved solve_ladder(Run& run, const BuiltinProblem& p, const RunConfig& cfg,
                    const NoiseEnsemble& noise) {
  const ContinuationProblem prob = make_continuation(p, cfg, noise);
  run.log() << "case " << static_cast<int>(prob.which) << ", feedback theta " << prob.theta
            << "\n";
  const auto t0 = Clock::now();
  Solved s{continuation_ladder(prob, cfg.continuation)};
  run.time("ladder", seconds_since(t0));
  const auto& d = s.ladder.diagnostics;
  for (const auto& st : d.steps)
    run.log() << "  alpha " << format_double(st.alpha) << " delta " << format_double(st.delta)
              << " " << to_string(st.status) << " after " << st.iterations << " iterations\n";
  run.log() << "ladder: " << to_string(d.status) << " at alpha " << format_double(d.final_alpha)
            << "\n";
  return s;
}

void residual_artifacts(Run& run, const ResidualReport& r, const json& cf_errors) {
  run.write_json("residuals.json", {{"residuals", to_json(r)}, {"closed_form_errors", cf_errors}});
  auto os = run.open("residuals.csv");
  write_residual_csv(os, run.hash(), r);
  run.log() << "sup forward residual " << format_double(r.sup_forward)
            << ", sup backward residual " << format_double(r.sup_backward)
            << ", terminal defect " << format_double(r.terminal_defect) << "\n";
}

int do_check(Run& run, const RunConfig& cfg, const BuiltinProblem& p) {
  const PairSampler sampler(cfg.layout, cfg.T, cfg.seed);
  const auto t0 = Clock::now();
  const HypothesisReport rep = check_hypotheses(*p.coeffs, sampler, cfg.hypothesis_samples);
  run.time("check", seconds_since(t0));
  run.write_json("hypotheses.json", {{"problem", p.coeffs->name()}, {"report", to_json(rep)}});
  const std::string table = summary_table(rep);
  {
    auto os = run.open("hypotheses.txt");
    os << "# manifest_hash=" << run.hash() << "\n" << table;
  }
  run.log() << table;
  if (rep.any_violation())
    return run.finish(exit_code::hypothesis_violation, "HYPOTHESIS_VIOLATION");
  return run.finish(exit_code::ok, "OK");
}

int do_solve(Run& run, const RunConfig& cfg, const BuiltinProblem& p) {
  const NoiseEnsemble noise = make_noise(cfg, cfg.paths);
  const Solved s = solve_ladder(run, p, cfg, noise);
  const auto& d = s.ladder.diagnostics;
  {
    auto os = run.open("trace.csv");
    write_trace_csv(os, run.hash(), d.trace);
  }
  json steps_time = json::array();
  for (const auto& st : d.steps) steps_time.push_back(st.seconds);
  run.note("step_seconds", steps_time);
  if (!s.ok()) {
    run.write_json("ladder.json", {{"diagnostics", to_json(d)}});
    return run.finish(exit_code::solver_failure, to_string(d.status));
  }
  {
    auto os = run.open("solution.csv");
    write_solution_csv(os, run.hash(), s.ladder.solution, cfg.sample_paths);
  }
  const ResidualReport r = residual_report(*p.coeffs, s.ladder.solution, noise, cfg.x);
  run.write_json("ladder.json",
                 {{"diagnostics", to_json(d)},
                  {"residual_summary",
                   {{"sup_forward", r.sup_forward},
                    {"sup_backward", r.sup_backward},
                    {"terminal_defect", r.terminal_defect}}},
                  {"closed_form_errors", closed_form_errors(s.ladder.solution, p)}});
  return run.finish(exit_code::ok, to_string(d.status));
}

int do_verify(Run& run, const RunRequest& req, const BuiltinProblem& p) {
  const RunConfig& cfg = req.config;
  if (!req.closed_form.empty()) {
    const ClosedForm& cf = find_closed_form(p, req.closed_form);
    const NoiseEnsemble noise = make_noise(cfg, cfg.paths);
    const EnsembleProcess v = ensemble_from(noise, cf);
    residual_artifacts(run, residual_report(*p.coeffs, v, noise, cfg.x), closed_form_errors(v, p));
    return run.finish(exit_code::ok, "OK");
  }
  if (!req.solution_file.empty()) {
    std::ifstream is(req.solution_file);
    if (!is) throw ConfigError("--solution", "cannot open '" + req.solution_file + "'");
    const EnsembleProcess v = read_solution_csv(is, cfg.layout, cfg.T, cfg.steps);
    const NoiseEnsemble noise = make_noise(cfg, v.n_paths);
    residual_artifacts(run, residual_report(*p.coeffs, v, noise, cfg.x), closed_form_errors(v, p));
    return run.finish(exit_code::ok, "OK");
  }
  const NoiseEnsemble noise = make_noise(cfg, cfg.paths);
  const Solved s = solve_ladder(run, p, cfg, noise);
  if (!s.ok()) return run.finish(exit_code::solver_failure, to_string(s.ladder.diagnostics.status));
  residual_artifacts(run, residual_report(*p.coeffs, s.ladder.solution, noise, cfg.x),
                     closed_form_errors(s.ladder.solution, p));
  return run.finish(exit_code::ok, "OK");
}

int do_probe(Run& run, const RunConfig& cfg, const BuiltinProblem& p) {
  const NoiseEnsemble noise = make_noise(cfg, cfg.paths);
  const ContinuationProblem prob = make_continuation(p, cfg, noise);
  auto os = run.open("probe.csv");
  CsvWriter csv(os, run.hash(), {"delta", "alpha", "pair", "ratio"});
  json rows = json::array();
  const auto t0 = Clock::now();
  for (double delta : cfg.probe_deltas) {
    const double alpha = cfg.probe_alpha0 + delta;
    double worst = 0.0;
    for (int k = 0; k < cfg.probe_pairs; ++k) {
      const std::uint64_t base = cfg.seed * 1000003ULL + 2ULL * static_cast<std::uint64_t>(k);
      const EnsembleProcess a = random_adapted_start(noise, prob.features, base + 1);
      const EnsembleProcess b = random_adapted_start(noise, prob.features, base + 2);
      const double ratio = contraction_probe(prob, alpha, a, b);
      csv << delta << alpha << k << ratio;
      csv.end_row();
      worst = std::max(worst, ratio);
    }
    rows.push_back({{"delta", delta}, {"alpha", alpha}, {"max_ratio", worst}});
    run.log() << "delta " << format_double(delta) << ": max ratio " << format_double(worst) << "\n";
  }
  run.time("probe", seconds_since(t0));
  run.write_json("probe.json", {{"case", static_cast<int>(prob.which)},
                                {"theta_feedback", prob.theta},
                                {"pairs", cfg.probe_pairs},
                                {"table", rows}});
  return run.finish(exit_code::ok, "OK");
}

}  // namespace

std::string version() { return FBDSDE_VERSION; }

std::string manifest_hash(const RunRequest& req) {
  // Worker count and output location never change artifact contents.
  json config = req.config.echo();
  json overrides = req.overrides;
  config.erase("workers");
  config["output"].erase("dir");
  overrides.erase("workers");
  overrides.erase("out");
  json h = {{"subcommand", req.subcommand},
            {"config", config},
            {"overrides", overrides},
            {"versions", versions()}};
  if (!req.closed_form.empty()) h["closed_form"] = req.closed_form;
  if (!req.solution_file.empty()) h["solution_file"] = req.solution_file;
  return json_hash(h);
}

int run(const RunRequest& req, std::ostream& log) {
  static const std::set<std::string> subs = {"check", "solve", "verify", "probe"};
  if (!subs.count(req.subcommand)) throw ConfigError("", "unknown subcommand '" + req.subcommand + "'");
  Run r(req, log);
  for (const auto& w : req.config.warnings) log << "warning: " << w << "\n";
  try {
    const BuiltinProblem p = make_problem(req.config);
    if (req.subcommand == "check") return do_check(r, req.config, p);
    if (req.subcommand == "solve") return do_solve(r, req.config, p);
    if (req.subcommand == "verify") return do_verify(r, req, p);
    return do_probe(r, req.config, p);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return r.finish(exit_code::config_error, "CONFIG_ERROR", e.what());
  } catch (const CaseSelectionError& e) {
    log << "config error: " << e.what() << "\n";
    return r.finish(exit_code::config_error, "CONFIG_ERROR", e.what());
  } catch (const DimensionError& e) {
    log << "config error: " << e.what() << "\n";
    return r.finish(exit_code::config_error, "CONFIG_ERROR", e.what());
  } catch (const SolverError& e) {
    log << "solver failure: " << e.what() << "\n";
    return r.finish(exit_code::solver_failure, to_string(e.status()), e.what());
  } catch (const std::exception& e) {
    log << "solver failure: " << e.what() << "\n";
    return r.finish(exit_code::solver_failure, "ERROR", e.what());
  }
}

void write_failure_manifest(const std::string& out_dir, const std::string& subcommand,
                            const json& overrides, const std::string& error) {
  fs::create_directories(out_dir);
  json m = {{"tool", "fbdsde"},
            {"subcommand", subcommand},
            {"overrides", overrides},
            {"versions", versions()},
            {"exit_code", exit_code::config_error},
            {"status", "CONFIG_ERROR"},
            {"error", error},
            {"timestamp", utc_timestamp()}};
  m["manifest_hash"] = json_hash({{"subcommand", subcommand}, {"overrides", overrides}, {"error", error}});
  write_json_file((fs::path(out_dir) / "manifest.json").string(), m);
}

EnsembleProcess read_solution_csv(std::istream& is, const StateLayout& l, double T, int steps) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# manifest_hash=", 0) != 0)
    throw ConfigError("--solution", "missing manifest hash line");
  if (!std::getline(is, line)) throw ConfigError("--solution", "missing header row");
  const std::size_t width = 2 + 2 * l.d_H + l.z_cols() + l.Z_cols() + l.k_cols();
  if (static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1 != width)
    throw ConfigError("--solution", "header does not match the configured dimensions");

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw ConfigError("--solution", "malformed number in '" + line + "'");
      row.push_back(v);
      p = res.ptr + 1;
    }
    if (row.size() != width) throw ConfigError("--solution", "wrong field count in '" + line + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.size() % static_cast<std::size_t>(steps + 1) != 0)
    throw ConfigError("--solution", "row count is not a multiple of steps + 1");
  const int n = static_cast<int>(rows.size() / static_cast<std::size_t>(steps + 1));
  EnsembleProcess e = EnsembleProcess::Zero(l, T, steps, n);
  for (const auto& row : rows) {
    const int path = static_cast<int>(row[0]);
    const int i = static_cast<int>(std::lround(row[1] / T * steps));
    if (path < 0 || path >= n || i < 0 || i > steps || std::abs(row[1] - T * i / steps) > 1e-9 * T)
      throw ConfigError("--solution", "path/time grid does not match the configuration");
    std::size_t c = 2;
    NodeBlock& nb = e.nodes[i];
    for (Eigen::MatrixXd* m : {&nb.y, &nb.Y, &nb.z, &nb.Z, &nb.k})
      for (Eigen::Index k = 0; k < m->cols(); ++k) (*m)(path, k) = row[c++];
  }
  return e;
}

}  // namespace fbdsde
