// Acceptance suite: one pass/fail line per criterion.
//   acceptance            run all criteria
//   acceptance 4 7        run the listed criteria
// Exit status is nonzero when any selected criterion fails.
#include "fbdsde/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

using namespace fbdsde;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + what + (ok ? "" : " [FAILED]");
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

StateLayout scalar_layout() { return StateLayout{}; }

const ClosedForm& closed_form(const BuiltinProblem& p, const std::string& name) {
  for (const auto& cf : p.closed_forms)
    if (cf.name == name) return cf;
  throw std::runtime_error("no closed form " + name);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fbdsde_acceptance_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// 1. Backward sums against forward sums of the time-reversed process.
Outcome reversal_identity() {
  Outcome o;
  const StateLayout l = scalar_layout();
  const int N = 64, n = 100;
  const TimeGrid grid(1.0, N);
  const NoiseEnsemble noise = sample_noise(11, n, grid, l);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  std::vector<Eigen::MatrixXd> h(N + 1);
  for (auto& m : h) m = Eigen::MatrixXd::NullaryExpr(n, l.z_cols(), [&] { return g(rng); });
  const auto h_rev = reverse_nodes(h);
  const auto dB_rev = reverse_increments(noise.dB);
  double worst = 0.0;
  for (int u = 0; u <= N; ++u) {
    const Eigen::MatrixXd back = backward_ito_sum(h, noise.dB, 0, u);
    const Eigen::MatrixXd fwd = forward_ito_sum(h_rev, dB_rev, N - u, N);
    const double scale = std::max(1.0, back.cwiseAbs().maxCoeff());
    worst = std::max(worst, (back + fwd).cwiseAbs().maxCoeff() / scale);
  }
  o.require(worst <= 1e-12, "max relative mismatch " + fmt(worst) + " <= 1e-12");
  return o;
}

// 2. Declared constants of Example 1 and their recovery.
Outcome example1_hypotheses() {
  Outcome o;
  const StateLayout l = scalar_layout();
  const auto p = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  const PairSampler sampler(l, 1.0, 2024);
  const int n = 10000;
  const Verdict a1 = verify_A1(*p.coeffs, 0.25, 0.25, sampler, n);
  const Verdict a2 = verify_A2(*p.coeffs, 1.0, sampler, n);
  const Verdict a4 = verify_A4(*p.coeffs, 1.0, 0.25, sampler, n);
  o.require(a1.pass, "A1 violations " + std::to_string(a1.n_violations));
  o.require(a2.pass, "A2 violations " + std::to_string(a2.n_violations));
  std::string a4_note = "A4 violations " + std::to_string(a4.n_violations);
  if (!a4.witnesses.empty()) a4_note += " (first: " + a4.witnesses.front().inequality + ")";
  o.require(a4.pass, a4_note);
  const HypothesisReport est = estimate_constants(*p.coeffs, sampler, n);
  const double th = est.estimate.theta.value_or(-1.0);
  const double beta = est.estimate.beta.value_or(-1.0);
  o.require(std::abs(th - 0.25) <= 0.01, "theta1* = theta2* = " + fmt(th));
  o.require(std::abs(beta - 1.0) <= 1e-6, "beta* = " + fmt(beta));
  return o;
}

// 3. Example 2 breaks (A1) in both directions, found among the structured rays.
Outcome example2_hypotheses() {
  Outcome o;
  const auto p = builtin_example2();
  const PairSampler sampler(p.spec.layout, p.spec.T, 2024);
  const int batch = sampler.ray_batch_size();
  o.require(batch <= 1000, "ray batch " + std::to_string(batch) + " <= 1000");
  for (auto [dir, name] : {std::pair{Direction::Standard, "A1"}, {Direction::Reversed, "A1'"}}) {
    const Verdict v = verify_A1(*p.coeffs, 0.0, 0.0, sampler, batch, dir);
    const bool ok = !v.pass && !v.witnesses.empty() && v.witnesses.front().sample_index < batch;
    o.require(ok, std::string(name) + " witness at sample " +
                      (v.witnesses.empty() ? "none" : std::to_string(v.witnesses.front().sample_index)));
  }
  RunRequest req;
  req.subcommand = "check";
  req.config = parse_config(json{{"problem", "example2"}, {"steps", 100}, {"paths", 1000}, {"seed", 1}});
  req.config.out_dir = scratch("check2").string();
  std::ostringstream log;
  const int code = run(req, log);
  o.require(code == exit_code::hypothesis_violation, "check exit " + std::to_string(code));
  return o;
}

// 4. Residuals of the Example 2 closed forms.
Outcome example2_residuals() {
  Outcome o;
  const auto p = builtin_example2();
  auto sup_residual = [&](const std::string& name, int N) {
    const NoiseEnsemble noise = sample_noise(3, 16, TimeGrid(p.spec.T, N), p.spec.layout);
    const ResidualReport r =
        residual_report(*p.coeffs, ensemble_from(noise, closed_form(p, name)), noise, p.spec.x);
    return std::max({r.sup_forward, r.sup_backward, r.terminal_defect});
  };
  const double r100 = sup_residual("sincos", 100), r200 = sup_residual("sincos", 200);
  const double r0 = sup_residual("trivial", 200);
  o.require(r200 <= 0.05, "sup residual N=200 " + fmt(r200) + " <= 0.05");
  o.require(r100 / r200 >= 1.6 && r100 / r200 <= 2.4, "ratio N=100/N=200 " + fmt(r100 / r200));
  o.require(r0 == 0.0, "trivial residual " + fmt(r0));
  return o;
}

// 5. Decoupled system against its hand solution.
Outcome decoupled_oracle() {
  Outcome o;
  const StateLayout l = scalar_layout();
  DecoupledParams dp{0.3, DriverQuintuple::Zero(l), Eigen::VectorXd::Constant(1, 0.7)};
  const auto p = builtin_decoupled(l, 1.0, Eigen::VectorXd::Ones(1), dp);
  const NoiseEnsemble noise = sample_noise(5, 10000, TimeGrid(1.0, 100), l);
  KernelOptions ko;
  ko.basis.degree = 2;
  const auto pert = AffinePerturbation::Constant(l, 100, 10000, DriverQuintuple::Zero(l), dp.phi_T);
  const EnsembleProcess v = solve_decoupled_34(0.3, pert, noise, p.spec.x, ko);
  const ClosedFormError e = closed_form_error(v, closed_form(p, "hand"));
  o.require(e.sup_l2 <= 0.05, "sup L2 error " + fmt(e.sup_l2) + " <= 0.05");
  return o;
}

// 6. Martingale representation of W_T and of a compensated count.
Outcome martingale_oracle() {
  Outcome o;
  const StateLayout l = scalar_layout();
  const int N = 100, n = 100000;
  const NoiseEnsemble noise = sample_noise(6, n, TimeGrid(1.0, N), l, 4);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  KernelOptions ko;
  ko.basis.degree = 1;
  auto zero_drivers = [&](const Eigen::MatrixXd& terminal) {
    BackwardDrivers d;
    d.F.assign(N, Eigen::MatrixXd::Zero(n, 1));
    d.G.assign(N + 1, Eigen::MatrixXd::Zero(n, l.z_cols()));
    d.terminal = terminal;
    return d;
  };
  const auto W = noise.W_nodes();
  const BackwardSolution bw = solve_backward_frozen(zero_drivers(W[N]), noise, fs, ko);
  double errY = 0.0, errZ = 0.0;
  for (int i = 0; i < N; ++i) {
    errY = std::max(errY, std::sqrt((bw.Y[i] - W[i]).squaredNorm() / n));
    errZ = std::max(errZ, std::sqrt((bw.Z[i].array() - 1.0).square().mean()));
  }
  o.require(errY <= 0.05, "Y vs W L2 " + fmt(errY));
  o.require(errZ <= 0.05, "Z vs 1 L2 " + fmt(errZ));

  const double kappa = 2.0;
  const auto Nn = noise.N_nodes();
  const BackwardSolution bk = solve_backward_frozen(zero_drivers(kappa * Nn[N]), noise, fs, ko);
  double errk = 0.0, supk = 0.0;
  for (int i = 0; i < N; ++i) {
    const double e2 = (bk.k[i].array() - kappa).square().mean();
    errk += e2 / N;
    supk = std::max(supk, std::sqrt(e2) / kappa);
  }
  errk = std::sqrt(errk) / kappa;
  o.require(errk <= 0.1, "k relative L2 " + fmt(errk) + " <= 0.1 (node sup " + fmt(supk) + ")");
  return o;
}

// 7. Contraction of the full-freeze map near alpha = 0.
Outcome contraction_probe_ex1() {
  Outcome o;
  const StateLayout l = scalar_layout();
  const auto p = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  const NoiseEnsemble noise = sample_noise(7, 10000, TimeGrid(1.0, 100), l, 4);
  const ContinuationProblem prob(*p.coeffs, p.spec.x, noise, Case::One, 0.25);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto a = random_adapted_start(noise, prob.features, 100 + 2 * k);
    const auto b = random_adapted_start(noise, prob.features, 101 + 2 * k);
    worst = std::max(worst, contraction_probe(prob, 0.05, a, b));
  }
  o.require(worst <= 0.6, "max ratio " + fmt(worst) + " <= 0.6");
  return o;
}

// 8. Ladder on Example 1 from x = 0, then uniqueness from two starts.
Outcome ladder_ex1() {
  Outcome o;
  const StateLayout l = scalar_layout();
  const auto p = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  const NoiseEnsemble noise = sample_noise(8, 10000, TimeGrid(1.0, 100), l, 4);
  const auto [which, theta] = resolve_case(*p.coeffs, CaseChoice::Auto);
  const ContinuationProblem prob(*p.coeffs, p.spec.x, noise, which, theta);
  const ContinuationConfig cfg;
  const LadderResult lr = continuation_ladder(prob, cfg);
  o.require(lr.converged(), "ladder " + to_string(lr.diagnostics.status) + " at alpha " +
                                fmt(lr.diagnostics.final_alpha));
  const ClosedFormError e = closed_form_error(lr.solution, closed_form(p, "trivial"));
  o.require(e.m2 <= 0.05, "M2 error vs zero " + fmt(e.m2));
  const ResidualReport r = residual_report(*p.coeffs, lr.solution, noise, p.spec.x);
  o.require(std::max(r.sup_forward, r.sup_backward) <= 0.1,
            "sup residual " + fmt(std::max(r.sup_forward, r.sup_backward)));
  try {
    const auto trivial = EnsembleProcess::Zero(l, 1.0, 100, 10000);
    const auto random = random_adapted_start(noise, prob.features, 99);
    const UniquenessResult u = uniqueness_probe(prob, cfg, trivial, random, "trivial", "random");
    const double eps = std::max(u.first.tolerance, u.second.tolerance);
    o.require(u.m2_distance <= 2 * eps,
              "uniqueness distance " + fmt(u.m2_distance) + " <= 2 eps = " + fmt(2 * eps));
  } catch (const SolverError& err) {
    o.require(false, std::string("uniqueness probe: ") + err.what());
  }
  return o;
}

// 9. Example 2 must not look unique.
Outcome nonuniqueness_ex2() {
  Outcome o;
  const auto p = builtin_example2();
  const int N = 100, n = 2000;
  const NoiseEnsemble noise = sample_noise(9, n, TimeGrid(p.spec.T, N), p.spec.layout, 4);
  const ContinuationProblem prob(*p.coeffs, p.spec.x, noise, Case::One, 0.0);
  const ContinuationConfig cfg;
  const auto trivial = ensemble_from(noise, closed_form(p, "trivial"));
  const auto seeded = ensemble_from(noise, closed_form(p, "sincos"));
  try {
    const UniquenessResult u = uniqueness_probe(prob, cfg, trivial, seeded, "trivial", "sincos");
    o.require(u.m2_distance >= 0.1, "both runs converged, distance " + fmt(u.m2_distance) + " >= 0.1");
  } catch (const SolverError& err) {
    const bool ok = err.status() == SolveStatus::NonContraction || err.status() == SolveStatus::MaxIter;
    o.require(ok, err.what());
  }
  return o;
}

// 10. Worker count never changes trajectory artifacts.
Outcome determinism() {
  Outcome o;
  auto artifacts = [](const json& config, const std::string& sub, int workers,
                      const std::vector<std::string>& files) {
    RunRequest req;
    req.subcommand = sub;
    req.config = parse_config(config);
    Overrides ov;
    ov.workers = workers;
    ov.out = scratch(sub + "_w" + std::to_string(workers)).string();
    req.overrides = ov.apply(req.config);
    std::ostringstream log;
    const int code = run(req, log);
    std::string bytes = "exit " + std::to_string(code) + "\n";
    for (const auto& f : files) bytes += slurp(std::filesystem::path(req.config.out_dir) / f);
    return bytes;
  };
  const json solve_cfg = {{"problem", "example1"}, {"T", 1.0}, {"steps", 50}, {"paths", 4000},
                          {"seed", 10}, {"x", {1.0}}};
  const json probe_cfg = {{"problem", "example1"}, {"T", 1.0}, {"steps", 50}, {"paths", 4000},
                          {"seed", 10}, {"probe", {{"deltas", {0.05, 0.5}}, {"pairs", 2}}}};
  const std::vector<std::string> solve_files = {"solution.csv", "trace.csv", "ladder.json"};
  o.require(artifacts(solve_cfg, "solve", 1, solve_files) == artifacts(solve_cfg, "solve", 4, solve_files),
            "solve artifacts identical for 1 and 4 workers");
  o.require(artifacts(probe_cfg, "probe", 1, {"probe.csv"}) == artifacts(probe_cfg, "probe", 3, {"probe.csv"}),
            "probe table identical for 1 and 3 workers");

  const StateLayout l = scalar_layout();
  DecoupledParams dp{0.3, DriverQuintuple::Zero(l), Eigen::VectorXd::Constant(1, 0.7)};
  auto decoupled_csv = [&](int workers) {
    const NoiseEnsemble noise = sample_noise(5, 4000, TimeGrid(1.0, 50), l, workers);
    const EnsembleProcess v = solve_decoupled_34(0.3, AffinePerturbation::Zero(l, 50, 4000), noise,
                                                 Eigen::VectorXd::Ones(1), {});
    std::ostringstream os;
    write_solution_csv(os, "0", v, 8);
    return os.str();
  };
  o.require(decoupled_csv(1) == decoupled_csv(4), "decoupled trajectories identical for 1 and 4 workers");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> body;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "reversal identity", 1, reversal_identity},
      {2, "Example 1 hypotheses", 10, example1_hypotheses},
      {3, "Example 2 hypotheses", 5, example2_hypotheses},
      {4, "Example 2 closed-form residuals", 5, example2_residuals},
      {5, "decoupled solver oracle", 30, decoupled_oracle},
      {6, "martingale representation", 60, martingale_oracle},
      {7, "contraction probe", 120, contraction_probe_ex1},
      {8, "Example 1 ladder and uniqueness", 300, ladder_ex1},
      {9, "Example 2 nonuniqueness", 300, nonuniqueness_ex2},
      {10, "determinism across worker counts", 300, determinism},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.body();
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.require(secs < c.limit_seconds, "runtime " + fmt(secs) + " s < " + fmt(c.limit_seconds) + " s");
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (out.pass ? "PASS" : "FAIL")
              << " | " << out.detail << std::endl;
    failures += out.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
