// Method of continuation in alpha: the Case 1 / Case 2 families, the
// full-freeze Picard map, its fixed-point iteration and the alpha ladder.
//
// Full freeze: every nonlinear coupling is evaluated at the frozen iterate,
// while the (1 - alpha) theta feedback and the terminal feedback stay exact
// inside one step. One Picard step is therefore one pair of linear solves.
#pragma once

#include "fbdsde/kernel.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbdsde {

enum class Case { One = 1, Two = 2 };
enum class CaseChoice { Auto, One, Two };

class CaseSelectionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Case 1 iff theta1 > 0 and beta > 0, else Case 2 iff theta2 > 0.
Case select_case(const MonotoneConstants& c);

enum class SolveStatus { Converged, NonContraction, MaxIter, LadderStalled };
std::string to_string(SolveStatus s);

class SolverError : public std::runtime_error {
 public:
  SolverError(SolveStatus status, const std::string& what)
      : std::runtime_error(to_string(status) + ": " + what), status_(status) {}
  SolveStatus status() const { return status_; }

 private:
  SolveStatus status_;
};

struct ContinuationConfig {
  CaseChoice case_choice = CaseChoice::Auto;
  double delta0 = 0.25;
  double shrink = 0.5;
  double delta_min = 1.0 / 64;
  double picard_tol = 1e-4;
  int picard_max_iter = 200;
  bool warm_start = true;
  KernelOptions kernel;

  void validate() const;
};

/// Everything a Picard step needs besides alpha and the frozen iterate.
struct ContinuationProblem {
  const CoefficientSet* coeffs = nullptr;
  Eigen::VectorXd x;
  AffinePerturbation pert;
  const NoiseEnsemble* noise = nullptr;
  FeatureSet features;
  Case which = Case::One;
  /// theta1 (Case 1) or theta2 (Case 2) in the (1 - alpha) feedback.
  double theta = 0.0;
  KernelOptions kernel;

  ContinuationProblem(const CoefficientSet& c, Eigen::VectorXd x0, const NoiseEnsemble& nz,
                      Case w, double th, KernelOptions opts = {},
                      std::optional<AffinePerturbation> p = {});
};

/// Resolves the case and its feedback constant from the configuration and
/// the declared constants (an explicit case without constants uses 0).
std::pair<Case, double> resolve_case(const CoefficientSet& coeffs, CaseChoice choice);

/// Case 1 drivers at the frozen iterate `bar`; `fwd` is the current
/// step's forward output entering the theta1 and terminal feedback.
FrozenDrivers frozen_drivers_case1(const CoefficientSet& coeffs, double alpha,
                                   const AffinePerturbation& pert, const EnsembleProcess& bar,
                                   double theta1, const ForwardSolution& fwd);

/// Case 2 drivers; `bwd` is the current step's backward output entering the
/// theta2 feedback of the forward stage.
FrozenDrivers frozen_drivers_case2(const CoefficientSet& coeffs, double alpha,
                                   const AffinePerturbation& pert, const EnsembleProcess& bar,
                                   double theta2, const BackwardSolution& bwd);

/// I(bar): Case 1 solves forward then backward, Case 2 the reverse.
EnsembleProcess picard_step(const ContinuationProblem& prob, double alpha,
                            const EnsembleProcess& bar, StageDiagnostics* diag = nullptr);

/// sqrt(M2-dist^2 + E|y_T - y'_T|^2), the metric of M2 x L2(F_T).
double picard_distance(const EnsembleProcess& a, const EnsembleProcess& b);

struct PicardRecord {
  double alpha = 0.0;
  int iter = 0;
  double m2_dist = 0.0;
  double ratio = 0.0;  // m2_dist / previous m2_dist; 0 on the first iteration
  double seconds = 0.0;
};

struct PicardResult {
  SolveStatus status = SolveStatus::Converged;
  EnsembleProcess solution;
  int iterations = 0;
  double final_dist = 0.0;
  double tolerance = 0.0;  // effective stopping threshold
  std::vector<PicardRecord> trace;
  StageDiagnostics kernel;
  std::string note;

  bool converged() const { return status == SolveStatus::Converged; }
};

/// Iterates until the distance between successive iterates drops below
/// picard_tol * max(1, ||v||_M2). Fails with NonContraction after three
/// consecutive non-decreasing distances, MaxIter otherwise.
PicardResult picard_solve(const ContinuationProblem& prob, double alpha,
                          const EnsembleProcess& start, const ContinuationConfig& cfg);

struct LadderStep {
  double alpha = 0.0;
  double delta = 0.0;
  bool accepted = false;
  SolveStatus status = SolveStatus::Converged;
  int iterations = 0;
  double final_dist = 0.0;
  std::vector<double> ratios;
  double seconds = 0.0;
};

struct LadderDiagnostics {
  Case which = Case::One;
  double theta = 0.0;
  std::vector<LadderStep> steps;
  std::vector<PicardRecord> trace;
  StageDiagnostics kernel;
  double final_alpha = 0.0;
  SolveStatus status = SolveStatus::Converged;
  double total_seconds = 0.0;
};

struct LadderResult {
  EnsembleProcess solution;
  LadderDiagnostics diagnostics;
  bool converged() const { return diagnostics.status == SolveStatus::Converged; }
};

/// alpha = 0 decoupled solve, then alpha += delta (clamped to land on 1),
/// warm-starting each Picard solve. NonContraction shrinks delta; falling
/// below delta_min stalls the ladder. Failures are reported in the result.
LadderResult continuation_ladder(const ContinuationProblem& prob, const ContinuationConfig& cfg,
                                 std::optional<EnsembleProcess> start = {});

/// [M2-dist^2(I(a), I(b)) + E|dy_T|^2] / [M2-dist^2(a, b) + E|dy_T|^2]; the
/// two steps run concurrently on the shared noise.
double contraction_probe(const ContinuationProblem& prob, double alpha, const EnsembleProcess& a,
                         const EnsembleProcess& b);

/// Random adapted ensemble: each coordinate is an affine combination of the
/// node features with normal coefficients drawn from (seed, coordinate).
EnsembleProcess random_adapted_start(const NoiseEnsemble& noise, const FeatureSet& features,
                                     std::uint64_t seed, double scale = 1.0);

/// Deterministic ensemble sampled from t -> v(t) on the noise grid.
EnsembleProcess ensemble_from(const NoiseEnsemble& noise, const ClosedForm& cf);

}  // namespace fbdsde
