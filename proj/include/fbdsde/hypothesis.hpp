// Sampled verification of the monotonicity and Lipschitz hypotheses, with
// counterexample witnesses and best-constant estimation.
//
// Verdicts are certified on the sample only: a pass means no sampled pair
// violated the inequality, while a violation carries a witness that can be
// recomputed from scratch.
#pragma once

#include "fbdsde/coefficients.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fbdsde {

struct PairSample {
  StateQuintuple v;
  StateQuintuple v_prime;
  double t = 0.0;
};

/// Draws (v, v', t). The first `ray_batch_size()` samples are structured
/// rays: v - v' nonzero in exactly one component, one batch per radius.
/// The rest are bulk pairs with independent standard normal coordinates
/// scaled by a radius cycled from `radii`.
class PairSampler {
 public:
  PairSampler(StateLayout layout, double T, std::uint64_t seed,
              std::vector<double> radii = {0.1, 1.0, 10.0}, int rays_per_component = 4);

  PairSample operator()(int index) const;
  int ray_batch_size() const;
  std::string describe() const;
  const StateLayout& layout() const { return layout_; }

 private:
  StateLayout layout_;
  double T_;
  std::uint64_t seed_;
  std::vector<double> radii_;
  int rays_per_component_;
};

struct Witness {
  std::string inequality;  // "A1", "A1'", "A2", "A2'", "A4.b", ...
  int sample_index = -1;
  PairSample pair;
  double slack = 0.0;  // lhs - rhs of the violated inequality; positive
  double tolerance = 0.0;
};

struct Verdict {
  bool pass = true;
  long n_samples = 0;
  long n_violations = 0;
  std::vector<Witness> witnesses;  // first few violations, in sample order
};

/// tol_eq = 1e-9 * (1 + |lhs| + |rhs|).
double equality_tolerance(double lhs, double rhs);

Verdict verify_A1(const CoefficientSet& coeffs, double theta1, double theta2,
                  const PairSampler& sampler, int n_samples,
                  Direction direction = Direction::Standard);
Verdict verify_A2(const CoefficientSet& coeffs, double beta, const PairSampler& sampler,
                  int n_samples, Direction direction = Direction::Standard);
Verdict verify_A4(const CoefficientSet& coeffs, double c, double gamma,
                  const PairSampler& sampler, int n_samples);

/// Recomputes a witness slack from its stored pair and the given constants.
/// For A4 witnesses `a` = c and `b` = gamma; for A1 `a`, `b` = theta1,
/// theta2; for A2 `a` = beta.
double recompute_slack(const CoefficientSet& coeffs, const Witness& w, double a, double b = 0);

enum class HypothesisStatus { VerifiedAtDeclared, Violated, Estimated, NotChecked };
std::string to_string(HypothesisStatus s);

struct HypothesisEntry {
  HypothesisStatus status = HypothesisStatus::NotChecked;
  long n_violations = 0;
  std::vector<Witness> witnesses;
  std::string note;
};

struct EstimatedConstants {
  /// Largest theta with theta1 = theta2 = theta passing (A1); nullopt when
  /// even theta = 0 fails. theta1_only / theta2_only hold the other at 0.
  std::optional<double> theta, theta1_only, theta2_only;
  std::optional<double> theta_reversed;  // same along (A1')
  std::optional<double> beta, beta_reversed;
  std::optional<double> c, gamma;
};

struct HypothesisReport {
  HypothesisEntry A1, A2, A3, A4;
  EstimatedConstants estimate;
  std::optional<MonotoneConstants> declared;
  bool theta_sum_positive = false;   // theta1 + theta2 > 0 met by the estimate
  bool theta2_beta_positive = false; // theta2 + beta > 0 met by the estimate
  long n_samples = 0;
  std::string sampler;

  bool any_violation() const;
};

/// Best constants by log-grid search refined with bisection on the sample.
/// Estimates are sample-dependent bounds.
HypothesisReport estimate_constants(const CoefficientSet& coeffs, const PairSampler& sampler,
                                    int n_samples);

/// Verifies the declared constants (when present) and attaches estimates.
HypothesisReport check_hypotheses(const CoefficientSet& coeffs, const PairSampler& sampler,
                                  int n_samples);

}  // namespace fbdsde
