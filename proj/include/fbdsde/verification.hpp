// Residuals of the integral equations, closed-form comparison and the
// uniqueness regression check.
#pragma once

#include "fbdsde/continuation.hpp"

#include <array>
#include <string>
#include <vector>

namespace fbdsde {

struct ResidualReport {
  std::vector<double> t;
  std::vector<double> forward;   // L2 over paths of the forward defect, per node
  std::vector<double> backward;  // same for the backward defect
  double terminal_defect = 0.0;  // L2 over paths of Y_T - h(y_T)
  double sup_forward = 0.0;
  double sup_backward = 0.0;
  int steps = 0;
  int n_paths = 0;
  double T = 0.0;
};

/// Defects of
///   y_t = x + int_0^t b ds + int_0^t sigma dW - int_0^t z dB<- + int_0^t phi dN~,
///   Y_t = h(y_T) - int_t^T f ds - int_t^T Z dW - int_t^T g dB<- - int_t^T k dN~,
/// with the same quadrature conventions as the solver.
ResidualReport residual_report(const CoefficientSet& coeffs, const EnsembleProcess& v,
                               const NoiseEnsemble& noise, const Eigen::VectorXd& x);

struct ClosedFormError {
  /// sup over nodes of the L2-over-paths distance, all components together.
  double sup_l2 = 0.0;
  /// sqrt of the M2 squared distance.
  double m2 = 0.0;
  /// sup over nodes per component, order (y, Y, z, Z, k).
  std::array<double, 5> component_sup{};
};

ClosedFormError closed_form_error(const EnsembleProcess& v, const ClosedForm& analytic);

struct UniquenessResult {
  double m2_distance = 0.0;  // sqrt(M2 squared distance) of the two fixed points
  PicardResult first, second;
};

/// Picard solves at alpha = 1 from both starts on the same noise. A failed
/// run raises SolverError naming its start.
UniquenessResult uniqueness_probe(const ContinuationProblem& prob, const ContinuationConfig& cfg,
                                  const EnsembleProcess& start_a, const EnsembleProcess& start_b,
                                  const std::string& label_a = "first",
                                  const std::string& label_b = "second");

}  // namespace fbdsde
