// Decoupled linear solves: the forward stage (y, z) as a time-reversed
// backward equation and the backward stage (Y, Z, k) by backward induction,
// both with regression-based conditional expectations.
//
// Information at node i is F_{t_i} = F^W_{t_i} v F^B_{t_i,T} v F^N_{t_i}.
// Its regression summary is the feature row (W_{t_i}, B_T - B_{t_i}, N~_{t_i}),
// optionally extended by state coordinates known at t_i.
#pragma once

#include "fbdsde/coefficients.hpp"
#include "fbdsde/noise.hpp"
#include "fbdsde/regression.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace fbdsde {

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NodeSeries = std::vector<Eigen::MatrixXd>;  // steps + 1 entries, n rows each

struct FeatureSet {
  NodeSeries nodes;

  static FeatureSet from_noise(const NoiseEnsemble& noise);
  /// Node-i features, with `extra` columns appended when non-null.
  Eigen::MatrixXd at(int i, const Eigen::MatrixXd* extra = nullptr) const;
};

/// Forward-stage right-hand side; node-indexed, the drift and diffusions of
/// step i read node i.
struct ForwardDrivers {
  NodeSeries beta;   // n x d_H
  NodeSeries Sigma;  // n x d_H*d_E1
  NodeSeries Phi;    // n x d_H*m, mark-major
};

/// Backward-stage right-hand side. Step i uses F at node i and G at node
/// i + 1 (right endpoint of the backward integral).
struct BackwardDrivers {
  NodeSeries F;                // n x d_H
  NodeSeries G;                // n x d_H*d_E2
  Eigen::MatrixXd terminal;    // n x d_H
};

struct FrozenDrivers {
  ForwardDrivers forward;
  BackwardDrivers backward;
};

struct KernelOptions {
  RegressionBasis basis;
  /// Degree cap for the z, Z and k fits. Their targets carry dW/dt-scaled
  /// noise, and a rich basis fits that noise back into the Picard loop.
  int covariation_degree = 1;

  RegressionBasis covariation_basis() const {
    RegressionBasis b = basis;
    b.degree = std::min(b.degree, covariation_degree);
    return b;
  }
};

struct StageDiagnostics {
  int regressions = 0;
  double max_condition = 1.0;
  double max_residual_rms = 0.0;
  int max_basis_size = 0;

  void absorb(const FitDiagnostics& d);
  void absorb(const StageDiagnostics& d);
};

struct ForwardSolution {
  NodeSeries y, z;
};

struct BackwardSolution {
  NodeSeries Y, Z, k;
};

/// Row-wise outer product: out(p, r*b.cols() + c) = a(p, r) * b(p, c).
Eigen::MatrixXd row_outer(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// dy = beta dt + Sigma dW - z dB<- + Phi dN~, y_0 = x. `extra` (node-indexed,
/// may be null) adds state columns to the conditioning features.
ForwardSolution solve_forward_frozen(const ForwardDrivers& drivers, const NoiseEnsemble& noise,
                                     const FeatureSet& features, const Eigen::VectorXd& x,
                                     const KernelOptions& opts, const NodeSeries* extra = nullptr,
                                     StageDiagnostics* diag = nullptr);

/// dY = F dt + Z dW + G dB<- + k dN~, Y_T = terminal.
BackwardSolution solve_backward_frozen(const BackwardDrivers& drivers, const NoiseEnsemble& noise,
                                       const FeatureSet& features, const KernelOptions& opts,
                                       const NodeSeries* extra = nullptr,
                                       StageDiagnostics* diag = nullptr);

EnsembleProcess assemble(const NoiseEnsemble& noise, const ForwardSolution& fwd,
                         const BackwardSolution& bwd);

/// The alpha = 0 decoupled system with theta1 feedback and Y_T = y_T + phi_T.
EnsembleProcess solve_decoupled_34(double theta1, const AffinePerturbation& pert,
                                   const NoiseEnsemble& noise, const Eigen::VectorXd& x,
                                   const KernelOptions& opts = {},
                                   StageDiagnostics* diag = nullptr);

/// Node series of one component, for the sum primitives.
NodeSeries component(const EnsembleProcess& e, Eigen::MatrixXd NodeBlock::*field);

}  // namespace fbdsde
