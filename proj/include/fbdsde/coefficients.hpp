// Problem coefficients (b, sigma, phi, f, g, h), their aggregate
// A = (f, b, g, sigma, phi), affine perturbation bundles for the
// continuation families, and the built-in problem instances.
#pragma once

#include "fbdsde/state_space.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbdsde {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which pair of monotonicity hypotheses the constants certify: the
/// dissipative form (A1)/(A2) or the reversed form (A1')/(A2').
enum class Direction { Standard, Reversed };

struct MonotoneConstants {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double beta = 0.0;
  double c = 1.0;
  double gamma = 0.5;
  Direction direction = Direction::Standard;

  /// theta1 + theta2 > 0, theta2 + beta > 0, c > 0, gamma in (0, 1).
  void validate() const;
};

/// Driver evaluations for every path at one node, flattened like NodeBlock:
/// f, b as n x d_H; g as n x d_H*d_E2; sigma as n x d_H*d_E1; phi mark-major.
struct NodeDrivers {
  Eigen::MatrixXd f, b, g, sigma, phi;

  static NodeDrivers Zero(const StateLayout& l, int n_paths);
  NodeDrivers& operator+=(const NodeDrivers& o);
  NodeDrivers& operator*=(double s);
};

/// The six coefficient maps. Evaluators are deterministic, time-dependent
/// functions of the state (Markovian), and safe to call concurrently.
class CoefficientSet {
 public:
  explicit CoefficientSet(StateLayout layout, std::string name = "custom")
      : layout_(std::move(layout)), name_(std::move(name)) {}
  virtual ~CoefficientSet() = default;

  const StateLayout& layout() const { return layout_; }
  const std::string& name() const { return name_; }

  const std::optional<MonotoneConstants>& declared_constants() const { return declared_; }
  void declare(MonotoneConstants c) { declared_ = c; }

  /// A(t, v) = (f, b, g, sigma, phi)(t, v); throws NonFiniteError.
  DriverQuintuple eval_A(double t, const StateQuintuple& v) const;
  Eigen::VectorXd eval_h(const Eigen::VectorXd& y) const;

  /// Evaluates A on every path of a node block.
  virtual NodeDrivers eval_batch(double t, const NodeBlock& v) const;
  /// h applied row-wise to an n x d_H block.
  virtual Eigen::MatrixXd h_batch(const Eigen::MatrixXd& y) const;

 protected:
  virtual DriverQuintuple eval_raw(double t, const StateQuintuple& v) const = 0;
  virtual Eigen::VectorXd h_raw(const Eigen::VectorXd& y) const = 0;

 private:
  StateLayout layout_;
  std::string name_;
  std::optional<MonotoneConstants> declared_;
};

/// Coefficients affine in the stacked coordinates (y, Y, z, Z, k):
/// stack(A(t, v)) = drift * stack(v) + offset, h(y) = h_matrix * y + h_offset.
/// The output stacking follows pairing order (f, b, g, sigma, phi).
class LinearCoefficients final : public CoefficientSet {
 public:
  LinearCoefficients(StateLayout layout, Eigen::MatrixXd drift, Eigen::VectorXd offset,
                     Eigen::MatrixXd h_matrix, Eigen::VectorXd h_offset,
                     std::string name = "linear");

  const Eigen::MatrixXd& drift() const { return drift_; }
  const Eigen::VectorXd& offset() const { return offset_; }
  const Eigen::MatrixXd& h_matrix() const { return h_matrix_; }
  const Eigen::VectorXd& h_offset() const { return h_offset_; }

  NodeDrivers eval_batch(double t, const NodeBlock& v) const override;
  Eigen::MatrixXd h_batch(const Eigen::MatrixXd& y) const override;

 protected:
  DriverQuintuple eval_raw(double t, const StateQuintuple& v) const override;
  Eigen::VectorXd h_raw(const Eigen::VectorXd& y) const override;

 private:
  Eigen::MatrixXd drift_;
  Eigen::VectorXd offset_;
  Eigen::MatrixXd h_matrix_;
  Eigen::VectorXd h_offset_;
};

/// Coefficients given as callables, for nonlinear problems defined in code.
struct CoefficientFunctions {
  std::function<Eigen::VectorXd(double, const StateQuintuple&)> b, f;
  std::function<Eigen::MatrixXd(double, const StateQuintuple&)> sigma, g;
  /// phi(t, v, j) for mark j.
  std::function<Eigen::VectorXd(double, const StateQuintuple&, int)> phi;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;
};

class FunctionCoefficients final : public CoefficientSet {
 public:
  FunctionCoefficients(StateLayout layout, CoefficientFunctions fns,
                       std::string name = "functions");

 protected:
  DriverQuintuple eval_raw(double t, const StateQuintuple& v) const override;
  Eigen::VectorXd h_raw(const Eigen::VectorXd& y) const override;

 private:
  CoefficientFunctions fns_;
};

/// Perturbation processes (b0, f0, sigma0, g0, phi0) on the full grid plus
/// the terminal offset phi_T (per path). Stored as NodeDrivers per node.
struct AffinePerturbation {
  std::vector<NodeDrivers> nodes;  // steps + 1 entries
  Eigen::MatrixXd phi_T;           // n x d_H

  static AffinePerturbation Zero(const StateLayout& l, int steps, int n_paths);
  /// Deterministic constant perturbation broadcast over grid and paths.
  static AffinePerturbation Constant(const StateLayout& l, int steps, int n_paths,
                                     const DriverQuintuple& value,
                                     const Eigen::VectorXd& phi_T);
  bool empty_paths() const { return nodes.empty(); }
};

/// Closed-form solution t -> v(t), deterministic in these instances.
struct ClosedForm {
  std::string name;
  std::function<StateQuintuple(double)> value;
};

/// Constant offsets for the decoupled instance.
struct DecoupledParams {
  double theta1 = 0.0;
  DriverQuintuple offsets;  // (f0, b0, g0, sigma0, phi0) as constants
  Eigen::VectorXd phi_T;
};

struct BuiltinProblem {
  std::shared_ptr<const CoefficientSet> coeffs;
  ProblemSpec spec;
  std::optional<DecoupledParams> decoupled;
  std::vector<ClosedForm> closed_forms;
};

/// Example with c = 1, gamma = 1/4, theta1 = theta2 = 1/4, beta = 1;
/// requires d_E1 == d_E2.
BuiltinProblem builtin_example1(const StateLayout& layout, double T, Eigen::VectorXd x);
/// Scalar counterexample on T = 3 pi / 4 with two exact solutions.
BuiltinProblem builtin_example2(double T = 0.75 * 3.14159265358979323846);
/// Decoupled linear system; closed form available when all offsets are zero
/// and phi_T is a constant.
BuiltinProblem builtin_decoupled(const StateLayout& layout, double T, Eigen::VectorXd x,
                                 DecoupledParams params);

/// Dispatch by name: "example1", "example2", "decoupled".
BuiltinProblem builtin(const std::string& name, const StateLayout& layout, double T,
                       Eigen::VectorXd x, std::optional<DecoupledParams> params = {});

}  // namespace fbdsde
