// Least-squares conditional expectations: polynomial bases in standardized
// conditioning features, unpenalized intercept, ridge on the rest.
#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

namespace fbdsde {

class RegressionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RegressionBasis {
  int degree = 2;
  /// Mixed monomials (x_a * x_b ...) in addition to pure powers.
  bool cross_terms = true;
  /// Ridge weight; default 1e-8 * n_paths.
  std::optional<double> ridge;

  /// Number of basis functions for `n_features` inputs, intercept included.
  int size(int n_features) const;
};

struct FitDiagnostics {
  int basis_size = 0;
  double residual_rms = 0.0;  // sqrt(mean_p |target - fitted|^2)
  double condition = 1.0;     // ratio of extreme LDLT pivots
};

/// Projection onto span{basis(features)} for one conditioning sigma-field.
/// Built once per node and reused for every target at that node.
class Projection {
 public:
  Projection(const Eigen::MatrixXd& features, const RegressionBasis& basis);

  /// Fitted values, one row per path, same width as `targets`.
  Eigen::MatrixXd fit(const Eigen::MatrixXd& targets, FitDiagnostics* diag = nullptr) const;

  int n_paths() const { return static_cast<int>(design_.rows()); }
  int basis_size() const { return static_cast<int>(design_.cols()) + 1; }
  double condition() const { return condition_; }

 private:
  Eigen::MatrixXd design_;  // centered non-constant basis columns
  Eigen::LDLT<Eigen::MatrixXd> gram_;
  double condition_ = 1.0;
};

struct RegressionFit {
  Eigen::MatrixXd fitted;
  FitDiagnostics diagnostics;
};

RegressionFit regress_condexp(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& features,
                              const RegressionBasis& basis);

/// Monomial exponent vectors of total degree 1..degree.
std::vector<std::vector<int>> monomial_exponents(int n_features, int degree, bool cross_terms);

}  // namespace fbdsde
