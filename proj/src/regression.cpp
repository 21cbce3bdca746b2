#include "fbdsde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fbdsde {

namespace {

void extend(std::vector<std::vector<int>>& out, std::vector<int>& e, int var, int remaining,
            bool cross_terms) {
  if (var == static_cast<int>(e.size())) {
    int total = 0, used = 0;
    for (int p : e) {
      total += p;
      used += p > 0;
    }
    if (total > 0 && (cross_terms || used == 1)) out.push_back(e);
    return;
  }
  for (int p = 0; p <= remaining; ++p) {
    e[var] = p;
    extend(out, e, var + 1, remaining - p, cross_terms);
  }
  e[var] = 0;
}

}  // namespace

std::vector<std::vector<int>> monomial_exponents(int n_features, int degree, bool cross_terms) {
  std::vector<std::vector<int>> out;
  if (n_features <= 0 || degree <= 0) return out;
  std::vector<int> e(n_features, 0);
  extend(out, e, 0, degree, cross_terms);
  return out;
}

int RegressionBasis::size(int n_features) const {
  return 1 + static_cast<int>(monomial_exponents(n_features, degree, cross_terms).size());
}

Projection::Projection(const Eigen::MatrixXd& features, const RegressionBasis& basis) {
  if (basis.degree < 0) throw RegressionError("basis degree must be >= 0");
  const Eigen::Index n = features.rows();
  // Standardize and drop columns without spread: they carry nothing beyond
  // the intercept and would only make the normal equations singular.
  Eigen::MatrixXd x(n, features.cols());
  int d = 0;
  if (n > 0) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      const double mean = features.col(c).mean();
      Eigen::VectorXd col = features.col(c).array() - mean;
      const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) continue;
      x.col(d++) = col / sd;
    }
  }
  x.conservativeResize(n, d);
  const auto exps = monomial_exponents(d, basis.degree, basis.cross_terms);
  const int p = static_cast<int>(exps.size()) + 1;
  if (n <= p)
    throw RegressionError("regression needs more paths (" + std::to_string(n) +
                          ") than basis functions (" + std::to_string(p) + ")");
  if (10 * p > n)
    throw RegressionError("basis size " + std::to_string(p) + " exceeds n_paths / 10 = " +
                          std::to_string(n / 10));

  design_.resize(n, p - 1);
  for (int b = 0; b < p - 1; ++b) {
    Eigen::ArrayXd col = Eigen::ArrayXd::Ones(n);
    for (int v = 0; v < d; ++v)
      for (int k = 0; k < exps[b][v]; ++k) col *= x.col(v).array();
    design_.col(b) = col.matrix();
  }
  if (p > 1) design_.rowwise() -= design_.colwise().mean();

  const double ridge = basis.ridge.value_or(1e-8 * static_cast<double>(n));
  if (ridge < 0) throw RegressionError("ridge parameter must be >= 0");
  Eigen::MatrixXd gram = design_.transpose() * design_;
  gram.diagonal().array() += ridge;
  gram_.compute(gram);
  if (p > 1) {
    const Eigen::VectorXd piv = gram_.vectorD().cwiseAbs();
    const double hi = piv.maxCoeff(), lo = piv.minCoeff();
    condition_ = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (gram_.info() != Eigen::Success || (ridge == 0.0 && !(lo > 1e-12 * std::max(hi, 1.0))))
      throw RegressionError(
          "rank-deficient normal equations (degenerate features); use a ridge parameter > 0");
  }
}

Eigen::MatrixXd Projection::fit(const Eigen::MatrixXd& targets, FitDiagnostics* diag) const {
  if (targets.rows() != design_.rows())
    throw RegressionError("targets and features disagree on the number of paths");
  const Eigen::RowVectorXd mean = targets.colwise().mean();
  Eigen::MatrixXd fitted = mean.replicate(targets.rows(), 1);
  if (design_.cols() > 0) {
    Eigen::MatrixXd centered = targets.rowwise() - mean;
    const Eigen::MatrixXd coef = gram_.solve(design_.transpose() * centered);
    fitted.noalias() += design_ * coef;
  }
  if (diag) {
    diag->basis_size = basis_size();
    diag->condition = condition_;
    diag->residual_rms =
        std::sqrt((targets - fitted).squaredNorm() / std::max<double>(1.0, targets.rows()));
  }
  return fitted;
}

RegressionFit regress_condexp(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& features,
                              const RegressionBasis& basis) {
  Projection proj(features, basis);
  RegressionFit out;
  out.fitted = proj.fit(targets, &out.diagnostics);
  return out;
}

}  // namespace fbdsde
