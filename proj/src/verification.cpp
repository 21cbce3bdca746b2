#include "fbdsde/verification.hpp"

#include <algorithm>
#include <cmath>

namespace fbdsde {

namespace {

double rms(const Eigen::MatrixXd& m) {
  return m.rows() ? std::sqrt(m.squaredNorm() / static_cast<double>(m.rows())) : 0.0;
}

}  // namespace

ResidualReport residual_report(const CoefficientSet& coeffs, const EnsembleProcess& v,
                               const NoiseEnsemble& noise, const Eigen::VectorXd& x) {
  noise.check_matches(v);
  if (!same_shape(coeffs.layout(), v.layout))
    throw DimensionError("coefficients and solution use different layouts");
  if (x.size() != v.layout.d_H) throw DimensionError("initial condition must lie in H");
  const int N = v.steps, n = v.n_paths;
  const double dt = v.dt();

  std::vector<NodeDrivers> A(N + 1);
  for (int i = 0; i <= N; ++i) A[i] = coeffs.eval_batch(i * dt, v.nodes[i]);

  ResidualReport rep;
  rep.steps = N;
  rep.n_paths = n;
  rep.T = v.T;
  rep.forward.resize(N + 1);
  rep.backward.resize(N + 1);
  for (int i = 0; i <= N; ++i) rep.t.push_back(noise.grid.t(i));

  // Forward: accumulate the step contributions left to right.
  Eigen::MatrixXd rhs = x.transpose().replicate(n, 1);
  rep.forward[0] = rms(v.nodes[0].y - rhs);
  for (int i = 0; i < N; ++i) {
    rhs += A[i].b * dt;
    rhs += apply_increment(A[i].sigma, noise.dW[i]);
    rhs -= apply_increment(v.nodes[i + 1].z, noise.dB[i]);
    rhs += apply_jump(A[i].phi, noise.dN[i]);
    rep.forward[i + 1] = rms(v.nodes[i + 1].y - rhs);
  }

  // Backward: accumulate right to left from h(y_T) of the solved y_T.
  const Eigen::MatrixXd hT = coeffs.h_batch(v.nodes[N].y);
  rep.terminal_defect = rms(v.nodes[N].Y - hT);
  Eigen::MatrixXd brhs = hT;
  rep.backward[N] = rep.terminal_defect;
  for (int i = N - 1; i >= 0; --i) {
    brhs -= A[i].f * dt;
    brhs -= apply_increment(v.nodes[i].Z, noise.dW[i]);
    brhs -= apply_increment(A[i + 1].g, noise.dB[i]);
    brhs -= apply_jump(v.nodes[i].k, noise.dN[i]);
    rep.backward[i] = rms(v.nodes[i].Y - brhs);
  }
  rep.sup_forward = *std::max_element(rep.forward.begin(), rep.forward.end());
  rep.sup_backward = *std::max_element(rep.backward.begin(), rep.backward.end());
  return rep;
}

ClosedFormError closed_form_error(const EnsembleProcess& v, const ClosedForm& analytic) {
  ClosedFormError err;
  double m2 = 0.0;
  const double dt = v.dt();
  Eigen::ArrayXd w(v.layout.k_cols());
  for (int j = 0; j < v.layout.m(); ++j)
    w.segment(j * v.layout.d_H, v.layout.d_H).setConstant(v.layout.marks.weight(j));
  for (int i = 0; i <= v.steps; ++i) {
    NodeBlock ref = NodeBlock::Zero(v.layout, 1);
    ref.set(0, analytic.value(i * dt));
    const NodeBlock& nb = v.nodes[i];
    const double n = std::max(1, v.n_paths);
    const std::array<double, 5> sq = {
        (nb.y.rowwise() - ref.y.row(0)).squaredNorm() / n,
        (nb.Y.rowwise() - ref.Y.row(0)).squaredNorm() / n,
        (nb.z.rowwise() - ref.z.row(0)).squaredNorm() / n,
        (nb.Z.rowwise() - ref.Z.row(0)).squaredNorm() / n,
        ((nb.k.rowwise() - ref.k.row(0)).colwise().squaredNorm().array() * w.transpose())
                .sum() /
            n};
    double total = 0.0;
    for (int c = 0; c < 5; ++c) {
      err.component_sup[c] = std::max(err.component_sup[c], std::sqrt(sq[c]));
      total += sq[c];
    }
    err.sup_l2 = std::max(err.sup_l2, std::sqrt(total));
    if (i < v.steps) m2 += total * dt;
  }
  err.m2 = std::sqrt(m2);
  return err;
}

UniquenessResult uniqueness_probe(const ContinuationProblem& prob, const ContinuationConfig& cfg,
                                  const EnsembleProcess& start_a, const EnsembleProcess& start_b,
                                  const std::string& label_a, const std::string& label_b) {
  UniquenessResult res;
  res.first = picard_solve(prob, 1.0, start_a, cfg);
  if (!res.first.converged())
    throw SolverError(res.first.status, "start '" + label_a + "': " + res.first.note);
  res.second = picard_solve(prob, 1.0, start_b, cfg);
  if (!res.second.converged())
    throw SolverError(res.second.status, "start '" + label_b + "': " + res.second.note);
  res.m2_distance = std::sqrt(m2_sq_distance(res.first.solution, res.second.solution));
  return res;
}

}  // namespace fbdsde
