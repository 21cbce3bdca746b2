#include "fbdsde/kernel.hpp"

#include <algorithm>
#include <string>

namespace fbdsde {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what, int node) {
  if (!m.allFinite())
    throw KernelError(std::string("non-finite ") + what + " at node " + std::to_string(node));
}

void check_series(const NodeSeries& s, int need, Eigen::Index rows, Eigen::Index cols,
                  const char* what) {
  if (static_cast<int>(s.size()) < need)
    throw DimensionError(std::string(what) + ": expected " + std::to_string(need) + " nodes");
  for (int i = 0; i < need; ++i)
    if (s[i].rows() != rows || s[i].cols() != cols)
      throw DimensionError(std::string(what) + ": wrong block shape at node " + std::to_string(i));
}

Eigen::MatrixXd fit(const Projection& proj, const Eigen::MatrixXd& target,
                    StageDiagnostics* diag) {
  FitDiagnostics d;
  Eigen::MatrixXd out = proj.fit(target, diag ? &d : nullptr);
  if (diag) diag->absorb(d);
  return out;
}

}  // namespace

void StageDiagnostics::absorb(const FitDiagnostics& d) {
  ++regressions;
  max_condition = std::max(max_condition, d.condition);
  max_residual_rms = std::max(max_residual_rms, d.residual_rms);
  max_basis_size = std::max(max_basis_size, d.basis_size);
}

void StageDiagnostics::absorb(const StageDiagnostics& d) {
  regressions += d.regressions;
  max_condition = std::max(max_condition, d.max_condition);
  max_residual_rms = std::max(max_residual_rms, d.max_residual_rms);
  max_basis_size = std::max(max_basis_size, d.max_basis_size);
}

FeatureSet FeatureSet::from_noise(const NoiseEnsemble& noise) {
  const auto W = noise.W_nodes();
  const auto B = noise.B_future();
  const auto N = noise.N_nodes();
  FeatureSet fs;
  fs.nodes.resize(noise.steps() + 1);
  for (int i = 0; i <= noise.steps(); ++i) {
    Eigen::MatrixXd f(noise.n_paths, W[i].cols() + B[i].cols() + N[i].cols());
    f << W[i], B[i], N[i];
    fs.nodes[i] = std::move(f);
  }
  return fs;
}

Eigen::MatrixXd FeatureSet::at(int i, const Eigen::MatrixXd* extra) const {
  if (!extra) return nodes.at(i);
  const auto& base = nodes.at(i);
  Eigen::MatrixXd f(base.rows(), base.cols() + extra->cols());
  f << base, *extra;
  return f;
}

Eigen::MatrixXd row_outer(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw DimensionError("row_outer: row counts differ");
  Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r)
    for (Eigen::Index c = 0; c < b.cols(); ++c)
      out.col(r * b.cols() + c) = a.col(r).cwiseProduct(b.col(c));
  return out;
}

ForwardSolution solve_forward_frozen(const ForwardDrivers& drv, const NoiseEnsemble& noise,
                                     const FeatureSet& features, const Eigen::VectorXd& x,
                                     const KernelOptions& opts, const NodeSeries* extra,
                                     StageDiagnostics* diag) {
  const auto& l = noise.layout;
  const int N = noise.steps(), n = noise.n_paths;
  const double dt = noise.grid.dt();
  if (x.size() != l.d_H) throw DimensionError("initial condition must lie in H");
  check_series(drv.beta, N, n, l.d_H, "beta");
  check_series(drv.Sigma, N, n, l.Z_cols(), "Sigma");
  check_series(drv.Phi, N, n, l.k_cols(), "Phi");

  ForwardSolution out;
  out.y.resize(N + 1);
  out.z.resize(N + 1);
  out.y[0] = x.transpose().replicate(n, 1);
  // Reversed time runs i = 0..N-1 here: y_{i+1} = E[Xi_i | F_{t_{i+1}}], and
  // z_{i+1} is the dB_i covariation of y_i. The known Sigma dW and Phi dN
  // terms stay out of the covariation, as G dB does in the backward stage.
  for (int i = 0; i < N; ++i) {
    Eigen::MatrixXd xi = out.y[i] + drv.beta[i] * dt;
    xi += apply_increment(drv.Sigma[i], noise.dW[i]);
    xi += apply_jump(drv.Phi[i], noise.dN[i]);
    require_finite(xi, "forward target", i);

    const Eigen::MatrixXd feat = features.at(i + 1, extra ? &(*extra)[i + 1] : nullptr);
    out.y[i + 1] = fit(Projection(feat, opts.basis), xi, diag);
    out.z[i + 1] = fit(Projection(feat, opts.covariation_basis()),
                       row_outer(out.y[i] - out.y[i + 1], noise.dB[i]) / dt, diag);
    require_finite(out.y[i + 1], "y", i + 1);
    require_finite(out.z[i + 1], "z", i + 1);
  }
  if (N >= 1) {
    const Projection proj0(features.at(0, extra ? &(*extra)[0] : nullptr),
                           opts.covariation_basis());
    out.z[0] = fit(proj0, out.z[1], diag);
  } else {
    out.z[0] = Eigen::MatrixXd::Zero(n, l.z_cols());
  }
  return out;
}

BackwardSolution solve_backward_frozen(const BackwardDrivers& drv, const NoiseEnsemble& noise,
                                       const FeatureSet& features, const KernelOptions& opts,
                                       const NodeSeries* extra, StageDiagnostics* diag) {
  const auto& l = noise.layout;
  const int N = noise.steps(), n = noise.n_paths;
  const double dt = noise.grid.dt();
  check_series(drv.F, N, n, l.d_H, "F");
  check_series(drv.G, N + 1, n, l.z_cols(), "G");
  if (drv.terminal.rows() != n || drv.terminal.cols() != l.d_H)
    throw DimensionError("terminal value must be n_paths x d_H");
  require_finite(drv.terminal, "terminal value", N);

  Eigen::RowVectorXd jump_scale(l.k_cols());
  for (int j = 0; j < l.m(); ++j)
    jump_scale.segment(j * l.d_H, l.d_H).setConstant(1.0 / (l.marks.weight(j) * dt));

  BackwardSolution out;
  out.Y.resize(N + 1);
  out.Z.resize(N + 1);
  out.k.resize(N + 1);
  out.Y[N] = drv.terminal;
  for (int i = N - 1; i >= 0; --i) {
    Eigen::MatrixXd target = out.Y[i + 1] - drv.F[i] * dt;
    target -= apply_increment(drv.G[i + 1], noise.dB[i]);
    require_finite(target, "backward target", i);

    const Eigen::MatrixXd feat = features.at(i, extra ? &(*extra)[i] : nullptr);
    out.Y[i] = fit(Projection(feat, opts.basis), target, diag);
    const Eigen::MatrixXd dM = out.Y[i + 1] - out.Y[i];
    Eigen::MatrixXd cov(n, l.Z_cols() + l.k_cols());
    cov << row_outer(dM, noise.dW[i]) / dt,
        (row_outer(noise.dN[i], dM).array().rowwise() * jump_scale.array()).matrix();
    const Eigen::MatrixXd fitted = fit(Projection(feat, opts.covariation_basis()), cov, diag);
    out.Z[i] = fitted.leftCols(l.Z_cols());
    out.k[i] = fitted.rightCols(l.k_cols());
    require_finite(out.Y[i], "Y", i);
    require_finite(fitted, "Z/k", i);
  }
  out.Z[N] = N >= 1 ? out.Z[N - 1] : Eigen::MatrixXd::Zero(n, l.Z_cols());
  out.k[N] = N >= 1 ? out.k[N - 1] : Eigen::MatrixXd::Zero(n, l.k_cols());
  return out;
}

EnsembleProcess assemble(const NoiseEnsemble& noise, const ForwardSolution& fwd,
                         const BackwardSolution& bwd) {
  EnsembleProcess e = EnsembleProcess::Zero(noise.layout, noise.grid.T, noise.steps(),
                                            noise.n_paths);
  for (int i = 0; i <= noise.steps(); ++i) {
    auto& nb = e.nodes[i];
    nb.y = fwd.y.at(i);
    nb.z = fwd.z.at(i);
    nb.Y = bwd.Y.at(i);
    nb.Z = bwd.Z.at(i);
    nb.k = bwd.k.at(i);
  }
  return e;
}

EnsembleProcess solve_decoupled_34(double theta1, const AffinePerturbation& pert,
                                   const NoiseEnsemble& noise, const Eigen::VectorXd& x,
                                   const KernelOptions& opts, StageDiagnostics* diag) {
  if (theta1 < 0) throw std::invalid_argument("theta1 must be >= 0");
  const int N = noise.steps();
  if (static_cast<int>(pert.nodes.size()) != N + 1)
    throw DimensionError("perturbation must cover every grid node");
  const FeatureSet features = FeatureSet::from_noise(noise);

  ForwardDrivers fd;
  for (const auto& nd : pert.nodes) {
    fd.beta.push_back(nd.b);
    fd.Sigma.push_back(nd.sigma);
    fd.Phi.push_back(nd.phi);
  }
  const ForwardSolution fwd = solve_forward_frozen(fd, noise, features, x, opts, nullptr, diag);

  BackwardDrivers bd;
  for (int i = 0; i <= N; ++i) {
    bd.F.push_back(pert.nodes[i].f - theta1 * fwd.y[i]);
    bd.G.push_back(pert.nodes[i].g - theta1 * fwd.z[i]);
  }
  bd.terminal = fwd.y[N] + pert.phi_T;
  const BackwardSolution bwd =
      solve_backward_frozen(bd, noise, features, opts, &fwd.y, diag);
  return assemble(noise, fwd, bwd);
}

NodeSeries component(const EnsembleProcess& e, Eigen::MatrixXd NodeBlock::*field) {
  NodeSeries out;
  out.reserve(e.nodes.size());
  for (const auto& nb : e.nodes) out.push_back(nb.*field);
  return out;
}

}  // namespace fbdsde
