#include "fbdsde/kernel.hpp"

#include <doctest.h>

#include <random>

using namespace fbdsde;

namespace {

double rms(const Eigen::MatrixXd& m) { return std::sqrt(m.squaredNorm() / m.rows()); }

double sup_rms(const NodeSeries& s, const std::function<Eigen::MatrixXd(int)>& expect, int upto) {
  double worst = 0.0;
  for (int i = 0; i < upto; ++i) worst = std::max(worst, rms(s[i] - expect(i)));
  return worst;
}

NodeSeries constant_series(int count, int n, int cols, double v) {
  return NodeSeries(count, Eigen::MatrixXd::Constant(n, cols, v));
}

ForwardDrivers forward_drivers(const StateLayout& l, int N, int n, double beta, double sigma) {
  return {constant_series(N, n, l.d_H, beta), constant_series(N, n, l.Z_cols(), sigma),
          constant_series(N, n, l.k_cols(), 0.0)};
}

BackwardDrivers backward_drivers(const StateLayout& l, int N, int n, double F, double kappa) {
  return {constant_series(N, n, l.d_H, F), constant_series(N + 1, n, l.z_cols(), 0.0),
          Eigen::MatrixXd::Constant(n, l.d_H, kappa)};
}

}  // namespace

TEST_SUITE("regression") {

TEST_CASE("basis sizes") {
  CHECK(RegressionBasis{2, true, {}}.size(3) == 10);
  CHECK(RegressionBasis{2, false, {}}.size(3) == 7);
  CHECK(RegressionBasis{0, true, {}}.size(5) == 1);
  CHECK(RegressionBasis{3, true, {}}.size(2) == 10);
}

TEST_CASE("constants are fixed by the projection") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(500, 3, [&] { return g(rng); });
  const RegressionFit r = regress_condexp(Eigen::MatrixXd::Constant(500, 2, 4.5), x, {});
  CHECK((r.fitted.array() - 4.5).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("linear targets are recovered") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(400, 1, [&] { return g(rng); });
  for (double noise : {1e-3, 1e-6}) {
    const Eigen::MatrixXd y = 2 * x + noise * Eigen::MatrixXd::NullaryExpr(400, 1, [&] { return g(rng); });
    const RegressionFit r = regress_condexp(y, x, RegressionBasis{1, true, 0.0});
    CHECK(rms(r.fitted - 2 * x) <= 5 * noise);
  }
}

TEST_CASE("martingale projection of W_T") {
  const StateLayout l;
  const int n = 100000;
  const NoiseEnsemble noise = sample_noise(3, n, TimeGrid(1.0, 10), l, 4);
  const auto W = noise.W_nodes();
  for (int i : {2, 5, 8}) {
    const RegressionFit r = regress_condexp(W[10], W[i], RegressionBasis{1, true, {}});
    const double t = noise.grid.t(i);
    CHECK(rms(r.fitted - W[i]) <= 3 * std::sqrt(2 * (1 - t) / n));
  }
}

TEST_CASE("too few paths for the basis") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(50, 3);
  CHECK_THROWS_AS(Projection(x, RegressionBasis{2, true, {}}), RegressionError);
}

TEST_CASE("constant features are dropped") {
  Eigen::MatrixXd x(200, 2);
  x.col(0) = Eigen::VectorXd::LinSpaced(200, -1, 1);
  x.col(1).setConstant(3.0);
  const Projection p(x, RegressionBasis{2, true, 0.0});
  const Eigen::MatrixXd fitted = p.fit(x.col(0).array().square().matrix());
  CHECK(rms(fitted - x.col(0).array().square().matrix()) <= 1e-10);
}

}  // TEST_SUITE

TEST_SUITE("kernel") {

TEST_CASE("forward stage without drivers stays at x") {
  const StateLayout l;
  const int N = 20, n = 2000;
  const NoiseEnsemble noise = sample_noise(1, n, TimeGrid(1.0, N), l);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  const ForwardSolution s =
      solve_forward_frozen(forward_drivers(l, N, n, 0.0, 0.0), noise, fs, Eigen::VectorXd::Constant(1, 1.3), {});
  CHECK(sup_rms(s.y, [&](int) { return Eigen::MatrixXd::Constant(n, 1, 1.3); }, N + 1) <= 1e-10);
  CHECK(sup_rms(s.z, [&](int) { return Eigen::MatrixXd::Zero(n, 1); }, N + 1) <= 1e-10);
}

TEST_CASE("forward stage with constant drift") {
  const StateLayout l;
  const int N = 20, n = 2000;
  const NoiseEnsemble noise = sample_noise(2, n, TimeGrid(2.0, N), l);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  const ForwardSolution s =
      solve_forward_frozen(forward_drivers(l, N, n, 0.5, 0.0), noise, fs, Eigen::VectorXd::Constant(1, 1.0), {});
  CHECK(sup_rms(s.y, [&](int i) { return Eigen::MatrixXd::Constant(n, 1, 1.0 + 0.5 * noise.grid.t(i)); }, N + 1) <=
        1e-9);
  // z fits -0.5 dB_i against later information; only sampling error remains
  const double p = 4.0;
  CHECK(sup_rms(s.z, [&](int) { return Eigen::MatrixXd::Zero(n, 1); }, N + 1) <=
        3 * 0.5 * std::sqrt(noise.grid.dt() * p / n));
}

TEST_CASE("forward stage with constant diffusion") {
  const StateLayout l;
  const int N = 20, n = 20000;
  const double S = 0.8;
  const NoiseEnsemble noise = sample_noise(3, n, TimeGrid(1.0, N), l, 4);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  const ForwardSolution s =
      solve_forward_frozen(forward_drivers(l, N, n, 0.0, S), noise, fs, Eigen::VectorXd::Zero(1), {});
  const auto W = noise.W_nodes();
  CHECK(sup_rms(s.y, [&](int i) { return Eigen::MatrixXd(S * W[i]); }, N + 1) <= 1e-6);
  CHECK(sup_rms(s.z, [&](int) { return Eigen::MatrixXd::Zero(n, 1); }, N + 1) <= 0.05);
  const Eigen::ArrayXd yT = s.y[N].col(0).array();
  const double var = (yT - yT.mean()).square().mean();
  CHECK(std::abs(var - S * S) <= 4 * S * S * std::sqrt(2.0 / n));
}

TEST_CASE("backward stage with constant terminal and driver") {
  StateLayout l;
  l.marks = MarkSpace(Eigen::VectorXd::Constant(1, 1.5));
  const int N = 25, n = 2000;
  const NoiseEnsemble noise = sample_noise(4, n, TimeGrid(1.0, N), l);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  const BackwardSolution c = solve_backward_frozen(backward_drivers(l, N, n, 0.0, 2.0), noise, fs, {});
  CHECK(sup_rms(c.Y, [&](int) { return Eigen::MatrixXd::Constant(n, 1, 2.0); }, N + 1) <= 1e-10);
  CHECK(sup_rms(c.Z, [&](int) { return Eigen::MatrixXd::Zero(n, 1); }, N + 1) <= 1e-10);
  CHECK(sup_rms(c.k, [&](int) { return Eigen::MatrixXd::Zero(n, 1); }, N + 1) <= 1e-10);

  // Y_t = kappa - F (T - t) under Y_t = xi - int_t^T F ds - ...
  const BackwardSolution d = solve_backward_frozen(backward_drivers(l, N, n, -0.3, 1.7), noise, fs, {});
  CHECK(sup_rms(d.Y, [&](int i) { return Eigen::MatrixXd::Constant(n, 1, 1.7 + 0.3 * (1.0 - noise.grid.t(i))); },
                N + 1) <= 1e-9);
}

TEST_CASE("martingale representation of W_T") {
  const StateLayout l;
  const int N = 50, n = 100000;
  const NoiseEnsemble noise = sample_noise(5, n, TimeGrid(1.0, N), l, 4);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  BackwardDrivers d = backward_drivers(l, N, n, 0.0, 0.0);
  const auto W = noise.W_nodes();
  d.terminal = W[N];
  KernelOptions ko;
  ko.basis.degree = 1;
  const BackwardSolution s = solve_backward_frozen(d, noise, fs, ko);
  CHECK(sup_rms(s.Y, [&](int i) { return W[i]; }, N + 1) <= 0.05);
  CHECK(sup_rms(s.Z, [&](int) { return Eigen::MatrixXd::Ones(n, 1); }, N) <= 0.05);
  CHECK(sup_rms(s.k, [&](int) { return Eigen::MatrixXd::Zero(n, 1); }, N) <= 0.05);
}

TEST_CASE("backward stage is linear") {
  const StateLayout l;
  const int N = 10, n = 3000;
  const NoiseEnsemble noise = sample_noise(6, n, TimeGrid(1.0, N), l);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  const auto W = noise.W_nodes();
  const auto Nn = noise.N_nodes();
  BackwardDrivers a = backward_drivers(l, N, n, 0.2, 0.0), b = backward_drivers(l, N, n, -0.1, 0.0);
  a.terminal = W[N].array().square().matrix();
  b.terminal = Nn[N];
  BackwardDrivers ab = a;
  for (int i = 0; i < N; ++i) ab.F[i] = 2 * a.F[i] - b.F[i];
  ab.terminal = 2 * a.terminal - b.terminal;
  const BackwardSolution sa = solve_backward_frozen(a, noise, fs, {});
  const BackwardSolution sb = solve_backward_frozen(b, noise, fs, {});
  const BackwardSolution sab = solve_backward_frozen(ab, noise, fs, {});
  for (int i = 0; i <= N; ++i) {
    CHECK(rms(sab.Y[i] - (2 * sa.Y[i] - sb.Y[i])) <= 1e-8);
    CHECK(rms(sab.Z[i] - (2 * sa.Z[i] - sb.Z[i])) <= 1e-8);
    CHECK(rms(sab.k[i] - (2 * sa.k[i] - sb.k[i])) <= 1e-8);
  }
}

TEST_CASE("decoupled system") {
  const StateLayout l;
  const int N = 40, n = 5000;
  const NoiseEnsemble noise = sample_noise(7, n, TimeGrid(1.0, N), l);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.6);

  const EnsembleProcess trivial = solve_decoupled_34(0.0, AffinePerturbation::Zero(l, N, n), noise, x, {});
  for (const auto& nb : trivial.nodes) {
    CHECK((nb.y.array() - 0.6).abs().maxCoeff() <= 1e-10);
    CHECK((nb.Y.array() - 0.6).abs().maxCoeff() <= 1e-10);
    CHECK(nb.Z.cwiseAbs().maxCoeff() <= 1e-10);
  }

  const auto pert = AffinePerturbation::Constant(l, N, n, DriverQuintuple::Zero(l), Eigen::VectorXd::Constant(1, 0.7));
  const EnsembleProcess hand = solve_decoupled_34(0.3, pert, noise, x, {});
  for (int i = 0; i <= N; ++i) {
    const double Y = 0.6 + 0.7 + 0.3 * 0.6 * (1.0 - noise.grid.t(i));
    CHECK((hand.nodes[i].Y.array() - Y).abs().maxCoeff() <= 1e-8);
  }

  // x + S W_T as the terminal: Y follows y and Z recovers S
  DriverQuintuple off = DriverQuintuple::Zero(l);
  off.sigma(0, 0) = 0.5;
  const auto diffusive = AffinePerturbation::Constant(l, N, n, off, Eigen::VectorXd::Zero(1));
  const EnsembleProcess m = solve_decoupled_34(0.0, diffusive, noise, x, {});
  for (int i = 0; i < N; ++i) {
    CHECK(rms(m.nodes[i].Y - m.nodes[i].y) <= 0.02);
    CHECK(rms(m.nodes[i].Z.array() - 0.5) <= 0.05);
  }
}

TEST_CASE("shape errors") {
  const StateLayout l;
  const NoiseEnsemble noise = sample_noise(8, 100, TimeGrid(1.0, 5), l);
  const FeatureSet fs = FeatureSet::from_noise(noise);
  ForwardDrivers d = forward_drivers(l, 4, 100, 0.0, 0.0);
  CHECK_THROWS_AS(solve_forward_frozen(d, noise, fs, Eigen::VectorXd::Zero(1), {}), DimensionError);
  CHECK_THROWS_AS(solve_forward_frozen(forward_drivers(l, 5, 100, 0, 0), noise, fs, Eigen::VectorXd::Zero(2), {}),
                  DimensionError);
}

}  // TEST_SUITE
