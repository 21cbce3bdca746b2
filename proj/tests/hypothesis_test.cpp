#include "fbdsde/hypothesis.hpp"

#include <doctest.h>

#include <random>

using namespace fbdsde;

namespace {

PairSample pair_with_difference(const StateLayout& l, const StateQuintuple& delta, double t = 0.1) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  StateQuintuple base = StateQuintuple::Zero(l);
  base.y = base.y.unaryExpr([&](double) { return g(rng); });
  base.Y = base.Y.unaryExpr([&](double) { return g(rng); });
  return {base + delta, base, t};
}

StateQuintuple scalar_delta(double y, double Y, double z, double Z, double k) {
  StateQuintuple d = StateQuintuple::Zero(StateLayout{});
  d.y(0) = y;
  d.Y(0) = Y;
  d.z(0, 0) = z;
  d.Z(0, 0) = Z;
  d.k(0, 0) = k;
  return d;
}

std::shared_ptr<LinearCoefficients> zero_coefficients(const StateLayout& l) {
  const int S = l.stacked_size();
  return std::make_shared<LinearCoefficients>(l, Eigen::MatrixXd::Zero(S, S), Eigen::VectorXd::Zero(S),
                                              Eigen::MatrixXd::Zero(l.d_H, l.d_H),
                                              Eigen::VectorXd::Zero(l.d_H), "zero");
}

}  // namespace

TEST_SUITE("hypothesis") {

TEST_CASE("Example 1 monotonicity slack is a negative quadratic form") {
  const StateLayout l;
  const auto p = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  const PairSampler sampler(l, 1.0, 5);
  for (int i = 0; i < 200; ++i) {
    const PairSample s = sampler(i);
    const StateQuintuple d = s.v - s.v_prime;
    const DriverQuintuple dA = p.coeffs->eval_A(s.t, s.v) - p.coeffs->eval_A(s.t, s.v_prime);
    const double slack = pairing_A(dA, d, l) +
                         0.25 * (d.y.squaredNorm() + d.z.squaredNorm()) +
                         0.25 * (d.Y.squaredNorm() + d.Z.squaredNorm() + jump_sq_norm(d.k, l.marks));
    const double form = -0.75 * (d.y.squaredNorm() + d.Y.squaredNorm() + d.z.squaredNorm());
    CHECK(slack == doctest::Approx(form).epsilon(1e-10).scale(1.0));
  }
  const Verdict v = verify_A1(*p.coeffs, 0.25, 0.25, sampler, 2000);
  CHECK(v.pass);
  CHECK(v.n_samples == 2000);
}

TEST_CASE("Example 2 violates (A1) with slack 1 + theta2") {
  const auto p = builtin_example2();
  const StateLayout& l = p.spec.layout;
  Witness w;
  w.inequality = "A1";
  w.pair = pair_with_difference(l, scalar_delta(0, 1, 0, 0, 0));
  for (double th2 : {0.0, 0.3, 2.0}) CHECK(recompute_slack(*p.coeffs, w, 0.7, th2) == doctest::Approx(1 + th2));

  const PairSampler sampler(l, p.spec.T, 5);
  const Verdict v = verify_A1(*p.coeffs, 0.0, 0.0, sampler, sampler.ray_batch_size());
  REQUIRE_FALSE(v.pass);
  const Witness& first = v.witnesses.front();
  CHECK(first.sample_index < sampler.ray_batch_size());
  CHECK(recompute_slack(*p.coeffs, first, 0.0, 0.0) == doctest::Approx(first.slack));
  const Verdict rev = verify_A1(*p.coeffs, 0.0, 0.0, sampler, sampler.ray_batch_size(), Direction::Reversed);
  CHECK_FALSE(rev.pass);
}

TEST_CASE("equal arguments sit on the boundary") {
  const auto p = builtin_example2();
  Witness w;
  w.pair = pair_with_difference(p.spec.layout, StateQuintuple::Zero(p.spec.layout));
  for (const char* name : {"A1", "A1'", "A2", "A2'", "A4.b", "A4.f", "A4.sigma", "A4.g", "A4.phi", "A4.h"}) {
    w.inequality = name;
    CHECK(recompute_slack(*p.coeffs, w, 0.5, 0.5) == 0.0);
  }
}

TEST_CASE("terminal monotonicity") {
  const StateLayout l;
  const auto ex1 = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  const PairSampler sampler(l, 1.0, 9);
  CHECK(verify_A2(*ex1.coeffs, 1.0, sampler, 1000).pass);
  const Verdict strict = verify_A2(*ex1.coeffs, 1.5, sampler, 1000);
  CHECK_FALSE(strict.pass);
  CHECK(strict.witnesses.front().slack > 0);

  const auto ex2 = builtin_example2();
  CHECK(verify_A2(*ex2.coeffs, 1.0, PairSampler(l, ex2.spec.T, 9), 1000, Direction::Reversed).pass);
}

TEST_CASE("Example 1 Lipschitz bounds") {
  const StateLayout l;
  const auto p = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  Witness w;
  // sigma with gamma = 0.05: |d sigma|^2 = 1/16 against c * 0 + 0.025
  w.inequality = "A4.sigma";
  w.pair = pair_with_difference(l, scalar_delta(0, 0, 1, 0, 0));
  CHECK(recompute_slack(*p.coeffs, w, 1.0, 0.05) == doctest::Approx(1.0 / 16 - 0.025));
  CHECK(recompute_slack(*p.coeffs, w, 1.0, 0.25) <= 0.0);

  // g = z + Z/4: dz = dZ = 1 gives 25/16 against c * 1 + gamma * 1 = 5/4
  w.inequality = "A4.g";
  w.pair = pair_with_difference(l, scalar_delta(0, 0, 1, 1, 0));
  CHECK(recompute_slack(*p.coeffs, w, 1.0, 0.25) == doctest::Approx(25.0 / 16 - 1.25));

  const Verdict v = verify_A4(*p.coeffs, 1.0, 0.25, PairSampler(l, 1.0, 3), 2000);
  CHECK_FALSE(v.pass);
  for (const auto& x : v.witnesses) CHECK(x.inequality == "A4.g");
  // with c = 2 every bound holds
  CHECK(verify_A4(*p.coeffs, 2.0, 0.25, PairSampler(l, 1.0, 3), 2000).pass);
}

TEST_CASE("constant estimation") {
  const StateLayout l;
  const auto ex1 = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  const HypothesisReport r = estimate_constants(*ex1.coeffs, PairSampler(l, 1.0, 11), 10000);
  REQUIRE(r.estimate.theta);
  CHECK(std::abs(*r.estimate.theta - 0.25) <= 0.01);
  REQUIRE(r.estimate.beta);
  CHECK(std::abs(*r.estimate.beta - 1.0) <= 1e-6);
  CHECK(r.theta_sum_positive);

  const auto ex2 = builtin_example2();
  const HypothesisReport r2 = estimate_constants(*ex2.coeffs, PairSampler(l, ex2.spec.T, 11), 1000);
  CHECK_FALSE(r2.estimate.theta);
  CHECK_FALSE(r2.estimate.theta_reversed);
  CHECK(r2.A1.status == HypothesisStatus::Violated);
  CHECK_FALSE(r2.A1.witnesses.empty());

  const auto zero = zero_coefficients(l);
  const HypothesisReport r0 = estimate_constants(*zero, PairSampler(l, 1.0, 11), 1000);
  REQUIRE(r0.estimate.theta);
  CHECK(*r0.estimate.theta == doctest::Approx(0.0).epsilon(1e-9));
  REQUIRE(r0.estimate.beta);
  CHECK(*r0.estimate.beta == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_FALSE(r0.theta_sum_positive);
}

TEST_CASE("check reports against declared constants") {
  const StateLayout l;
  const auto ex1 = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  const HypothesisReport r = check_hypotheses(*ex1.coeffs, PairSampler(l, 1.0, 1), 2000);
  CHECK(r.A1.status == HypothesisStatus::VerifiedAtDeclared);
  CHECK(r.A2.status == HypothesisStatus::VerifiedAtDeclared);
  CHECK(r.A4.status == HypothesisStatus::Violated);
  CHECK(r.any_violation());
}

TEST_CASE("sampler is deterministic and starts with rays") {
  StateLayout l;
  l.d_H = 2;
  const PairSampler a(l, 1.0, 4), b(l, 1.0, 4);
  for (int i : {0, 5, a.ray_batch_size(), 999}) {
    const PairSample x = a(i), y = b(i);
    CHECK(x.t == y.t);
    CHECK(quintuple_sq_norm(x.v - y.v, l) == 0.0);
  }
  const PairSample ray = a(0);
  const StateQuintuple d = ray.v - ray.v_prime;
  int nonzero = 0;
  for (double n : {d.y.norm(), d.Y.norm(), d.z.norm(), d.Z.norm(), d.k.norm()}) nonzero += n > 0;
  CHECK(nonzero == 1);
}

}  // TEST_SUITE
