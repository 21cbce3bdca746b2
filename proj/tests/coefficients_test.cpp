#include "fbdsde/coefficients.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace fbdsde;

namespace {

StateQuintuple scalar_state(double y, double Y, double z, double Z, double k) {
  StateQuintuple v = StateQuintuple::Zero(StateLayout{});
  v.y(0) = y;
  v.Y(0) = Y;
  v.z(0, 0) = z;
  v.Z(0, 0) = Z;
  v.k(0, 0) = k;
  return v;
}

void check_drivers(const DriverQuintuple& a, double f, double b, double g, double s, double p) {
  CHECK(a.f(0) == doctest::Approx(f));
  CHECK(a.b(0) == doctest::Approx(b));
  CHECK(a.g(0, 0) == doctest::Approx(g));
  CHECK(a.sigma(0, 0) == doctest::Approx(s));
  CHECK(a.phi(0, 0) == doctest::Approx(p));
}

}  // namespace

TEST_SUITE("coefficients") {

TEST_CASE("Example 2 drivers") {
  const auto p = builtin_example2();
  check_drivers(p.coeffs->eval_A(0.3, scalar_state(1, 2, 3, 0, 0)), -1, 2, -3, 0, 0);
  CHECK(p.coeffs->eval_h(Eigen::VectorXd::Constant(1, 0.4))(0) == doctest::Approx(-0.4));
}

TEST_CASE("Example 1 drivers") {
  const StateLayout l;
  const auto p = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(1));
  check_drivers(p.coeffs->eval_A(0.0, StateQuintuple::Zero(l)), 0, 0, 0, 0, 0);
  check_drivers(p.coeffs->eval_A(0.5, scalar_state(1, 1, 4, 4, 8)), -1, -1, -5, 0, -2);
  CHECK(p.coeffs->eval_h(Eigen::VectorXd::Constant(1, 1.3))(0) == doctest::Approx(1.3));
}

TEST_CASE("declared constants of Example 1") {
  const auto p = builtin_example1(StateLayout{}, 1.0, Eigen::VectorXd::Zero(1));
  REQUIRE(p.coeffs->declared_constants());
  const auto& c = *p.coeffs->declared_constants();
  CHECK(c.theta1 == 0.25);
  CHECK(c.theta2 == 0.25);
  CHECK(c.beta == 1.0);
  CHECK(c.c == 1.0);
  CHECK(c.gamma == 0.25);
}

TEST_CASE("Example 2 closed forms") {
  const auto p = builtin_example2();
  CHECK(p.spec.T == doctest::Approx(0.75 * std::numbers::pi));
  const ClosedForm* sc = nullptr;
  for (const auto& cf : p.closed_forms)
    if (cf.name == "sincos") sc = &cf;
  REQUIRE(sc);
  const StateQuintuple v0 = sc->value(0.0);
  CHECK(v0.y(0) == doctest::Approx(0.0));
  CHECK(v0.Y(0) == doctest::Approx(1.0));
  const StateQuintuple vT = sc->value(p.spec.T);
  CHECK(vT.Y(0) == doctest::Approx(-std::sqrt(0.5)));
  CHECK(p.coeffs->eval_h(vT.y)(0) == doctest::Approx(vT.Y(0)));
}

TEST_CASE("batch evaluation agrees with pointwise evaluation") {
  StateLayout l;
  l.d_H = 2;
  l.d_E1 = 2;
  l.d_E2 = 2;
  l.marks = MarkSpace(Eigen::Vector2d(0.5, 2.0));
  const auto p = builtin_example1(l, 1.0, Eigen::VectorXd::Zero(2));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  NodeBlock nb = NodeBlock::Zero(l, 7);
  for (Eigen::MatrixXd* m : {&nb.y, &nb.Y, &nb.z, &nb.Z, &nb.k})
    *m = Eigen::MatrixXd::NullaryExpr(m->rows(), m->cols(), [&] { return g(rng); });
  const NodeDrivers d = p.coeffs->eval_batch(0.2, nb);
  for (int path = 0; path < 7; ++path) {
    const DriverQuintuple a = p.coeffs->eval_A(0.2, nb.at(path, l));
    NodeBlock one = NodeBlock::Zero(l, 1);
    one.set(0, as_state(a));
    CHECK((d.f.row(path) - one.y).norm() <= 1e-12);
    CHECK((d.b.row(path) - one.Y).norm() <= 1e-12);
    CHECK((d.g.row(path) - one.z).norm() <= 1e-12);
    CHECK((d.sigma.row(path) - one.Z).norm() <= 1e-12);
    CHECK((d.phi.row(path) - one.k).norm() <= 1e-12);
  }
}

TEST_CASE("linear coefficients act on the stacked coordinates") {
  StateLayout l;
  l.d_H = 2;
  const int S = l.stacked_size();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd M = Eigen::MatrixXd::NullaryExpr(S, S, [&] { return g(rng); });
  const Eigen::VectorXd off = Eigen::VectorXd::NullaryExpr(S, [&] { return g(rng); });
  const LinearCoefficients lc(l, M, off, Eigen::Matrix2d::Identity() * 2, Eigen::Vector2d(1, -1));
  const Eigen::VectorXd s = Eigen::VectorXd::NullaryExpr(S, [&] { return g(rng); });
  const DriverQuintuple a = lc.eval_A(0.0, unstack(s, l));
  CHECK((stack(as_state(a)) - (M * s + off)).norm() <= 1e-12);
  CHECK((lc.eval_h(Eigen::Vector2d(1, 2)) - Eigen::Vector2d(3, 3)).norm() <= 1e-15);
}

TEST_CASE("non-finite evaluations are reported") {
  const StateLayout l;
  CoefficientFunctions fns;
  fns.f = [](double, const StateQuintuple& v) { return Eigen::VectorXd(v.y.array().log()); };
  fns.b = [](double, const StateQuintuple& v) { return v.Y; };
  fns.sigma = [](double, const StateQuintuple& v) { return v.Z; };
  fns.g = [](double, const StateQuintuple& v) { return v.z; };
  fns.phi = [](double, const StateQuintuple& v, int j) { return Eigen::VectorXd(v.k.col(j)); };
  fns.h = [](const Eigen::VectorXd& y) { return y; };
  const FunctionCoefficients fc(l, fns);
  CHECK_NOTHROW(fc.eval_A(0.0, scalar_state(1, 0, 0, 0, 0)));
  CHECK_THROWS_AS(fc.eval_A(0.0, scalar_state(-1, 0, 0, 0, 0)), NonFiniteError);
}

TEST_CASE("decoupled hand solution") {
  const StateLayout l;
  DecoupledParams dp{0.3, DriverQuintuple::Zero(l), Eigen::VectorXd::Constant(1, 0.7)};
  const auto p = builtin_decoupled(l, 2.0, Eigen::VectorXd::Ones(1), dp);
  const ClosedForm* hand = nullptr;
  for (const auto& cf : p.closed_forms)
    if (cf.name == "hand") hand = &cf;
  REQUIRE(hand);
  for (double t : {0.0, 0.5, 2.0}) {
    const StateQuintuple v = hand->value(t);
    CHECK(v.y(0) == doctest::Approx(1.0));
    CHECK(v.Y(0) == doctest::Approx(1.7 + 0.3 * (2.0 - t)));
  }
}

}  // TEST_SUITE
