#include "fbdsde/coefficients.hpp"

#include <cmath>
#include <numbers>

namespace fbdsde {

void MonotoneConstants::validate() const {
  if (theta1 < 0 || theta2 < 0 || beta < 0)
    throw std::invalid_argument("theta1, theta2 and beta must be nonnegative");
  if (!(theta1 + theta2 > 0)) throw std::invalid_argument("theta1 + theta2 > 0 is required");
  if (!(theta2 + beta > 0)) throw std::invalid_argument("theta2 + beta > 0 is required");
  if (!(c > 0)) throw std::invalid_argument("Lipschitz constant c must be positive");
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0, 1)");
}

NodeDrivers NodeDrivers::Zero(const StateLayout& l, int n) {
  return {Eigen::MatrixXd::Zero(n, l.d_H), Eigen::MatrixXd::Zero(n, l.d_H),
          Eigen::MatrixXd::Zero(n, l.z_cols()), Eigen::MatrixXd::Zero(n, l.Z_cols()),
          Eigen::MatrixXd::Zero(n, l.k_cols())};
}

NodeDrivers& NodeDrivers::operator+=(const NodeDrivers& o) {
  f += o.f;
  b += o.b;
  g += o.g;
  sigma += o.sigma;
  phi += o.phi;
  return *this;
}

NodeDrivers& NodeDrivers::operator*=(double s) {
  f *= s;
  b *= s;
  g *= s;
  sigma *= s;
  phi *= s;
  return *this;
}

DriverQuintuple CoefficientSet::eval_A(double t, const StateQuintuple& v) const {
  check_shape(v, layout_);
  DriverQuintuple a = eval_raw(t, v);
  check_shape(a, layout_);
  if (!a.f.allFinite() || !a.b.allFinite() || !a.g.allFinite() || !a.sigma.allFinite() ||
      !a.phi.allFinite())
    throw NonFiniteError("coefficient '" + name_ + "' returned a non-finite value at t = " +
                         std::to_string(t));
  return a;
}

Eigen::VectorXd CoefficientSet::eval_h(const Eigen::VectorXd& y) const {
  if (y.size() != layout_.d_H) throw DimensionError("h: argument is not in H");
  Eigen::VectorXd out = h_raw(y);
  if (out.size() != layout_.d_H) throw DimensionError("h: value is not in H");
  if (!out.allFinite()) throw NonFiniteError("terminal map h returned a non-finite value");
  return out;
}

NodeDrivers CoefficientSet::eval_batch(double t, const NodeBlock& v) const {
  const int n = v.n_paths();
  NodeBlock tmp = NodeBlock::Zero(layout_, n);
  for (int p = 0; p < n; ++p) tmp.set(p, as_state(eval_A(t, v.at(p, layout_))));
  return {std::move(tmp.y), std::move(tmp.Y), std::move(tmp.z), std::move(tmp.Z),
          std::move(tmp.k)};
}

Eigen::MatrixXd CoefficientSet::h_batch(const Eigen::MatrixXd& y) const {
  Eigen::MatrixXd out(y.rows(), layout_.d_H);
  for (Eigen::Index p = 0; p < y.rows(); ++p) out.row(p) = eval_h(y.row(p).transpose()).transpose();
  return out;
}

// --- linear ------------------------------------------------------------------

LinearCoefficients::LinearCoefficients(StateLayout layout, Eigen::MatrixXd drift,
                                       Eigen::VectorXd offset, Eigen::MatrixXd h_matrix,
                                       Eigen::VectorXd h_offset, std::string name)
    : CoefficientSet(std::move(layout), std::move(name)),
      drift_(std::move(drift)),
      offset_(std::move(offset)),
      h_matrix_(std::move(h_matrix)),
      h_offset_(std::move(h_offset)) {
  const auto S = this->layout().stacked_size();
  const auto d_H = this->layout().d_H;
  if (drift_.rows() != S || drift_.cols() != S || offset_.size() != S)
    throw DimensionError("linear drift must be " + std::to_string(S) + " x " +
                         std::to_string(S) + " with a matching offset");
  if (h_matrix_.rows() != d_H || h_matrix_.cols() != d_H || h_offset_.size() != d_H)
    throw DimensionError("terminal map must be d_H x d_H with a d_H offset");
  if (!drift_.allFinite() || !offset_.allFinite() || !h_matrix_.allFinite() ||
      !h_offset_.allFinite())
    throw NonFiniteError("linear coefficients contain non-finite entries");
}

DriverQuintuple LinearCoefficients::eval_raw(double, const StateQuintuple& v) const {
  return as_driver(unstack(drift_ * stack(v) + offset_, layout()));
}

Eigen::VectorXd LinearCoefficients::h_raw(const Eigen::VectorXd& y) const {
  return h_matrix_ * y + h_offset_;
}

NodeDrivers LinearCoefficients::eval_batch(double, const NodeBlock& v) const {
  const auto& l = layout();
  const int n = v.n_paths();
  Eigen::MatrixXd s(n, l.stacked_size());
  s << v.y, v.Y, v.z, v.Z, v.k;
  Eigen::MatrixXd out = s * drift_.transpose();
  out.rowwise() += offset_.transpose();
  int o = 0;
  NodeDrivers d;
  d.f = out.middleCols(o, l.d_H);
  o += l.d_H;
  d.b = out.middleCols(o, l.d_H);
  o += l.d_H;
  d.g = out.middleCols(o, l.z_cols());
  o += l.z_cols();
  d.sigma = out.middleCols(o, l.Z_cols());
  o += l.Z_cols();
  d.phi = out.middleCols(o, l.k_cols());
  if (!out.allFinite()) throw NonFiniteError("linear coefficients produced non-finite values");
  return d;
}

Eigen::MatrixXd LinearCoefficients::h_batch(const Eigen::MatrixXd& y) const {
  Eigen::MatrixXd out = y * h_matrix_.transpose();
  out.rowwise() += h_offset_.transpose();
  return out;
}

// --- callables ---------------------------------------------------------------

FunctionCoefficients::FunctionCoefficients(StateLayout layout, CoefficientFunctions fns,
                                           std::string name)
    : CoefficientSet(std::move(layout), std::move(name)), fns_(std::move(fns)) {
  if (!fns_.b || !fns_.f || !fns_.sigma || !fns_.g || !fns_.phi || !fns_.h)
    throw std::invalid_argument("all six coefficient callables are required");
}

DriverQuintuple FunctionCoefficients::eval_raw(double t, const StateQuintuple& v) const {
  const auto& l = layout();
  DriverQuintuple a;
  a.f = fns_.f(t, v);
  a.b = fns_.b(t, v);
  a.g = fns_.g(t, v);
  a.sigma = fns_.sigma(t, v);
  a.phi.resize(l.d_H, l.m());
  for (int j = 0; j < l.m(); ++j) a.phi.col(j) = fns_.phi(t, v, j);
  return a;
}

Eigen::VectorXd FunctionCoefficients::h_raw(const Eigen::VectorXd& y) const { return fns_.h(y); }

// --- perturbations -------------------------------------------------------------

AffinePerturbation AffinePerturbation::Zero(const StateLayout& l, int steps, int n) {
  return {std::vector<NodeDrivers>(steps + 1, NodeDrivers::Zero(l, n)),
          Eigen::MatrixXd::Zero(n, l.d_H)};
}

AffinePerturbation AffinePerturbation::Constant(const StateLayout& l, int steps, int n,
                                                const DriverQuintuple& value,
                                                const Eigen::VectorXd& phi_T) {
  check_shape(value, l);
  if (phi_T.size() != l.d_H) throw DimensionError("phi_T must lie in H");
  NodeBlock row = NodeBlock::Zero(l, 1);
  row.set(0, as_state(value));
  NodeDrivers node{row.y.replicate(n, 1), row.Y.replicate(n, 1), row.z.replicate(n, 1),
                   row.Z.replicate(n, 1), row.k.replicate(n, 1)};
  return {std::vector<NodeDrivers>(steps + 1, node), phi_T.transpose().replicate(n, 1)};
}

// --- built-ins -----------------------------------------------------------------

namespace {

struct Blocks {
  int y, Y, z, Z, k;
};

Blocks offsets_of(const StateLayout& l) {
  const int y = 0, Y = l.d_H, z = 2 * l.d_H;
  const int Z = z + l.z_cols();
  const int k = Z + l.Z_cols();
  return {y, Y, z, Z, k};
}

}  // namespace

BuiltinProblem builtin_example1(const StateLayout& layout, double T, Eigen::VectorXd x) {
  layout.validate();
  if (layout.d_E1 != layout.d_E2)
    throw DimensionError("example1 couples z and Z directly and needs d_E1 == d_E2");
  const int S = layout.stacked_size();
  const Blocks at = offsets_of(layout);  // input and output blocks share offsets
  const int dz = layout.z_cols();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(S, S);
  // f = -y, b = -Y
  A.block(at.y, at.y, layout.d_H, layout.d_H) = -Eigen::MatrixXd::Identity(layout.d_H, layout.d_H);
  A.block(at.Y, at.Y, layout.d_H, layout.d_H) = -Eigen::MatrixXd::Identity(layout.d_H, layout.d_H);
  // g = -(z + Z/4)
  A.block(at.z, at.z, dz, dz) = -Eigen::MatrixXd::Identity(dz, dz);
  A.block(at.z, at.Z, dz, dz) = -0.25 * Eigen::MatrixXd::Identity(dz, dz);
  // sigma = (z - Z)/4
  A.block(at.Z, at.z, dz, dz) = 0.25 * Eigen::MatrixXd::Identity(dz, dz);
  A.block(at.Z, at.Z, dz, dz) = -0.25 * Eigen::MatrixXd::Identity(dz, dz);
  // phi = -k/4
  A.block(at.k, at.k, layout.k_cols(), layout.k_cols()) =
      -0.25 * Eigen::MatrixXd::Identity(layout.k_cols(), layout.k_cols());

  auto coeffs = std::make_shared<LinearCoefficients>(
      layout, A, Eigen::VectorXd::Zero(S), Eigen::MatrixXd::Identity(layout.d_H, layout.d_H),
      Eigen::VectorXd::Zero(layout.d_H), "example1");
  coeffs->declare({0.25, 0.25, 1.0, 1.0, 0.25, Direction::Standard});

  BuiltinProblem p;
  p.coeffs = coeffs;
  p.spec = {layout, T, std::move(x)};
  p.spec.validate();
  if (p.spec.x.isZero(0.0)) {
    const StateLayout l = layout;
    p.closed_forms.push_back({"trivial", [l](double) { return StateQuintuple::Zero(l); }});
  }
  return p;
}

BuiltinProblem builtin_example2(double T) {
  StateLayout layout;  // d_H = d_E1 = d_E2 = 1, one atom of weight 1
  const int S = layout.stacked_size();
  const Blocks at = offsets_of(layout);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(S, S);
  A(at.y, at.y) = -1.0;  // f = -y
  A(at.Y, at.Y) = 1.0;   // b = Y
  A(at.z, at.z) = -1.0;  // g = -z
  auto coeffs = std::make_shared<LinearCoefficients>(
      layout, A, Eigen::VectorXd::Zero(S), -Eigen::MatrixXd::Identity(1, 1),
      Eigen::VectorXd::Zero(1), "example2");

  BuiltinProblem p;
  p.coeffs = coeffs;
  p.spec = {layout, T, Eigen::VectorXd::Zero(1)};
  p.spec.validate();
  p.closed_forms.push_back({"trivial", [layout](double) { return StateQuintuple::Zero(layout); }});
  p.closed_forms.push_back({"sincos", [layout](double t) {
                              StateQuintuple v = StateQuintuple::Zero(layout);
                              v.y(0) = std::sin(t);
                              v.Y(0) = std::cos(t);
                              return v;
                            }});
  return p;
}

BuiltinProblem builtin_decoupled(const StateLayout& layout, double T, Eigen::VectorXd x,
                                 DecoupledParams params) {
  layout.validate();
  if (params.theta1 < 0) throw std::invalid_argument("decoupled: theta1 must be >= 0");
  if (params.phi_T.size() == 0) params.phi_T = Eigen::VectorXd::Zero(layout.d_H);
  if (params.offsets.f.size() == 0) params.offsets = DriverQuintuple::Zero(layout);
  check_shape(params.offsets, layout);
  if (params.phi_T.size() != layout.d_H) throw DimensionError("decoupled: phi_T must lie in H");

  const int S = layout.stacked_size();
  const Blocks at = offsets_of(layout);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(S, S);
  A.block(at.y, at.y, layout.d_H, layout.d_H) =
      -params.theta1 * Eigen::MatrixXd::Identity(layout.d_H, layout.d_H);
  A.block(at.z, at.z, layout.z_cols(), layout.z_cols()) =
      -params.theta1 * Eigen::MatrixXd::Identity(layout.z_cols(), layout.z_cols());
  auto coeffs = std::make_shared<LinearCoefficients>(
      layout, A, stack(as_state(params.offsets)),
      Eigen::MatrixXd::Identity(layout.d_H, layout.d_H), params.phi_T, "decoupled");
  if (params.theta1 > 0)
    coeffs->declare({params.theta1, 0.0, 1.0, std::max(1.0, params.theta1 * params.theta1),
                     0.25, Direction::Standard});

  BuiltinProblem p;
  p.coeffs = coeffs;
  p.spec = {layout, T, std::move(x)};
  p.spec.validate();
  const bool bare = stack(as_state(params.offsets)).isZero(0.0);
  if (bare) {
    const Eigen::VectorXd x0 = p.spec.x;
    const Eigen::VectorXd phiT = params.phi_T;
    const double th = params.theta1;
    p.closed_forms.push_back({"hand", [=](double t) {
                                StateQuintuple v = StateQuintuple::Zero(layout);
                                v.y = x0;
                                v.Y = x0 + phiT + th * x0 * (T - t);
                                return v;
                              }});
  }
  p.decoupled = std::move(params);
  return p;
}

BuiltinProblem builtin(const std::string& name, const StateLayout& layout, double T,
                       Eigen::VectorXd x, std::optional<DecoupledParams> params) {
  if (name == "example1") return builtin_example1(layout, T, std::move(x));
  if (name == "example2") {
    if (layout.d_H != 1 || layout.d_E1 != 1 || layout.d_E2 != 1 || layout.m() != 1)
      throw DimensionError("example2 is scalar: d_H = d_E1 = d_E2 = 1 with one mark");
    if (x.size() != 0 && !(x.size() == 1 && x(0) == 0.0))
      throw DimensionError("example2 starts from y_0 = 0");
    return builtin_example2(T);
  }
  if (name == "decoupled")
    return builtin_decoupled(layout, T, std::move(x), params.value_or(DecoupledParams{}));
  throw std::invalid_argument("unknown builtin problem '" + name + "'");
}

}  // namespace fbdsde
