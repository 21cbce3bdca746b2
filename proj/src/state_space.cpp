#include "fbdsde/state_space.hpp"

#include <cmath>

namespace fbdsde {

MarkSpace::MarkSpace(Eigen::VectorXd weights) : weights_(std::move(weights)) {
  if (weights_.size() < 1) throw DimensionError("mark space needs at least one atom");
  for (Eigen::Index j = 0; j < weights_.size(); ++j)
    if (!(weights_(j) > 0.0) || !std::isfinite(weights_(j)))
      throw DimensionError("mark weights must be positive and finite");
}

void StateLayout::validate() const {
  if (d_H < 1 || d_E1 < 1 || d_E2 < 1)
    throw DimensionError("d_H, d_E1, d_E2 must all be >= 1");
  if (m() < 1) throw DimensionError("mark space is empty");
}

bool same_shape(const StateLayout& a, const StateLayout& b) {
  return a.d_H == b.d_H && a.d_E1 == b.d_E1 && a.d_E2 == b.d_E2 && a.m() == b.m();
}

void ProblemSpec::validate() const {
  layout.validate();
  if (!(T > 0.0) || !std::isfinite(T)) throw DimensionError("T must be positive");
  if (x.size() != layout.d_H)
    throw DimensionError("initial condition x has length " + std::to_string(x.size()) +
                         ", expected d_H = " + std::to_string(layout.d_H));
  if (!x.allFinite()) throw DimensionError("initial condition x is not finite");
}

NodeBlock NodeBlock::Zero(const StateLayout& l, int n) {
  return {Eigen::MatrixXd::Zero(n, l.d_H), Eigen::MatrixXd::Zero(n, l.d_H),
          Eigen::MatrixXd::Zero(n, l.z_cols()), Eigen::MatrixXd::Zero(n, l.Z_cols()),
          Eigen::MatrixXd::Zero(n, l.k_cols())};
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd unflatten_op(const Eigen::MatrixXd& block, int path, int rows, int cols) {
  RowMajor out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = block(path, r * cols + c);
  return out;
}

void flatten_op(Eigen::MatrixXd& block, int path, const Eigen::MatrixXd& op) {
  for (int r = 0; r < op.rows(); ++r)
    for (int c = 0; c < op.cols(); ++c) block(path, r * op.cols() + c) = op(r, c);
}

}  // namespace

StateQuintuple NodeBlock::at(int path, const StateLayout& l) const {
  StateQuintuple v;
  v.y = y.row(path).transpose();
  v.Y = Y.row(path).transpose();
  v.z = unflatten_op(z, path, l.d_H, l.d_E2);
  v.Z = unflatten_op(Z, path, l.d_H, l.d_E1);
  v.k.resize(l.d_H, l.m());
  for (int j = 0; j < l.m(); ++j)
    for (int r = 0; r < l.d_H; ++r) v.k(r, j) = k(path, j * l.d_H + r);
  return v;
}

void NodeBlock::set(int path, const StateQuintuple& v) {
  y.row(path) = v.y.transpose();
  Y.row(path) = v.Y.transpose();
  flatten_op(z, path, v.z);
  flatten_op(Z, path, v.Z);
  const auto d_H = v.k.rows();
  for (Eigen::Index j = 0; j < v.k.cols(); ++j)
    for (Eigen::Index r = 0; r < d_H; ++r) k(path, j * d_H + r) = v.k(r, j);
}

Eigen::VectorXd NodeBlock::row_sq_norms(const MarkSpace& marks) const {
  Eigen::VectorXd out = y.rowwise().squaredNorm() + Y.rowwise().squaredNorm() +
                        z.rowwise().squaredNorm() + Z.rowwise().squaredNorm();
  const int m = marks.size();
  const int d_H = m > 0 ? static_cast<int>(k.cols()) / m : 0;
  for (int j = 0; j < m; ++j)
    out += marks.weight(j) * k.middleCols(j * d_H, d_H).rowwise().squaredNorm();
  return out;
}

NodeBlock& NodeBlock::operator+=(const NodeBlock& o) {
  y += o.y;
  Y += o.Y;
  z += o.z;
  Z += o.Z;
  k += o.k;
  return *this;
}

NodeBlock& NodeBlock::operator-=(const NodeBlock& o) {
  y -= o.y;
  Y -= o.Y;
  z -= o.z;
  Z -= o.Z;
  k -= o.k;
  return *this;
}

NodeBlock& NodeBlock::operator*=(double s) {
  y *= s;
  Y *= s;
  z *= s;
  Z *= s;
  k *= s;
  return *this;
}

EnsembleProcess EnsembleProcess::Zero(const StateLayout& l, double T, int steps, int n) {
  if (steps < 1 || n < 1) throw DimensionError("ensemble needs >= 1 step and >= 1 path");
  EnsembleProcess e;
  e.layout = l;
  e.T = T;
  e.steps = steps;
  e.n_paths = n;
  e.nodes.assign(steps + 1, NodeBlock::Zero(l, n));
  return e;
}

void EnsembleProcess::check_compatible(const EnsembleProcess& o) const {
  if (steps != o.steps || n_paths != o.n_paths || !same_shape(layout, o.layout) ||
      T != o.T)
    throw DimensionError("ensembles live on different grids, path sets or layouts");
}

EnsembleProcess& EnsembleProcess::operator+=(const EnsembleProcess& o) {
  check_compatible(o);
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] += o.nodes[i];
  return *this;
}

EnsembleProcess& EnsembleProcess::operator-=(const EnsembleProcess& o) {
  check_compatible(o);
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] -= o.nodes[i];
  return *this;
}

EnsembleProcess& EnsembleProcess::operator*=(double s) {
  for (auto& n : nodes) n *= s;
  return *this;
}

EnsembleProcess operator-(EnsembleProcess a, const EnsembleProcess& b) { return a -= b; }
EnsembleProcess operator+(EnsembleProcess a, const EnsembleProcess& b) { return a += b; }
EnsembleProcess operator*(EnsembleProcess a, double s) { return a *= s; }

double m2_sq_norm(const EnsembleProcess& ens) {
  if (ens.n_paths < 1 || ens.nodes.empty())
    throw DimensionError("m2 norm of an empty ensemble");
  Eigen::VectorXd per_path = Eigen::VectorXd::Zero(ens.n_paths);
  for (int i = 0; i < ens.steps; ++i)
    per_path += ens.nodes[i].row_sq_norms(ens.layout.marks);
  double total = 0.0;
  for (int p = 0; p < ens.n_paths; ++p) total += per_path(p);
  return total * ens.dt() / ens.n_paths;
}

double m2_sq_distance(const EnsembleProcess& a, const EnsembleProcess& b) {
  a.check_compatible(b);
  Eigen::VectorXd per_path = Eigen::VectorXd::Zero(a.n_paths);
  for (int i = 0; i < a.steps; ++i) {
    NodeBlock d = a.nodes[i];
    d -= b.nodes[i];
    per_path += d.row_sq_norms(a.layout.marks);
  }
  double total = 0.0;
  for (int p = 0; p < a.n_paths; ++p) total += per_path(p);
  return total * a.dt() / a.n_paths;
}

double terminal_sq_distance(const EnsembleProcess& a, const EnsembleProcess& b) {
  a.check_compatible(b);
  const Eigen::VectorXd d = (a.nodes.back().y - b.nodes.back().y).rowwise().squaredNorm();
  double total = 0.0;
  for (int p = 0; p < a.n_paths; ++p) total += d(p);
  return total / a.n_paths;
}

Eigen::VectorXd stack(const StateQuintuple& v) {
  const auto d_H = v.y.size();
  const auto dz = v.z.size(), dZ = v.Z.size(), dk = v.k.size();
  Eigen::VectorXd s(2 * d_H + dz + dZ + dk);
  Eigen::Index o = 0;
  s.segment(o, d_H) = v.y;
  o += d_H;
  s.segment(o, d_H) = v.Y;
  o += d_H;
  for (Eigen::Index r = 0; r < v.z.rows(); ++r)
    for (Eigen::Index c = 0; c < v.z.cols(); ++c) s(o++) = v.z(r, c);
  for (Eigen::Index r = 0; r < v.Z.rows(); ++r)
    for (Eigen::Index c = 0; c < v.Z.cols(); ++c) s(o++) = v.Z(r, c);
  for (Eigen::Index j = 0; j < v.k.cols(); ++j)
    for (Eigen::Index r = 0; r < v.k.rows(); ++r) s(o++) = v.k(r, j);
  return s;
}

StateQuintuple unstack(const Eigen::VectorXd& s, const StateLayout& l) {
  if (s.size() != l.stacked_size()) throw DimensionError("stacked vector has wrong length");
  StateQuintuple v = StateQuintuple::Zero(l);
  Eigen::Index o = 0;
  v.y = s.segment(o, l.d_H);
  o += l.d_H;
  v.Y = s.segment(o, l.d_H);
  o += l.d_H;
  for (int r = 0; r < l.d_H; ++r)
    for (int c = 0; c < l.d_E2; ++c) v.z(r, c) = s(o++);
  for (int r = 0; r < l.d_H; ++r)
    for (int c = 0; c < l.d_E1; ++c) v.Z(r, c) = s(o++);
  for (int j = 0; j < l.m(); ++j)
    for (int r = 0; r < l.d_H; ++r) v.k(r, j) = s(o++);
  return v;
}

}  // namespace fbdsde
