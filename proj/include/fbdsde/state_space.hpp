// Finite-dimensional state spaces for forward-backward doubly stochastic
// systems with jumps: H truncated to R^{d_H}, the Wiener spaces E1/E2 to
// R^{d_E1}/R^{d_E2}, Hilbert-Schmidt operators as dense matrices under the
// Frobenius norm, and the mark space as finitely many weighted atoms.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbdsde {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Finite mark space: m atoms with positive characteristic-measure weights.
class MarkSpace {
 public:
  MarkSpace() : weights_(Eigen::VectorXd::Ones(1)) {}
  explicit MarkSpace(Eigen::VectorXd weights);

  int size() const { return static_cast<int>(weights_.size()); }
  double weight(int j) const { return weights_(j); }
  const Eigen::VectorXd& weights() const { return weights_; }
  double total_mass() const { return weights_.sum(); }

 private:
  Eigen::VectorXd weights_;
};

/// Truncation dimensions plus the mark space; fixes the shape of every
/// state and driver component.
struct StateLayout {
  int d_H = 1;
  int d_E1 = 1;
  int d_E2 = 1;
  MarkSpace marks;

  int m() const { return marks.size(); }
  int z_cols() const { return d_H * d_E2; }
  int Z_cols() const { return d_H * d_E1; }
  int k_cols() const { return d_H * m(); }
  /// Length of the stacked coordinate vector (y, Y, z, Z, k).
  int stacked_size() const { return 2 * d_H + z_cols() + Z_cols() + k_cols(); }

  void validate() const;
};

bool same_shape(const StateLayout& a, const StateLayout& b);

struct ProblemSpec {
  StateLayout layout;
  double T = 1.0;
  Eigen::VectorXd x;

  void validate() const;
};

template <typename Scalar>
using VecH = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Hilbert-Schmidt operator E -> H stored as a d_H x d_E matrix.
template <typename Scalar>
using HSOp = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Jump kernel: column j holds k(rho_j) in H, so the matrix is d_H x m.
template <typename Scalar>
using JumpKernel = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// One point (y, Y, z, Z, k) of H x H x L2(E2;H) x L2(E1;H) x L2_Pi(H).
template <typename Scalar>
struct Quintuple {
  VecH<Scalar> y;
  VecH<Scalar> Y;
  HSOp<Scalar> z;  // d_H x d_E2
  HSOp<Scalar> Z;  // d_H x d_E1
  JumpKernel<Scalar> k;

  static Quintuple Zero(const StateLayout& l) {
    return {VecH<Scalar>::Zero(l.d_H), VecH<Scalar>::Zero(l.d_H),
            HSOp<Scalar>::Zero(l.d_H, l.d_E2), HSOp<Scalar>::Zero(l.d_H, l.d_E1),
            JumpKernel<Scalar>::Zero(l.d_H, l.m())};
  }

  Quintuple operator-(const Quintuple& o) const {
    return {y - o.y, Y - o.Y, z - o.z, Z - o.Z, k - o.k};
  }
  Quintuple operator+(const Quintuple& o) const {
    return {y + o.y, Y + o.Y, z + o.z, Z + o.Z, k + o.k};
  }
  Quintuple operator*(Scalar s) const { return {y * s, Y * s, z * s, Z * s, k * s}; }
};

/// Coefficient evaluations A = (f, b, g, sigma, phi), in pairing order.
template <typename Scalar>
struct DriverTuple {
  VecH<Scalar> f;
  VecH<Scalar> b;
  HSOp<Scalar> g;      // d_H x d_E2
  HSOp<Scalar> sigma;  // d_H x d_E1
  JumpKernel<Scalar> phi;

  static DriverTuple Zero(const StateLayout& l) {
    return {VecH<Scalar>::Zero(l.d_H), VecH<Scalar>::Zero(l.d_H),
            HSOp<Scalar>::Zero(l.d_H, l.d_E2), HSOp<Scalar>::Zero(l.d_H, l.d_E1),
            JumpKernel<Scalar>::Zero(l.d_H, l.m())};
  }

  DriverTuple operator-(const DriverTuple& o) const {
    return {f - o.f, b - o.b, g - o.g, sigma - o.sigma, phi - o.phi};
  }
};

using StateQuintuple = Quintuple<double>;
using DriverQuintuple = DriverTuple<double>;

template <typename Scalar>
void check_shape(const Quintuple<Scalar>& v, const StateLayout& l) {
  if (v.y.size() != l.d_H || v.Y.size() != l.d_H || v.z.rows() != l.d_H ||
      v.z.cols() != l.d_E2 || v.Z.rows() != l.d_H || v.Z.cols() != l.d_E1 ||
      v.k.rows() != l.d_H || v.k.cols() != l.m())
    throw DimensionError("state quintuple does not match layout");
}

template <typename Scalar>
void check_shape(const DriverTuple<Scalar>& a, const StateLayout& l) {
  if (a.f.size() != l.d_H || a.b.size() != l.d_H || a.g.rows() != l.d_H ||
      a.g.cols() != l.d_E2 || a.sigma.rows() != l.d_H || a.sigma.cols() != l.d_E1 ||
      a.phi.rows() != l.d_H || a.phi.cols() != l.m())
    throw DimensionError("driver quintuple does not match layout");
}

/// |||k|||^2 = sum_j Pi_j |k_j|^2.
template <typename Scalar>
Scalar jump_sq_norm(const JumpKernel<Scalar>& k, const MarkSpace& marks) {
  return (k.colwise().squaredNorm().transpose().array() *
          marks.weights().template cast<Scalar>().array())
      .sum();
}

/// <<k, phi>> = sum_j Pi_j <k_j, phi_j>.
template <typename Scalar>
Scalar jump_inner(const JumpKernel<Scalar>& k, const JumpKernel<Scalar>& phi,
                  const MarkSpace& marks) {
  return ((k.array() * phi.array()).colwise().sum().transpose() *
          marks.weights().template cast<Scalar>().array())
      .sum();
}

/// |y|^2 + |Y|^2 + ||z||^2 + ||Z||^2 + |||k|||^2.
template <typename Scalar>
Scalar quintuple_sq_norm(const Quintuple<Scalar>& v, const StateLayout& l) {
  check_shape(v, l);
  return v.y.squaredNorm() + v.Y.squaredNorm() + v.z.squaredNorm() + v.Z.squaredNorm() +
         jump_sq_norm(v.k, l.marks);
}

/// <A, v> = <y,f> + <Y,b> + <z,g> + <Z,sigma> + <<k,phi>>.
template <typename Scalar>
Scalar pairing_A(const DriverTuple<Scalar>& a, const Quintuple<Scalar>& v,
                 const StateLayout& l) {
  check_shape(a, l);
  check_shape(v, l);
  return v.y.dot(a.f) + v.Y.dot(a.b) + (v.z.array() * a.g.array()).sum() +
         (v.Z.array() * a.sigma.array()).sum() + jump_inner(v.k, a.phi, l.marks);
}

/// Reads v in pairing order: f <- y, b <- Y, g <- z, sigma <- Z, phi <- k.
template <typename Scalar>
DriverTuple<Scalar> as_driver(const Quintuple<Scalar>& v) {
  return {v.y, v.Y, v.z, v.Z, v.k};
}

/// The same reinterpretation in the other direction.
template <typename Scalar>
Quintuple<Scalar> as_state(const DriverTuple<Scalar>& a) {
  return {a.f, a.b, a.g, a.sigma, a.phi};
}

// ---------------------------------------------------------------------------
// Ensemble storage. Every component at one grid node is a matrix with one row
// per path. Operator-valued components are flattened row-major
// (entry (r, c) of a d_H x d_E operator at column r * d_E + c) and jump
// kernels mark-major (entry (r, j) at column j * d_H + r).

struct NodeBlock {
  Eigen::MatrixXd y, Y, z, Z, k;

  static NodeBlock Zero(const StateLayout& l, int n_paths);
  int n_paths() const { return static_cast<int>(y.rows()); }

  StateQuintuple at(int path, const StateLayout& l) const;
  void set(int path, const StateQuintuple& v);

  /// Per-path ||v||^2.
  Eigen::VectorXd row_sq_norms(const MarkSpace& marks) const;

  NodeBlock& operator+=(const NodeBlock& o);
  NodeBlock& operator-=(const NodeBlock& o);
  NodeBlock& operator*=(double s);
};

/// Grid-indexed, path-indexed quintuple values; an element of M^2 after
/// discretization.
struct EnsembleProcess {
  StateLayout layout;
  double T = 1.0;
  int steps = 0;
  int n_paths = 0;
  std::vector<NodeBlock> nodes;  // steps + 1 entries

  static EnsembleProcess Zero(const StateLayout& l, double T, int steps, int n_paths);
  double dt() const { return T / steps; }
  void check_compatible(const EnsembleProcess& o) const;

  EnsembleProcess& operator+=(const EnsembleProcess& o);
  EnsembleProcess& operator-=(const EnsembleProcess& o);
  EnsembleProcess& operator*=(double s);
};

EnsembleProcess operator-(EnsembleProcess a, const EnsembleProcess& b);
EnsembleProcess operator+(EnsembleProcess a, const EnsembleProcess& b);
EnsembleProcess operator*(EnsembleProcess a, double s);

/// Monte Carlo estimate of E[int_0^T ||v_t||^2 dt]: path average of the
/// left-Riemann sum over the grid. Paths are reduced in index order.
double m2_sq_norm(const EnsembleProcess& ens);

/// m2_sq_norm(a - b).
double m2_sq_distance(const EnsembleProcess& a, const EnsembleProcess& b);

/// E|y_T - y'_T|^2 over paths.
double terminal_sq_distance(const EnsembleProcess& a, const EnsembleProcess& b);

/// Stacks v as (y, Y, z, Z, k) following the ensemble flattening.
Eigen::VectorXd stack(const StateQuintuple& v);
StateQuintuple unstack(const Eigen::VectorXd& s, const StateLayout& l);

}  // namespace fbdsde
