// Discretized two-sided noise: forward Wiener W, the Wiener process B that is
// integrated backward, and a compensated Poisson random measure on a finite
// mark space. Also the Riemann/Ito sum primitives shared by the solver and
// the residual checks.
#pragma once

#include "fbdsde/state_space.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fbdsde {

struct TimeGrid {
  double T = 1.0;
  int steps = 1;

  TimeGrid() = default;
  TimeGrid(double horizon, int n_steps);

  double dt() const { return T / steps; }
  double t(int i) const { return T * static_cast<double>(i) / steps; }
};

/// Philox4x32-10 counter-based generator.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter operator()(Counter ctr) const;

 private:
  Key key_;
};

/// Stream identifiers; each (path, step, stream) owns a disjoint counter.
enum class NoiseStream : std::uint32_t { W = 1, B = 2, N = 3, Sampler = 4, Start = 5 };

/// Uniform in (0, 1) from 64 random bits.
double to_unit_open(std::uint32_t hi, std::uint32_t lo);

/// Standard normal for (seed, path, step, stream, component).
double counter_normal(const Philox4x32& gen, std::uint32_t path, std::uint32_t step,
                      NoiseStream stream, std::uint32_t component);
/// Uniform in (0, 1) for the same key space.
double counter_uniform(const Philox4x32& gen, std::uint32_t path, std::uint32_t step,
                       NoiseStream stream, std::uint32_t component);

/// Poisson(mean) by inversion of a single uniform.
std::uint32_t poisson_inverse(double mean, double u);

using CountMatrix = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-step noise for an ensemble of paths; each step's matrix has one row
/// per path.
struct NoiseEnsemble {
  StateLayout layout;
  TimeGrid grid;
  int n_paths = 0;
  std::uint64_t seed = 0;

  std::vector<Eigen::MatrixXd> dW;  // steps entries, n x d_E1
  std::vector<Eigen::MatrixXd> dB;  // steps entries, n x d_E2: B_{t_{i+1}} - B_{t_i}
  std::vector<CountMatrix> counts;  // steps entries, n x m
  std::vector<Eigen::MatrixXd> dN;  // compensated: counts - Pi_j dt

  int steps() const { return grid.steps; }

  /// W_{t_i}, i = 0..steps.
  std::vector<Eigen::MatrixXd> W_nodes() const;
  /// B_T - B_{t_i}: the backward-filtration summary at node i.
  std::vector<Eigen::MatrixXd> B_future() const;
  /// Compensated counts accumulated up to node i.
  std::vector<Eigen::MatrixXd> N_nodes() const;

  void check_matches(const EnsembleProcess& e) const;
};

/// Samples noise as a pure function of (seed, path, step, component);
/// the result does not depend on `workers`.
NoiseEnsemble sample_noise(std::uint64_t seed, int n_paths, const TimeGrid& grid,
                           const StateLayout& layout, int workers = 1);

// --- Sum primitives --------------------------------------------------------
// Integrands are per-node matrices with one row per path. An operator-valued
// integrand of shape d_H x d_E is flattened row-major, so its row width is
// d_H * d_E and the result has d_H columns.

/// sum_{i=a}^{b-1} h_i dt (left endpoint).
Eigen::MatrixXd riemann_sum(const std::vector<Eigen::MatrixXd>& h, double dt, int a, int b);

/// sum_{i=a}^{b-1} h_i dW_i, h indexed by the left node.
Eigen::MatrixXd forward_ito_sum(const std::vector<Eigen::MatrixXd>& h,
                                const std::vector<Eigen::MatrixXd>& dW, int a, int b);

/// sum_{i=a}^{b-1} h_{i+1} dB_i, h indexed by the right node.
Eigen::MatrixXd backward_ito_sum(const std::vector<Eigen::MatrixXd>& h,
                                 const std::vector<Eigen::MatrixXd>& dB, int a, int b);

/// sum_{i=a}^{b-1} sum_j k_{i,j} (n_{i,j} - Pi_j dt), k mark-major and left-indexed.
Eigen::MatrixXd compensated_jump_sum(const std::vector<Eigen::MatrixXd>& k,
                                     const NoiseEnsemble& noise, int a, int b);

/// One step of h . dX for a flattened operator row block (n x d_H*d_E) and
/// increments (n x d_E).
Eigen::MatrixXd apply_increment(const Eigen::MatrixXd& h, const Eigen::MatrixXd& dX);
/// One step of sum_j k_j dN_j for a mark-major kernel block.
Eigen::MatrixXd apply_jump(const Eigen::MatrixXd& k, const Eigen::MatrixXd& dN);

/// Node values i -> N - i.
template <typename T>
std::vector<T> reverse_nodes(std::vector<T> v) {
  return {v.rbegin(), v.rend()};
}

/// Step increments reversed and negated: dX'_i = -dX_{N-1-i}.
std::vector<Eigen::MatrixXd> reverse_increments(const std::vector<Eigen::MatrixXd>& dX);

// --- Binary replay dump ----------------------------------------------------
// Header: magic "FBDSNOIS", u32 version, u64 seed, u32 n_paths, u32 steps,
// u32 d_E1, u32 d_E2, u32 m, then m f64 mark weights and f64 T; then dW and dB
// as little-endian f64 in (path, step, component) order and counts as u32 in
// the same order.

void write_noise(std::ostream& os, const NoiseEnsemble& noise);
NoiseEnsemble read_noise(std::istream& is, const StateLayout& layout_hint);

}  // namespace fbdsde
