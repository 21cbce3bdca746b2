#include "fbdsde/noise.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <thread>

namespace fbdsde {

TimeGrid::TimeGrid(double horizon, int n_steps) : T(horizon), steps(n_steps) {
  if (!(T > 0.0) || !std::isfinite(T)) throw DimensionError("time horizon must be positive");
  if (steps < 1) throw DimensionError("time grid needs at least one step");
}

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

Philox4x32::Counter make_counter(std::uint32_t path, std::uint32_t step, NoiseStream stream,
                                 std::uint32_t block, std::uint32_t lane) {
  return {path, step, (static_cast<std::uint32_t>(stream) << 24) | (block & 0xFFFFFFu), lane};
}

}  // namespace

Philox4x32::Counter Philox4x32::operator()(Counter c) const {
  Key k = key_;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, c[0], hi0, lo0);
    mulhilo(kPhiloxM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kPhiloxW0;
    k[1] += kPhiloxW1;
  }
  return c;
}

double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double counter_normal(const Philox4x32& gen, std::uint32_t path, std::uint32_t step,
                      NoiseStream stream, std::uint32_t component) {
  const auto r = gen(make_counter(path, step, stream, component / 2, 0));
  const double u1 = to_unit_open(r[0], r[1]);
  const double u2 = to_unit_open(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (component % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
}

double counter_uniform(const Philox4x32& gen, std::uint32_t path, std::uint32_t step,
                       NoiseStream stream, std::uint32_t component) {
  const auto r = gen(make_counter(path, step, stream, component, 1));
  return to_unit_open(r[0], r[1]);
}

std::uint32_t poisson_inverse(double mean, double u) {
  if (mean <= 0.0) return 0;
  double p = std::exp(-mean);
  double cdf = p;
  std::uint32_t n = 0;
  // The tail guard stops at the point where the cdf saturates in double.
  while (u > cdf && n < 100000) {
    ++n;
    p *= mean / n;
    const double next = cdf + p;
    if (next == cdf) break;
    cdf = next;
  }
  return n;
}

std::vector<Eigen::MatrixXd> NoiseEnsemble::W_nodes() const {
  std::vector<Eigen::MatrixXd> W(steps() + 1);
  W[0] = Eigen::MatrixXd::Zero(n_paths, layout.d_E1);
  for (int i = 0; i < steps(); ++i) W[i + 1] = W[i] + dW[i];
  return W;
}

std::vector<Eigen::MatrixXd> NoiseEnsemble::B_future() const {
  std::vector<Eigen::MatrixXd> F(steps() + 1);
  F[steps()] = Eigen::MatrixXd::Zero(n_paths, layout.d_E2);
  for (int i = steps() - 1; i >= 0; --i) F[i] = F[i + 1] + dB[i];
  return F;
}

std::vector<Eigen::MatrixXd> NoiseEnsemble::N_nodes() const {
  std::vector<Eigen::MatrixXd> N(steps() + 1);
  N[0] = Eigen::MatrixXd::Zero(n_paths, layout.m());
  for (int i = 0; i < steps(); ++i) N[i + 1] = N[i] + dN[i];
  return N;
}

void NoiseEnsemble::check_matches(const EnsembleProcess& e) const {
  if (e.steps != steps() || e.n_paths != n_paths || e.T != grid.T ||
      e.layout.d_E1 != layout.d_E1 || e.layout.d_E2 != layout.d_E2 ||
      e.layout.m() != layout.m())
    throw DimensionError("ensemble and noise do not share grid, paths or noise dimensions");
}

NoiseEnsemble sample_noise(std::uint64_t seed, int n_paths, const TimeGrid& grid,
                           const StateLayout& layout, int workers) {
  if (n_paths < 1) throw DimensionError("n_paths must be >= 1");
  layout.validate();
  NoiseEnsemble out;
  out.layout = layout;
  out.grid = grid;
  out.n_paths = n_paths;
  out.seed = seed;
  const int N = grid.steps;
  const int m = layout.m();
  const double dt = grid.dt();
  const double sdt = std::sqrt(dt);
  out.dW.assign(N, Eigen::MatrixXd(n_paths, layout.d_E1));
  out.dB.assign(N, Eigen::MatrixXd(n_paths, layout.d_E2));
  out.counts.assign(N, CountMatrix(n_paths, m));
  out.dN.assign(N, Eigen::MatrixXd(n_paths, m));

  const Philox4x32 gen(seed);
  auto fill = [&](int p0, int p1) {
    for (int p = p0; p < p1; ++p) {
      const auto path = static_cast<std::uint32_t>(p);
      for (int i = 0; i < N; ++i) {
        const auto step = static_cast<std::uint32_t>(i);
        for (int c = 0; c < layout.d_E1; ++c)
          out.dW[i](p, c) = sdt * counter_normal(gen, path, step, NoiseStream::W, c);
        for (int c = 0; c < layout.d_E2; ++c)
          out.dB[i](p, c) = sdt * counter_normal(gen, path, step, NoiseStream::B, c);
        for (int j = 0; j < m; ++j) {
          const double mean = layout.marks.weight(j) * dt;
          const auto n =
              poisson_inverse(mean, counter_uniform(gen, path, step, NoiseStream::N, j));
          out.counts[i](p, j) = n;
          out.dN[i](p, j) = static_cast<double>(n) - mean;
        }
      }
    }
  };

  workers = std::max(1, workers);
  if (workers == 1 || n_paths < 2 * workers) {
    fill(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n_paths + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int p0 = w * chunk, p1 = std::min(n_paths, p0 + chunk);
      if (p0 < p1) pool.emplace_back(fill, p0, p1);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

namespace {

void check_range(std::size_t size, int a, int b) {
  if (a < 0 || b < a || static_cast<std::size_t>(b) > size)
    throw std::out_of_range("sum range [" + std::to_string(a) + ", " + std::to_string(b) +
                            ") outside 0.." + std::to_string(size));
}

}  // namespace

Eigen::MatrixXd apply_increment(const Eigen::MatrixXd& h, const Eigen::MatrixXd& dX) {
  const auto dE = dX.cols();
  if (dE == 0 || h.cols() % dE != 0 || h.rows() != dX.rows())
    throw DimensionError("integrand width is not a multiple of the noise dimension");
  const auto d_H = h.cols() / dE;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(h.rows(), d_H);
  for (Eigen::Index r = 0; r < d_H; ++r)
    for (Eigen::Index c = 0; c < dE; ++c)
      out.col(r).array() += h.col(r * dE + c).array() * dX.col(c).array();
  return out;
}

Eigen::MatrixXd apply_jump(const Eigen::MatrixXd& k, const Eigen::MatrixXd& dN) {
  const auto m = dN.cols();
  if (m == 0 || k.cols() % m != 0 || k.rows() != dN.rows())
    throw DimensionError("jump kernel width does not match the mark count");
  const auto d_H = k.cols() / m;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k.rows(), d_H);
  for (Eigen::Index j = 0; j < m; ++j)
    out.array() += k.middleCols(j * d_H, d_H).array().colwise() * dN.col(j).array();
  return out;
}

Eigen::MatrixXd riemann_sum(const std::vector<Eigen::MatrixXd>& h, double dt, int a, int b) {
  check_range(h.size(), a, b);
  if (h.empty()) throw std::out_of_range("empty integrand");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(h[0].rows(), h[0].cols());
  for (int i = a; i < b; ++i) acc += h[i] * dt;
  return acc;
}

Eigen::MatrixXd forward_ito_sum(const std::vector<Eigen::MatrixXd>& h,
                                const std::vector<Eigen::MatrixXd>& dW, int a, int b) {
  check_range(std::min(h.size(), dW.size()), a, b);
  if (dW.empty()) throw std::out_of_range("empty increments");
  const auto dE = dW[0].cols();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dW[0].rows(), h[0].cols() / dE);
  for (int i = a; i < b; ++i) acc += apply_increment(h[i], dW[i]);
  return acc;
}

Eigen::MatrixXd backward_ito_sum(const std::vector<Eigen::MatrixXd>& h,
                                 const std::vector<Eigen::MatrixXd>& dB, int a, int b) {
  check_range(dB.size(), a, b);
  if (h.size() < dB.size() + 1)
    throw std::out_of_range("right-endpoint integrand needs steps + 1 nodes");
  if (dB.empty()) throw std::out_of_range("empty increments");
  const auto dE = dB[0].cols();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dB[0].rows(), h[0].cols() / dE);
  for (int i = a; i < b; ++i) acc += apply_increment(h[i + 1], dB[i]);
  return acc;
}

Eigen::MatrixXd compensated_jump_sum(const std::vector<Eigen::MatrixXd>& k,
                                     const NoiseEnsemble& noise, int a, int b) {
  check_range(std::min(k.size(), noise.dN.size()), a, b);
  if (k.empty()) throw std::out_of_range("empty kernel sequence");
  if (k[0].cols() % noise.layout.m() != 0)
    throw DimensionError("jump kernel mark count does not match the noise bundle");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(noise.n_paths, k[0].cols() / noise.layout.m());
  for (int i = a; i < b; ++i) acc += apply_jump(k[i], noise.dN[i]);
  return acc;
}

std::vector<Eigen::MatrixXd> reverse_increments(const std::vector<Eigen::MatrixXd>& dX) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(dX.size());
  for (auto it = dX.rbegin(); it != dX.rend(); ++it) out.push_back(-*it);
  return out;
}

// --- binary dump -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'B', 'D', 'S', 'N', 'O', 'I', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) {
    static_assert(sizeof(T) == 8);
    std::memcpy(&bits, &v, 8);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw std::runtime_error("truncated noise dump");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_floating_point_v<T>) {
    T v;
    std::memcpy(&v, &bits, 8);
    return v;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

void write_noise(std::ostream& os, const NoiseEnsemble& noise) {
  os.write(kMagic, 8);
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint64_t>(os, noise.seed);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(noise.n_paths));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(noise.steps()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(noise.layout.d_E1));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(noise.layout.d_E2));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(noise.layout.m()));
  for (int j = 0; j < noise.layout.m(); ++j) put_le<double>(os, noise.layout.marks.weight(j));
  put_le<double>(os, noise.grid.T);
  for (int p = 0; p < noise.n_paths; ++p)
    for (int i = 0; i < noise.steps(); ++i)
      for (int c = 0; c < noise.layout.d_E1; ++c) put_le<double>(os, noise.dW[i](p, c));
  for (int p = 0; p < noise.n_paths; ++p)
    for (int i = 0; i < noise.steps(); ++i)
      for (int c = 0; c < noise.layout.d_E2; ++c) put_le<double>(os, noise.dB[i](p, c));
  for (int p = 0; p < noise.n_paths; ++p)
    for (int i = 0; i < noise.steps(); ++i)
      for (int j = 0; j < noise.layout.m(); ++j) put_le<std::uint32_t>(os, noise.counts[i](p, j));
}

NoiseEnsemble read_noise(std::istream& is, const StateLayout& layout_hint) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a noise dump (bad magic)");
  if (get_le<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported dump version");
  NoiseEnsemble out;
  out.seed = get_le<std::uint64_t>(is);
  out.n_paths = static_cast<int>(get_le<std::uint32_t>(is));
  const int N = static_cast<int>(get_le<std::uint32_t>(is));
  out.layout = layout_hint;
  out.layout.d_E1 = static_cast<int>(get_le<std::uint32_t>(is));
  out.layout.d_E2 = static_cast<int>(get_le<std::uint32_t>(is));
  const int m = static_cast<int>(get_le<std::uint32_t>(is));
  Eigen::VectorXd w(m);
  for (int j = 0; j < m; ++j) w(j) = get_le<double>(is);
  out.layout.marks = MarkSpace(w);
  out.grid = TimeGrid(get_le<double>(is), N);
  out.dW.assign(N, Eigen::MatrixXd(out.n_paths, out.layout.d_E1));
  out.dB.assign(N, Eigen::MatrixXd(out.n_paths, out.layout.d_E2));
  out.counts.assign(N, CountMatrix(out.n_paths, m));
  out.dN.assign(N, Eigen::MatrixXd(out.n_paths, m));
  for (int p = 0; p < out.n_paths; ++p)
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < out.layout.d_E1; ++c) out.dW[i](p, c) = get_le<double>(is);
  for (int p = 0; p < out.n_paths; ++p)
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < out.layout.d_E2; ++c) out.dB[i](p, c) = get_le<double>(is);
  const double dt = out.grid.dt();
  for (int p = 0; p < out.n_paths; ++p)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < m; ++j) {
        out.counts[i](p, j) = get_le<std::uint32_t>(is);
        out.dN[i](p, j) = static_cast<double>(out.counts[i](p, j)) - w(j) * dt;
      }
  return out;
}

}  // namespace fbdsde
