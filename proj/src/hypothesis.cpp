#include "fbdsde/hypothesis.hpp"

#include "fbdsde/noise.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace fbdsde {

namespace {

constexpr int kComponents = 5;
constexpr std::size_t kMaxWitnesses = 8;

Eigen::VectorXd normal_vector(const Philox4x32& gen, int index, int step, int size) {
  Eigen::VectorXd s(size);
  for (int i = 0; i < size; ++i)
    s(i) = counter_normal(gen, static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(step), NoiseStream::Sampler,
                          static_cast<std::uint32_t>(i));
  return s;
}

}  // namespace

PairSampler::PairSampler(StateLayout layout, double T, std::uint64_t seed,
                         std::vector<double> radii, int rays_per_component)
    : layout_(std::move(layout)),
      T_(T),
      seed_(seed),
      radii_(std::move(radii)),
      rays_per_component_(rays_per_component) {
  if (radii_.empty()) throw std::invalid_argument("sampler needs at least one radius");
  for (double r : radii_)
    if (!(r > 0)) throw std::invalid_argument("sampler radii must be positive");
  if (rays_per_component_ < 0) throw std::invalid_argument("rays_per_component must be >= 0");
}

int PairSampler::ray_batch_size() const {
  return static_cast<int>(radii_.size()) * kComponents * rays_per_component_;
}

std::string PairSampler::describe() const {
  std::ostringstream os;
  os << "normal pairs, seed " << seed_ << ", radii {";
  for (std::size_t i = 0; i < radii_.size(); ++i) os << (i ? ", " : "") << radii_[i];
  os << "}, " << ray_batch_size() << " structured rays first";
  return os.str();
}

PairSample PairSampler::operator()(int index) const {
  const Philox4x32 gen(seed_);
  const int S = layout_.stacked_size();
  PairSample out;
  out.t = T_ * counter_uniform(gen, static_cast<std::uint32_t>(index), 2, NoiseStream::Sampler, 0);
  const int rays = ray_batch_size();
  if (index < rays) {
    const int per_radius = kComponents * rays_per_component_;
    const double r = radii_[index / per_radius];
    const int comp = (index % per_radius) / rays_per_component_;
    const Eigen::VectorXd base = r * normal_vector(gen, index, 0, S);
    Eigen::VectorXd dir = r * normal_vector(gen, index, 1, S);
    const int d_H = layout_.d_H;
    const int starts[kComponents + 1] = {0,
                                         d_H,
                                         2 * d_H,
                                         2 * d_H + layout_.z_cols(),
                                         2 * d_H + layout_.z_cols() + layout_.Z_cols(),
                                         S};
    for (int i = 0; i < S; ++i)
      if (i < starts[comp] || i >= starts[comp + 1]) dir(i) = 0.0;
    out.v_prime = unstack(base, layout_);
    out.v = unstack(base + dir, layout_);
  } else {
    const double r = radii_[(index - rays) % radii_.size()];
    out.v_prime = unstack(r * normal_vector(gen, index, 0, S), layout_);
    out.v = unstack(r * normal_vector(gen, index, 1, S), layout_);
  }
  return out;
}

double equality_tolerance(double lhs, double rhs) {
  return 1e-9 * (1.0 + std::abs(lhs) + std::abs(rhs));
}

// --- per-sample quantities -------------------------------------------------------

namespace {

struct A1Terms {
  double pairing, q1, q2;
};

A1Terms a1_terms(const CoefficientSet& coeffs, const PairSample& s) {
  const auto& l = coeffs.layout();
  const StateQuintuple d = s.v - s.v_prime;
  const DriverQuintuple dA = coeffs.eval_A(s.t, s.v) - coeffs.eval_A(s.t, s.v_prime);
  return {pairing_A(dA, d, l), d.y.squaredNorm() + d.z.squaredNorm(),
          d.Y.squaredNorm() + d.Z.squaredNorm() + jump_sq_norm(d.k, l.marks)};
}

struct A2Terms {
  double inner, dy2;
};

A2Terms a2_terms(const CoefficientSet& coeffs, const PairSample& s) {
  const Eigen::VectorXd dy = s.v.y - s.v_prime.y;
  const Eigen::VectorXd dh = coeffs.eval_h(s.v.y) - coeffs.eval_h(s.v_prime.y);
  return {dh.dot(dy), dy.squaredNorm()};
}

// Each A4 inequality reads lhs <= c * p + gamma * q; for h the sides are norms.
struct A4Term {
  const char* name;
  double lhs, p, q;
};

std::array<A4Term, 6> a4_terms(const CoefficientSet& coeffs, const PairSample& s) {
  const auto& l = coeffs.layout();
  const StateQuintuple d = s.v - s.v_prime;
  const DriverQuintuple dA = coeffs.eval_A(s.t, s.v) - coeffs.eval_A(s.t, s.v_prime);
  const double dy = d.y.squaredNorm(), dY = d.Y.squaredNorm(), dz = d.z.squaredNorm(),
               dZ = d.Z.squaredNorm(), dk = jump_sq_norm(d.k, l.marks);
  const double dh = (coeffs.eval_h(s.v.y) - coeffs.eval_h(s.v_prime.y)).norm();
  return {{{"A4.b", dA.b.squaredNorm(), dy + dY + dz + dZ + dk, 0.0},
           {"A4.f", dA.f.squaredNorm(), dy + dY + dz + dZ + dk, 0.0},
           {"A4.sigma", dA.sigma.squaredNorm(), dy + dY + dZ + dk, 0.5 * dz},
           {"A4.g", dA.g.squaredNorm(), dy + dY + dz, dZ + dk},
           {"A4.phi", jump_sq_norm(dA.phi, l.marks), dy + dY + dZ + dk, 0.5 * dz},
           {"A4.h", dh, std::sqrt(dy), 0.0}}};
}

struct Slack {
  double value, tol;
};

Slack a1_slack(const A1Terms& a, double th1, double th2, Direction dir) {
  const double theta_part = th1 * a.q1 + th2 * a.q2;
  if (dir == Direction::Standard)
    return {a.pairing + theta_part, equality_tolerance(a.pairing, theta_part)};
  return {theta_part - a.pairing, equality_tolerance(theta_part, a.pairing)};
}

Slack a2_slack(const A2Terms& a, double beta, Direction dir) {
  const double rhs = beta * a.dy2;
  if (dir == Direction::Standard) return {rhs - a.inner, equality_tolerance(a.inner, rhs)};
  return {a.inner + rhs, equality_tolerance(a.inner, rhs)};
}

Slack a4_slack(const A4Term& a, double c, double gamma) {
  const double rhs = c * a.p + gamma * a.q;
  return {a.lhs - rhs, equality_tolerance(a.lhs, rhs)};
}

void record(Verdict& v, const char* name, int index, const PairSample& s, const Slack& sl) {
  ++v.n_violations;
  v.pass = false;
  if (v.witnesses.size() < kMaxWitnesses) v.witnesses.push_back({name, index, s, sl.value, sl.tol});
}

void require_samples(int n) {
  if (n < 1) throw std::invalid_argument("n_samples must be >= 1");
}

}  // namespace

Verdict verify_A1(const CoefficientSet& coeffs, double theta1, double theta2,
                  const PairSampler& sampler, int n, Direction direction) {
  require_samples(n);
  Verdict v;
  v.n_samples = n;
  const char* name = direction == Direction::Standard ? "A1" : "A1'";
  for (int i = 0; i < n; ++i) {
    const PairSample s = sampler(i);
    const Slack sl = a1_slack(a1_terms(coeffs, s), theta1, theta2, direction);
    if (sl.value > sl.tol) record(v, name, i, s, sl);
  }
  return v;
}

Verdict verify_A2(const CoefficientSet& coeffs, double beta, const PairSampler& sampler, int n,
                  Direction direction) {
  require_samples(n);
  Verdict v;
  v.n_samples = n;
  const char* name = direction == Direction::Standard ? "A2" : "A2'";
  for (int i = 0; i < n; ++i) {
    const PairSample s = sampler(i);
    const Slack sl = a2_slack(a2_terms(coeffs, s), beta, direction);
    if (sl.value > sl.tol) record(v, name, i, s, sl);
  }
  return v;
}

Verdict verify_A4(const CoefficientSet& coeffs, double c, double gamma,
                  const PairSampler& sampler, int n) {
  require_samples(n);
  Verdict v;
  v.n_samples = n;
  for (int i = 0; i < n; ++i) {
    const PairSample s = sampler(i);
    for (const auto& term : a4_terms(coeffs, s)) {
      const Slack sl = a4_slack(term, c, gamma);
      if (sl.value > sl.tol) record(v, term.name, i, s, sl);
    }
  }
  return v;
}

double recompute_slack(const CoefficientSet& coeffs, const Witness& w, double a, double b) {
  if (w.inequality == "A1") return a1_slack(a1_terms(coeffs, w.pair), a, b, Direction::Standard).value;
  if (w.inequality == "A1'") return a1_slack(a1_terms(coeffs, w.pair), a, b, Direction::Reversed).value;
  if (w.inequality == "A2") return a2_slack(a2_terms(coeffs, w.pair), a, Direction::Standard).value;
  if (w.inequality == "A2'") return a2_slack(a2_terms(coeffs, w.pair), a, Direction::Reversed).value;
  for (const auto& term : a4_terms(coeffs, w.pair))
    if (w.inequality == term.name) return a4_slack(term, a, b).value;
  throw std::invalid_argument("unknown inequality '" + w.inequality + "'");
}

std::string to_string(HypothesisStatus s) {
  switch (s) {
    case HypothesisStatus::VerifiedAtDeclared: return "verified-at-declared";
    case HypothesisStatus::Violated: return "violated";
    case HypothesisStatus::Estimated: return "estimated";
    case HypothesisStatus::NotChecked: return "not-checked";
  }
  return "unknown";
}

bool HypothesisReport::any_violation() const {
  return A1.status == HypothesisStatus::Violated || A2.status == HypothesisStatus::Violated ||
         A4.status == HypothesisStatus::Violated;
}

// --- estimation --------------------------------------------------------------------

namespace {

// Largest x >= 0 with pred(x), pred monotone (true then false). Decade grid
// from 1e-6 to 1e6, then bisection to ~1e-12 relative width.
std::optional<double> largest_feasible(const std::function<bool(double)>& pred) {
  if (!pred(0.0)) return std::nullopt;
  double lo = 0.0, hi = -1.0;
  for (double g = 1e-6; g <= 1e6 * 1.0001; g *= 10.0) {
    if (pred(g)) {
      lo = g;
    } else {
      hi = g;
      break;
    }
  }
  if (hi < 0) return lo;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pred(mid) ? lo : hi) = mid;
  }
  return lo;
}

// Smallest x in (0, 1) with pred(x), pred monotone (false then true).
std::optional<double> smallest_feasible_unit(const std::function<bool(double)>& pred) {
  const double top = 1.0 - 1e-12;
  if (!pred(top)) return std::nullopt;
  double lo = 0.0, hi = top;
  for (double g = 1e-6; g < 1.0; g *= 10.0) {
    if (pred(g)) {
      hi = g;
      break;
    }
    lo = g;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pred(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

HypothesisReport estimate_constants(const CoefficientSet& coeffs, const PairSampler& sampler,
                                    int n) {
  if (n < 100) throw std::invalid_argument("estimate_constants needs at least 100 samples");
  std::vector<A1Terms> a1(n);
  std::vector<A2Terms> a2(n);
  std::vector<std::array<A4Term, 6>> a4(n);
  for (int i = 0; i < n; ++i) {
    const PairSample s = sampler(i);
    a1[i] = a1_terms(coeffs, s);
    a2[i] = a2_terms(coeffs, s);
    a4[i] = a4_terms(coeffs, s);
  }

  auto a1_ok = [&](double th1, double th2, Direction dir) {
    return std::all_of(a1.begin(), a1.end(), [&](const A1Terms& t) {
      const Slack sl = a1_slack(t, th1, th2, dir);
      return sl.value <= sl.tol;
    });
  };
  auto a2_ok = [&](double beta, Direction dir) {
    return std::all_of(a2.begin(), a2.end(), [&](const A2Terms& t) {
      const Slack sl = a2_slack(t, beta, dir);
      return sl.value <= sl.tol;
    });
  };
  // For a given gamma, samples whose c-weighted side vanishes decide feasibility.
  auto gamma_ok = [&](double gamma) {
    for (const auto& terms : a4)
      for (const auto& t : terms)
        if (t.p == 0.0 && t.lhs > gamma * t.q + equality_tolerance(t.lhs, gamma * t.q))
          return false;
    return true;
  };

  HypothesisReport r;
  r.n_samples = n;
  r.sampler = sampler.describe();
  auto& e = r.estimate;
  const auto S = Direction::Standard, R = Direction::Reversed;
  e.theta = largest_feasible([&](double th) { return a1_ok(th, th, S); });
  e.theta1_only = largest_feasible([&](double th) { return a1_ok(th, 0.0, S); });
  e.theta2_only = largest_feasible([&](double th) { return a1_ok(0.0, th, S); });
  e.theta_reversed = largest_feasible([&](double th) { return a1_ok(th, th, R); });
  e.beta = largest_feasible([&](double b) { return a2_ok(b, S); });
  e.beta_reversed = largest_feasible([&](double b) { return a2_ok(b, R); });
  e.gamma = smallest_feasible_unit(gamma_ok);
  if (e.gamma) {
    double c = 0.0;
    for (const auto& terms : a4)
      for (const auto& t : terms)
        if (t.p > 0.0) c = std::max(c, (t.lhs - *e.gamma * t.q) / t.p);
    e.c = c;
  }

  // bisection inside the equality tolerance leaves ~1e-10 residue on a zero constant
  constexpr double positive = 1e-7;
  if (e.theta1_only && e.theta2_only) {
    r.theta_sum_positive = std::max(*e.theta1_only, *e.theta2_only) > positive;
    r.theta2_beta_positive = *e.theta2_only > positive || e.beta.value_or(0.0) > positive;
  } else if (e.theta_reversed) {
    r.theta_sum_positive = *e.theta_reversed > positive;
    r.theta2_beta_positive = *e.theta_reversed > positive || e.beta_reversed.value_or(0.0) > positive;
  }

  auto mark = [](HypothesisEntry& entry, bool feasible) {
    entry.status = feasible ? HypothesisStatus::Estimated : HypothesisStatus::Violated;
  };
  mark(r.A1, e.theta.has_value() || e.theta_reversed.has_value());
  mark(r.A2, e.beta.has_value() || e.beta_reversed.has_value());
  mark(r.A4, e.gamma.has_value());
  if (r.A1.status == HypothesisStatus::Violated) {
    for (auto dir : {S, R}) {
      Verdict v = verify_A1(coeffs, 0.0, 0.0, sampler, n, dir);
      r.A1.n_violations += v.n_violations;
      r.A1.witnesses.insert(r.A1.witnesses.end(), v.witnesses.begin(), v.witnesses.end());
    }
    r.A1.note = "infeasible in both directions at theta1 = theta2 = 0";
  }
  if (r.A2.status == HypothesisStatus::Violated) {
    for (auto dir : {S, R}) {
      Verdict v = verify_A2(coeffs, 0.0, sampler, n, dir);
      r.A2.n_violations += v.n_violations;
      r.A2.witnesses.insert(r.A2.witnesses.end(), v.witnesses.begin(), v.witnesses.end());
    }
    r.A2.note = "infeasible in both directions at beta = 0";
  }
  if (r.A4.status == HypothesisStatus::Violated) {
    Verdict v = verify_A4(coeffs, 1e12, 1.0 - 1e-12, sampler, n);
    r.A4.n_violations = v.n_violations;
    r.A4.witnesses = v.witnesses;
    r.A4.note = "no gamma < 1 admits a finite c";
  }
  if (!r.theta_sum_positive) r.A1.note += (r.A1.note.empty() ? "" : "; ") + std::string("theta1 + theta2 > 0 unmet");
  if (!r.theta2_beta_positive) r.A2.note += (r.A2.note.empty() ? "" : "; ") + std::string("theta2 + beta > 0 unmet");
  r.A3.note = "structural (measurability/integrability); satisfied by construction for deterministic Markovian evaluators";
  return r;
}

HypothesisReport check_hypotheses(const CoefficientSet& coeffs, const PairSampler& sampler,
                                  int n) {
  HypothesisReport r = estimate_constants(coeffs, sampler, std::max(n, 100));
  const auto& declared = coeffs.declared_constants();
  if (!declared) return r;
  r.declared = declared;
  const MonotoneConstants& k = *declared;
  auto apply = [](HypothesisEntry& entry, const Verdict& v) {
    entry.status = v.pass ? HypothesisStatus::VerifiedAtDeclared : HypothesisStatus::Violated;
    entry.n_violations = v.n_violations;
    entry.witnesses = v.witnesses;
    entry.note = v.pass ? "" : "declared constants violated on the sample";
  };
  apply(r.A1, verify_A1(coeffs, k.theta1, k.theta2, sampler, n, k.direction));
  apply(r.A2, verify_A2(coeffs, k.beta, sampler, n, k.direction));
  apply(r.A4, verify_A4(coeffs, k.c, k.gamma, sampler, n));
  return r;
}

}  // namespace fbdsde
