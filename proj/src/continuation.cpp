#include "fbdsde/continuation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

namespace fbdsde {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// alpha * A(t_i, bar_i) + perturbation_i at every node.
std::vector<NodeDrivers> scaled_drivers(const CoefficientSet& coeffs, double alpha,
                                        const AffinePerturbation& pert,
                                        const EnsembleProcess& bar) {
  if (static_cast<int>(pert.nodes.size()) != bar.steps + 1)
    throw DimensionError("perturbation and iterate disagree on the grid");
  std::vector<NodeDrivers> out(bar.steps + 1);
  const double dt = bar.dt();
  for (int i = 0; i <= bar.steps; ++i) {
    if (alpha != 0.0) {
      out[i] = coeffs.eval_batch(i * dt, bar.nodes[i]);
      out[i] *= alpha;
      out[i] += pert.nodes[i];
    } else {
      out[i] = pert.nodes[i];
    }
  }
  return out;
}

ForwardDrivers forward_part(const std::vector<NodeDrivers>& d) {
  ForwardDrivers fd;
  for (const auto& nd : d) {
    fd.beta.push_back(nd.b);
    fd.Sigma.push_back(nd.sigma);
    fd.Phi.push_back(nd.phi);
  }
  return fd;
}

BackwardDrivers backward_part(const std::vector<NodeDrivers>& d) {
  BackwardDrivers bd;
  for (const auto& nd : d) {
    bd.F.push_back(nd.f);
    bd.G.push_back(nd.g);
  }
  return bd;
}

void add_case1_feedback(BackwardDrivers& bd, double alpha, double theta1,
                        const ForwardSolution& fwd) {
  const double w = (1.0 - alpha) * theta1;
  if (w == 0.0) return;
  for (std::size_t i = 0; i < bd.F.size(); ++i) {
    bd.F[i] -= w * fwd.y.at(i);
    bd.G[i] -= w * fwd.z.at(i);
  }
}

void add_case2_feedback(ForwardDrivers& fd, double alpha, double theta2,
                        const BackwardSolution& bwd) {
  const double w = (1.0 - alpha) * theta2;
  if (w == 0.0) return;
  for (std::size_t i = 0; i < fd.beta.size(); ++i) {
    fd.beta[i] -= w * bwd.Y.at(i);
    fd.Sigma[i] -= w * bwd.Z.at(i);
    fd.Phi[i] -= w * bwd.k.at(i);
  }
}

Eigen::MatrixXd case1_terminal(const CoefficientSet& coeffs, double alpha,
                               const AffinePerturbation& pert, const Eigen::MatrixXd& yT) {
  Eigen::MatrixXd term = (1.0 - alpha) * yT + pert.phi_T;
  if (alpha != 0.0) term += alpha * coeffs.h_batch(yT);
  return term;
}

Eigen::MatrixXd case2_terminal(const CoefficientSet& coeffs, double alpha,
                               const AffinePerturbation& pert, const Eigen::MatrixXd& ybarT) {
  Eigen::MatrixXd term = pert.phi_T;
  if (alpha != 0.0) term += alpha * coeffs.h_batch(ybarT);
  return term;
}

}  // namespace

Case select_case(const MonotoneConstants& c) {
  if (c.theta1 > 0 && c.beta > 0) return Case::One;
  if (c.theta2 > 0) return Case::Two;
  std::string why;
  if (!(c.theta1 + c.theta2 > 0)) why = "theta1 + theta2 > 0 fails";
  else why = "case 1 needs theta1 > 0 and beta > 0 (theta1 = " + std::to_string(c.theta1) +
             ", beta = " + std::to_string(c.beta) + "), case 2 needs theta2 > 0";
  throw CaseSelectionError("no continuation case applies: " + why);
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "CONVERGED";
    case SolveStatus::NonContraction: return "NON_CONTRACTION";
    case SolveStatus::MaxIter: return "MAX_ITER";
    case SolveStatus::LadderStalled: return "LADDER_STALLED";
  }
  return "UNKNOWN";
}

void ContinuationConfig::validate() const {
  if (!(delta0 > 0 && delta0 <= 1)) throw std::invalid_argument("delta must lie in (0, 1]");
  if (!(shrink > 0 && shrink < 1)) throw std::invalid_argument("shrink factor must lie in (0, 1)");
  if (!(delta_min > 0 && delta_min <= delta0))
    throw std::invalid_argument("minimum delta must lie in (0, delta]");
  if (!(picard_tol > 0)) throw std::invalid_argument("picard tolerance must be > 0");
  if (picard_max_iter < 2) throw std::invalid_argument("picard_max_iter must be >= 2");
}

ContinuationProblem::ContinuationProblem(const CoefficientSet& c, Eigen::VectorXd x0,
                                         const NoiseEnsemble& nz, Case w, double th,
                                         KernelOptions opts,
                                         std::optional<AffinePerturbation> p)
    : coeffs(&c),
      x(std::move(x0)),
      pert(p ? std::move(*p) : AffinePerturbation::Zero(c.layout(), nz.steps(), nz.n_paths)),
      noise(&nz),
      features(FeatureSet::from_noise(nz)),
      which(w),
      theta(th),
      kernel(std::move(opts)) {
  if (!same_shape(c.layout(), nz.layout))
    throw DimensionError("coefficients and noise use different layouts");
  if (x.size() != c.layout().d_H) throw DimensionError("initial condition must lie in H");
  if (theta < 0) throw std::invalid_argument("feedback constant must be >= 0");
}

std::pair<Case, double> resolve_case(const CoefficientSet& coeffs, CaseChoice choice) {
  const auto& dc = coeffs.declared_constants();
  switch (choice) {
    case CaseChoice::One: return {Case::One, dc ? dc->theta1 : 0.0};
    case CaseChoice::Two: return {Case::Two, dc ? dc->theta2 : 0.0};
    case CaseChoice::Auto: break;
  }
  if (!dc)
    throw CaseSelectionError("problem '" + coeffs.name() +
                             "' declares no monotonicity constants; choose a case explicitly");
  const Case c = select_case(*dc);
  return {c, c == Case::One ? dc->theta1 : dc->theta2};
}

FrozenDrivers frozen_drivers_case1(const CoefficientSet& coeffs, double alpha,
                                   const AffinePerturbation& pert, const EnsembleProcess& bar,
                                   double theta1, const ForwardSolution& fwd) {
  const auto d = scaled_drivers(coeffs, alpha, pert, bar);
  FrozenDrivers fz{forward_part(d), backward_part(d)};
  add_case1_feedback(fz.backward, alpha, theta1, fwd);
  fz.backward.terminal = case1_terminal(coeffs, alpha, pert, fwd.y.at(bar.steps));
  return fz;
}

FrozenDrivers frozen_drivers_case2(const CoefficientSet& coeffs, double alpha,
                                   const AffinePerturbation& pert, const EnsembleProcess& bar,
                                   double theta2, const BackwardSolution& bwd) {
  const auto d = scaled_drivers(coeffs, alpha, pert, bar);
  FrozenDrivers fz{forward_part(d), backward_part(d)};
  add_case2_feedback(fz.forward, alpha, theta2, bwd);
  fz.backward.terminal = case2_terminal(coeffs, alpha, pert, bar.nodes.back().y);
  return fz;
}

EnsembleProcess picard_step(const ContinuationProblem& prob, double alpha,
                            const EnsembleProcess& bar, StageDiagnostics* diag) {
  const NoiseEnsemble& noise = *prob.noise;
  noise.check_matches(bar);
  const auto d = scaled_drivers(*prob.coeffs, alpha, prob.pert, bar);
  if (prob.which == Case::One) {
    const ForwardSolution fwd = solve_forward_frozen(forward_part(d), noise, prob.features,
                                                     prob.x, prob.kernel, nullptr, diag);
    BackwardDrivers bd = backward_part(d);
    add_case1_feedback(bd, alpha, prob.theta, fwd);
    bd.terminal = case1_terminal(*prob.coeffs, alpha, prob.pert, fwd.y.back());
    const BackwardSolution bwd =
        solve_backward_frozen(bd, noise, prob.features, prob.kernel, &fwd.y, diag);
    return assemble(noise, fwd, bwd);
  }
  BackwardDrivers bd = backward_part(d);
  bd.terminal = case2_terminal(*prob.coeffs, alpha, prob.pert, bar.nodes.back().y);
  const BackwardSolution bwd =
      solve_backward_frozen(bd, noise, prob.features, prob.kernel, nullptr, diag);
  ForwardDrivers fd = forward_part(d);
  add_case2_feedback(fd, alpha, prob.theta, bwd);
  const ForwardSolution fwd =
      solve_forward_frozen(fd, noise, prob.features, prob.x, prob.kernel, &bwd.Y, diag);
  return assemble(noise, fwd, bwd);
}

double picard_distance(const EnsembleProcess& a, const EnsembleProcess& b) {
  return std::sqrt(m2_sq_distance(a, b) + terminal_sq_distance(a, b));
}

PicardResult picard_solve(const ContinuationProblem& prob, double alpha,
                          const EnsembleProcess& start, const ContinuationConfig& cfg) {
  cfg.validate();
  PicardResult res;
  res.solution = start;
  double prev = std::numeric_limits<double>::infinity();
  int non_decreasing = 0;
  const auto t0 = Clock::now();
  for (int k = 1; k <= cfg.picard_max_iter; ++k) {
    EnsembleProcess next;
    try {
      next = picard_step(prob, alpha, res.solution, &res.kernel);
    } catch (const KernelError& e) {
      res.status = SolveStatus::NonContraction;
      res.note = std::string("iterates diverged: ") + e.what();
      return res;
    }
    const double d = picard_distance(next, res.solution);
    const double eps = cfg.picard_tol * std::max(1.0, std::sqrt(m2_sq_norm(next)));
    const double ratio = (k > 1 && prev > 0) ? d / prev : 0.0;
    res.trace.push_back({alpha, k, d, ratio, seconds_since(t0)});
    res.solution = std::move(next);
    res.iterations = k;
    res.final_dist = d;
    res.tolerance = eps;
    if (!std::isfinite(d)) {
      res.status = SolveStatus::NonContraction;
      res.note = "distance between iterates is not finite";
      return res;
    }
    if (d < eps) {
      res.status = SolveStatus::Converged;
      return res;
    }
    non_decreasing = (k > 1 && d >= prev) ? non_decreasing + 1 : 0;
    if (non_decreasing >= 3) {
      res.status = SolveStatus::NonContraction;
      res.note = "distance failed to decrease for 3 consecutive iterations";
      return res;
    }
    prev = d;
  }
  res.status = SolveStatus::MaxIter;
  res.note = "no convergence within " + std::to_string(cfg.picard_max_iter) + " iterations";
  return res;
}

LadderResult continuation_ladder(const ContinuationProblem& prob, const ContinuationConfig& cfg,
                                 std::optional<EnsembleProcess> start) {
  cfg.validate();
  const auto t0 = Clock::now();
  const NoiseEnsemble& noise = *prob.noise;
  if (!start) {
    start = EnsembleProcess::Zero(noise.layout, noise.grid.T, noise.steps(), noise.n_paths);
    for (auto& nb : start->nodes) nb.y = prob.x.transpose().replicate(noise.n_paths, 1);
  }
  LadderResult out;
  auto& diag = out.diagnostics;
  diag.which = prob.which;
  diag.theta = prob.theta;

  auto run = [&](double alpha, double delta, const EnsembleProcess& from) {
    const auto ts = Clock::now();
    PicardResult r = picard_solve(prob, alpha, from, cfg);
    LadderStep step;
    step.alpha = alpha;
    step.delta = delta;
    step.accepted = r.converged();
    step.status = r.status;
    step.iterations = r.iterations;
    step.final_dist = r.final_dist;
    for (const auto& rec : r.trace) step.ratios.push_back(rec.ratio);
    step.seconds = seconds_since(ts);
    diag.steps.push_back(step);
    diag.trace.insert(diag.trace.end(), r.trace.begin(), r.trace.end());
    diag.kernel.absorb(r.kernel);
    return r;
  };

  PicardResult r0 = run(0.0, 0.0, *start);
  if (!r0.converged()) {
    diag.status = r0.status;
    out.solution = std::move(r0.solution);
    diag.total_seconds = seconds_since(t0);
    return out;
  }
  EnsembleProcess current = std::move(r0.solution);
  double alpha = 0.0, delta = cfg.delta0;
  while (alpha < 1.0) {
    double next = alpha + delta;
    if (next > 1.0 - 1e-12) next = 1.0;
    PicardResult r = run(next, delta, cfg.warm_start ? current : *start);
    if (r.converged()) {
      alpha = next;
      current = std::move(r.solution);
      continue;
    }
    if (r.status == SolveStatus::NonContraction) {
      delta *= cfg.shrink;
      if (delta < cfg.delta_min * (1 - 1e-12)) {
        diag.status = SolveStatus::LadderStalled;
        break;
      }
      continue;
    }
    diag.status = r.status;
    break;
  }
  diag.final_alpha = alpha;
  out.solution = std::move(current);
  diag.total_seconds = seconds_since(t0);
  return out;
}

double contraction_probe(const ContinuationProblem& prob, double alpha, const EnsembleProcess& a,
                         const EnsembleProcess& b) {
  const double den = m2_sq_distance(a, b) + terminal_sq_distance(a, b);
  if (!(den > 0)) throw std::invalid_argument("contraction probe needs distinct iterates");
  EnsembleProcess Ia, Ib;
  std::exception_ptr err;
  std::thread worker([&] {
    try {
      Ib = picard_step(prob, alpha, b);
    } catch (...) {
      err = std::current_exception();
    }
  });
  try {
    Ia = picard_step(prob, alpha, a);
  } catch (...) {
    worker.join();
    throw;
  }
  worker.join();
  if (err) std::rethrow_exception(err);
  return (m2_sq_distance(Ia, Ib) + terminal_sq_distance(Ia, Ib)) / den;
}

EnsembleProcess random_adapted_start(const NoiseEnsemble& noise, const FeatureSet& features,
                                     std::uint64_t seed, double scale) {
  const auto& l = noise.layout;
  EnsembleProcess e = EnsembleProcess::Zero(l, noise.grid.T, noise.steps(), noise.n_paths);
  const Philox4x32 gen(seed);
  const int q = static_cast<int>(features.nodes.at(0).cols());
  const double norm = scale / std::sqrt(static_cast<double>(q + 1));
  Eigen::MatrixXd NodeBlock::*fields[] = {&NodeBlock::y, &NodeBlock::Y, &NodeBlock::z,
                                          &NodeBlock::Z, &NodeBlock::k};
  for (std::uint32_t f = 0; f < 5; ++f) {
    const Eigen::Index w = (e.nodes[0].*fields[f]).cols();
    Eigen::MatrixXd coef(q + 1, w);
    for (Eigen::Index c = 0; c < w; ++c)
      for (int r = 0; r <= q; ++r)
        coef(r, c) = norm * counter_normal(gen, f, static_cast<std::uint32_t>(c),
                                           NoiseStream::Start, static_cast<std::uint32_t>(r));
    for (int i = 0; i <= noise.steps(); ++i) {
      Eigen::MatrixXd v = features.nodes[i] * coef.bottomRows(q);
      v.rowwise() += coef.row(0);
      e.nodes[i].*fields[f] = std::move(v);
    }
  }
  return e;
}

EnsembleProcess ensemble_from(const NoiseEnsemble& noise, const ClosedForm& cf) {
  const auto& l = noise.layout;
  EnsembleProcess e = EnsembleProcess::Zero(l, noise.grid.T, noise.steps(), noise.n_paths);
  for (int i = 0; i <= noise.steps(); ++i) {
    NodeBlock one = NodeBlock::Zero(l, 1);
    one.set(0, cf.value(noise.grid.t(i)));
    auto& nb = e.nodes[i];
    nb.y = one.y.replicate(noise.n_paths, 1);
    nb.Y = one.Y.replicate(noise.n_paths, 1);
    nb.z = one.z.replicate(noise.n_paths, 1);
    nb.Z = one.Z.replicate(noise.n_paths, 1);
    nb.k = one.k.replicate(noise.n_paths, 1);
  }
  return e;
}

}  // namespace fbdsde
