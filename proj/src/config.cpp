#include "fbdsde/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace fbdsde {

namespace {

constexpr double kExample2T = 0.75 * std::numbers::pi;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw ConfigError(join(path, k), "unknown key");
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(key, "must be finite");
  return d;
}

long long get_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
  return v.get<long long>();
}

int get_positive_int(const json& v, const std::string& key) {
  const long long n = get_integer(v, key);
  if (n < 1 || n > 100000000) throw ConfigError(key, "must be a positive integer");
  return static_cast<int>(n);
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd get_vector(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key, "expected an array of numbers");
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out(i) = get_number(v[i], key + "[" + std::to_string(i) + "]");
  return out;
}

Eigen::MatrixXd get_matrix(const json& v, const std::string& key, Eigen::Index rows,
                           Eigen::Index cols) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != rows)
    throw ConfigError(key, "expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = get_vector(v[r], key + "[" + std::to_string(r) + "]");
    if (row.size() != cols)
      throw ConfigError(key + "[" + std::to_string(r) + "]",
                        "expected " + std::to_string(cols) + " columns");
    m.row(r) = row.transpose();
  }
  return m;
}

std::string case_name(CaseChoice c) {
  switch (c) {
    case CaseChoice::Auto: return "auto";
    case CaseChoice::One: return "case1";
    case CaseChoice::Two: return "case2";
  }
  return "auto";
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace

CaseChoice parse_case(const std::string& s, const std::string& key) {
  if (s == "auto") return CaseChoice::Auto;
  if (s == "1" || s == "case1") return CaseChoice::One;
  if (s == "2" || s == "case2") return CaseChoice::Two;
  throw ConfigError(key, "expected auto, 1 or 2");
}

RunConfig parse_config(const json& j) {
  check_keys(j, "", {"problem", "problem_file", "dims", "marks", "T", "steps", "paths", "seed",
                     "x", "decoupled", "continuation", "regression", "hypotheses", "probe",
                     "output", "workers"});
  RunConfig cfg;
  if (!j.contains("problem")) throw ConfigError("problem", "required key is missing");
  cfg.problem = get_string(j["problem"], "problem");
  static const std::set<std::string> problems = {"example1", "example2", "decoupled", "linear"};
  if (!problems.count(cfg.problem))
    throw ConfigError("problem", "unknown problem '" + cfg.problem +
                                     "' (example1, example2, decoupled, linear)");
  if (j.contains("problem_file")) cfg.problem_file = get_string(j["problem_file"], "problem_file");
  if (cfg.problem == "linear" && cfg.problem_file.empty())
    throw ConfigError("problem_file", "required for linear problems");

  if (j.contains("dims")) {
    const json& d = j["dims"];
    check_keys(d, "dims", {"d_H", "d_E1", "d_E2"});
    if (d.contains("d_H")) cfg.layout.d_H = get_positive_int(d["d_H"], "dims.d_H");
    if (d.contains("d_E1")) cfg.layout.d_E1 = get_positive_int(d["d_E1"], "dims.d_E1");
    if (d.contains("d_E2")) cfg.layout.d_E2 = get_positive_int(d["d_E2"], "dims.d_E2");
  }
  if (j.contains("marks")) {
    const Eigen::VectorXd w = get_vector(j["marks"], "marks");
    if (w.size() == 0) throw ConfigError("marks", "needs at least one mark");
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (!(w(i) > 0)) throw ConfigError("marks[" + std::to_string(i) + "]", "weight must be > 0");
    cfg.layout.marks = MarkSpace(w);
  }

  if (j.contains("T")) {
    cfg.T = get_number(j["T"], "T");
    if (!(cfg.T > 0)) throw ConfigError("T", "must be > 0");
  } else if (cfg.problem == "example2") {
    cfg.T = kExample2T;
  }
  if (cfg.problem == "example2" && std::abs(cfg.T - kExample2T) > 1e-12)
    cfg.warnings.push_back("example2 with T != 3*pi/4: the closed form (sin t, cos t, 0, 0, 0) "
                           "only meets the terminal condition at T = 3*pi/4");
  if (j.contains("steps")) cfg.steps = get_positive_int(j["steps"], "steps");
  if (j.contains("paths")) cfg.paths = get_positive_int(j["paths"], "paths");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0))
      throw ConfigError("seed", "expected a nonnegative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  cfg.x = j.contains("x") ? get_vector(j["x"], "x") : Eigen::VectorXd::Zero(cfg.layout.d_H);
  if (cfg.x.size() != cfg.layout.d_H)
    throw ConfigError("x", "length must equal dims.d_H = " + std::to_string(cfg.layout.d_H));

  if (j.contains("decoupled")) {
    if (cfg.problem != "decoupled") throw ConfigError("decoupled", "only valid for problem 'decoupled'");
    const json& d = j["decoupled"];
    check_keys(d, "decoupled", {"theta1", "phi_T"});
    DecoupledParams p;
    if (d.contains("theta1")) p.theta1 = get_number(d["theta1"], "decoupled.theta1");
    if (p.theta1 < 0) throw ConfigError("decoupled.theta1", "must be >= 0");
    p.phi_T = d.contains("phi_T") ? get_vector(d["phi_T"], "decoupled.phi_T")
                                  : Eigen::VectorXd::Zero(cfg.layout.d_H);
    if (p.phi_T.size() != cfg.layout.d_H) throw ConfigError("decoupled.phi_T", "length must equal dims.d_H");
    cfg.decoupled = p;
  } else if (cfg.problem == "decoupled") {
    cfg.decoupled = DecoupledParams{0.0, DriverQuintuple::Zero(cfg.layout),
                                    Eigen::VectorXd::Zero(cfg.layout.d_H)};
  }
  if (cfg.decoupled && cfg.decoupled->offsets.f.size() == 0)
    cfg.decoupled->offsets = DriverQuintuple::Zero(cfg.layout);

  auto& cc = cfg.continuation;
  if (j.contains("continuation")) {
    const json& c = j["continuation"];
    check_keys(c, "continuation",
               {"case", "delta", "shrink", "delta_min", "tol", "max_iter", "warm_start"});
    if (c.contains("case")) {
      const json& v = c["case"];
      cc.case_choice = parse_case(v.is_number_integer() ? std::to_string(v.get<long long>())
                                                        : get_string(v, "continuation.case"));
    }
    if (c.contains("delta")) cc.delta0 = get_number(c["delta"], "continuation.delta");
    if (c.contains("shrink")) cc.shrink = get_number(c["shrink"], "continuation.shrink");
    if (c.contains("delta_min")) cc.delta_min = get_number(c["delta_min"], "continuation.delta_min");
    if (c.contains("tol")) cc.picard_tol = get_number(c["tol"], "continuation.tol");
    if (c.contains("max_iter")) cc.picard_max_iter = get_positive_int(c["max_iter"], "continuation.max_iter");
    if (c.contains("warm_start")) cc.warm_start = get_bool(c["warm_start"], "continuation.warm_start");
  }
  if (j.contains("regression")) {
    const json& r = j["regression"];
    check_keys(r, "regression", {"degree", "covariation_degree", "cross_terms", "ridge"});
    auto& b = cc.kernel.basis;
    if (r.contains("degree")) {
      const long long d = get_integer(r["degree"], "regression.degree");
      if (d < 0 || d > 6) throw ConfigError("regression.degree", "must lie in 0..6");
      b.degree = static_cast<int>(d);
    }
    if (r.contains("covariation_degree")) {
      const long long d = get_integer(r["covariation_degree"], "regression.covariation_degree");
      if (d < 0 || d > 6) throw ConfigError("regression.covariation_degree", "must lie in 0..6");
      cc.kernel.covariation_degree = static_cast<int>(d);
    }
    if (r.contains("cross_terms")) b.cross_terms = get_bool(r["cross_terms"], "regression.cross_terms");
    if (r.contains("ridge") && !r["ridge"].is_null()) {
      b.ridge = get_number(r["ridge"], "regression.ridge");
      if (*b.ridge < 0) throw ConfigError("regression.ridge", "must be >= 0");
    }
  }
  if (j.contains("hypotheses")) {
    const json& h = j["hypotheses"];
    check_keys(h, "hypotheses", {"samples"});
    if (h.contains("samples")) cfg.hypothesis_samples = get_positive_int(h["samples"], "hypotheses.samples");
  }
  if (j.contains("probe")) {
    const json& p = j["probe"];
    check_keys(p, "probe", {"alpha0", "deltas", "pairs"});
    if (p.contains("alpha0")) cfg.probe_alpha0 = get_number(p["alpha0"], "probe.alpha0");
    if (p.contains("deltas")) cfg.probe_deltas = to_std(get_vector(p["deltas"], "probe.deltas"));
    if (p.contains("pairs")) cfg.probe_pairs = get_positive_int(p["pairs"], "probe.pairs");
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, "output", {"dir", "sample_paths"});
    if (o.contains("dir")) cfg.out_dir = get_string(o["dir"], "output.dir");
    if (o.contains("sample_paths")) cfg.sample_paths = get_positive_int(o["sample_paths"], "output.sample_paths");
  }
  if (j.contains("workers")) cfg.workers = get_positive_int(j["workers"], "workers");
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  try {
    layout.validate();
  } catch (const std::exception& e) {
    throw ConfigError("dims", e.what());
  }
  if (problem == "example2" && (layout.d_H != 1 || layout.d_E1 != 1 || layout.d_E2 != 1 || layout.m() != 1))
    throw ConfigError("dims", "example2 is scalar: d_H = d_E1 = d_E2 = 1 with one mark");
  if (problem == "example2" && !x.isZero(0.0)) throw ConfigError("x", "example2 starts from y_0 = 0");
  if (problem == "example1" && layout.d_E1 != layout.d_E2)
    throw ConfigError("dims", "example1 needs d_E1 == d_E2");
  try {
    continuation.validate();
  } catch (const std::exception& e) {
    throw ConfigError("continuation", e.what());
  }
  const int p = continuation.kernel.basis.size(layout.d_E1 + layout.d_E2 + layout.m() + layout.d_H);
  if (10 * p > paths)
    throw ConfigError("paths", "regression basis of size " + std::to_string(p) +
                                   " needs at least " + std::to_string(10 * p) + " paths");
  if (hypothesis_samples < 100) throw ConfigError("hypotheses.samples", "must be >= 100");
  if (!(probe_alpha0 >= 0 && probe_alpha0 < 1)) throw ConfigError("probe.alpha0", "must lie in [0, 1)");
  for (double d : probe_deltas)
    if (!(d > 0 && probe_alpha0 + d <= 1)) throw ConfigError("probe.deltas", "need 0 < delta <= 1 - alpha0");
}

json RunConfig::echo() const {
  const auto& cc = continuation;
  json j = {{"problem", problem},
            {"dims", {{"d_H", layout.d_H}, {"d_E1", layout.d_E1}, {"d_E2", layout.d_E2}}},
            {"marks", to_std(layout.marks.weights())},
            {"T", T},
            {"steps", steps},
            {"paths", paths},
            {"seed", seed},
            {"x", to_std(x)},
            {"continuation",
             {{"case", case_name(cc.case_choice)},
              {"delta", cc.delta0},
              {"shrink", cc.shrink},
              {"delta_min", cc.delta_min},
              {"tol", cc.picard_tol},
              {"max_iter", cc.picard_max_iter},
              {"warm_start", cc.warm_start}}},
            {"regression",
             {{"degree", cc.kernel.basis.degree},
              {"covariation_degree", cc.kernel.covariation_degree},
              {"cross_terms", cc.kernel.basis.cross_terms},
              {"ridge", cc.kernel.basis.ridge ? json(*cc.kernel.basis.ridge) : json(nullptr)}}},
            {"hypotheses", {{"samples", hypothesis_samples}}},
            {"probe", {{"alpha0", probe_alpha0}, {"deltas", probe_deltas}, {"pairs", probe_pairs}}},
            {"output", {{"dir", out_dir}, {"sample_paths", sample_paths}}},
            {"workers", workers}};
  if (!problem_file.empty()) j["problem_file"] = problem_file;
  if (decoupled)
    j["decoupled"] = {{"theta1", decoupled->theta1}, {"phi_T", to_std(decoupled->phi_T)}};
  return j;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", "cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("", "invalid JSON in '" + path + "': " + e.what());
  }
  RunConfig cfg = parse_config(j);
  if (cfg.problem == "linear" && !cfg.problem_file.empty() && cfg.problem_file.front() != '/') {
    const auto slash = path.find_last_of('/');
    if (slash != std::string::npos) cfg.problem_file = path.substr(0, slash + 1) + cfg.problem_file;
  }
  return cfg;
}

json Overrides::apply(RunConfig& cfg) const {
  json rec = json::object();
  if (seed) cfg.seed = *seed, rec["seed"] = *seed;
  if (steps) {
    if (*steps < 1) throw ConfigError("--steps", "must be a positive integer");
    cfg.steps = *steps, rec["steps"] = *steps;
  }
  if (paths) {
    if (*paths < 1) throw ConfigError("--paths", "must be a positive integer");
    cfg.paths = *paths, rec["paths"] = *paths;
  }
  if (workers) {
    if (*workers < 1) throw ConfigError("--workers", "must be a positive integer");
    cfg.workers = *workers, rec["workers"] = *workers;
  }
  if (out) cfg.out_dir = *out, rec["out"] = *out;
  if (case_choice) cfg.continuation.case_choice = parse_case(*case_choice, "--case"), rec["case"] = *case_choice;
  if (tol) cfg.continuation.picard_tol = *tol, rec["tol"] = *tol;
  if (delta) {
    cfg.continuation.delta0 = *delta, rec["delta"] = *delta;
    cfg.continuation.delta_min = std::min(cfg.continuation.delta_min, *delta);
  }
  cfg.validate();
  return rec;
}

std::shared_ptr<CoefficientSet> load_linear_problem(const json& j, const StateLayout& l) {
  check_keys(j, "problem_file", {"drift", "offset", "h_matrix", "h_offset", "constants", "name"});
  const int S = l.stacked_size();
  for (const char* k : {"drift", "h_matrix"})
    if (!j.contains(k)) throw ConfigError(std::string("problem_file.") + k, "required key is missing");
  const Eigen::MatrixXd drift = get_matrix(j["drift"], "problem_file.drift", S, S);
  const Eigen::VectorXd offset =
      j.contains("offset") ? get_vector(j["offset"], "problem_file.offset") : Eigen::VectorXd::Zero(S);
  if (offset.size() != S) throw ConfigError("problem_file.offset", "length must be " + std::to_string(S));
  const Eigen::MatrixXd hm = get_matrix(j["h_matrix"], "problem_file.h_matrix", l.d_H, l.d_H);
  const Eigen::VectorXd ho = j.contains("h_offset") ? get_vector(j["h_offset"], "problem_file.h_offset")
                                                    : Eigen::VectorXd::Zero(l.d_H);
  if (ho.size() != l.d_H) throw ConfigError("problem_file.h_offset", "length must equal d_H");
  const std::string name = j.contains("name") ? get_string(j["name"], "problem_file.name") : "linear";
  auto coeffs = std::make_shared<LinearCoefficients>(l, drift, offset, hm, ho, name);
  if (j.contains("constants")) {
    const json& c = j["constants"];
    check_keys(c, "problem_file.constants", {"theta1", "theta2", "beta", "c", "gamma", "direction"});
    MonotoneConstants mc;
    auto num = [&](const char* k, double& dst) {
      if (c.contains(k)) dst = get_number(c[k], std::string("problem_file.constants.") + k);
    };
    num("theta1", mc.theta1);
    num("theta2", mc.theta2);
    num("beta", mc.beta);
    num("c", mc.c);
    num("gamma", mc.gamma);
    if (c.contains("direction")) {
      const std::string d = get_string(c["direction"], "problem_file.constants.direction");
      if (d == "A1/A2") mc.direction = Direction::Standard;
      else if (d == "A1'/A2'") mc.direction = Direction::Reversed;
      else throw ConfigError("problem_file.constants.direction", "expected \"A1/A2\" or \"A1'/A2'\"");
    }
    try {
      mc.validate();
    } catch (const std::exception& e) {
      throw ConfigError("problem_file.constants", e.what());
    }
    coeffs->declare(mc);
  }
  return coeffs;
}

BuiltinProblem make_problem(const RunConfig& cfg) {
  if (cfg.problem == "linear") {
    std::ifstream is(cfg.problem_file);
    if (!is) throw ConfigError("problem_file", "cannot open '" + cfg.problem_file + "'");
    json j;
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError("problem_file", std::string("invalid JSON: ") + e.what());
    }
    BuiltinProblem p;
    p.coeffs = load_linear_problem(j, cfg.layout);
    p.spec = {cfg.layout, cfg.T, cfg.x};
    return p;
  }
  try {
    return builtin(cfg.problem, cfg.layout, cfg.T, cfg.x, cfg.decoupled);
  } catch (const DimensionError& e) {
    throw ConfigError("dims", e.what());
  }
}

}  // namespace fbdsde
