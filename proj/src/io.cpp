#include "fbdsde/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fbdsde {

std::string json_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json entry_json(const HypothesisEntry& e) {
  json w = json::array();
  for (const auto& x : e.witnesses) w.push_back(to_json(x));
  return {{"status", to_string(e.status)},
          {"n_violations", e.n_violations},
          {"witnesses", w},
          {"note", e.note}};
}

}  // namespace

json to_json(const StateQuintuple& v) {
  return {{"y", vector_json(v.y)},
          {"Y", vector_json(v.Y)},
          {"z", matrix_json(v.z)},
          {"Z", matrix_json(v.Z)},
          {"k", matrix_json(v.k)}};
}

json to_json(const MonotoneConstants& c) {
  return {{"theta1", c.theta1},
          {"theta2", c.theta2},
          {"beta", c.beta},
          {"c", c.c},
          {"gamma", c.gamma},
          {"direction", c.direction == Direction::Standard ? "A1/A2" : "A1'/A2'"}};
}

json to_json(const Witness& w) {
  return {{"inequality", w.inequality},
          {"sample_index", w.sample_index},
          {"t", w.pair.t},
          {"v", to_json(w.pair.v)},
          {"v_prime", to_json(w.pair.v_prime)},
          {"slack", w.slack},
          {"tolerance", w.tolerance}};
}

json to_json(const HypothesisReport& r) {
  const auto& e = r.estimate;
  json j = {{"A1", entry_json(r.A1)},
            {"A2", entry_json(r.A2)},
            {"A3", entry_json(r.A3)},
            {"A4", entry_json(r.A4)},
            {"estimated",
             {{"theta", optional_json(e.theta)},
              {"theta1_only", optional_json(e.theta1_only)},
              {"theta2_only", optional_json(e.theta2_only)},
              {"theta_reversed", optional_json(e.theta_reversed)},
              {"beta", optional_json(e.beta)},
              {"beta_reversed", optional_json(e.beta_reversed)},
              {"c", optional_json(e.c)},
              {"gamma", optional_json(e.gamma)},
              {"kind", "sample-dependent bounds"}}},
            {"theta_sum_positive", r.theta_sum_positive},
            {"theta2_beta_positive", r.theta2_beta_positive},
            {"n_samples", r.n_samples},
            {"sampler", r.sampler},
            {"any_violation", r.any_violation()}};
  j["declared"] = r.declared ? to_json(*r.declared) : json(nullptr);
  return j;
}

json to_json(const ResidualReport& r) {
  return {{"forward_residual", r.forward},
          {"backward_residual", r.backward},
          {"terminal_defect", r.terminal_defect},
          {"sup_forward", r.sup_forward},
          {"sup_backward", r.sup_backward},
          {"steps", r.steps},
          {"n_paths", r.n_paths},
          {"T", r.T}};
}

json to_json(const StageDiagnostics& d) {
  return {{"regressions", d.regressions},
          {"max_condition", d.max_condition},
          {"max_residual_rms", d.max_residual_rms},
          {"max_basis_size", d.max_basis_size}};
}

json to_json(const LadderDiagnostics& d) {
  json steps = json::array();
  for (const auto& s : d.steps)
    steps.push_back({{"alpha", s.alpha},
                     {"delta", s.delta},
                     {"accepted", s.accepted},
                     {"status", to_string(s.status)},
                     {"iterations", s.iterations},
                     {"final_m2_dist", s.final_dist},
                     {"ratios", s.ratios}});
  return {{"case", static_cast<int>(d.which)},
          {"theta_feedback", d.theta},
          {"steps", steps},
          {"final_alpha", d.final_alpha},
          {"status", to_string(d.status)},
          {"kernel", to_json(d.kernel)}};
}

json to_json(const PicardResult& r) {
  std::vector<double> dists, ratios;
  for (const auto& t : r.trace) {
    dists.push_back(t.m2_dist);
    ratios.push_back(t.ratio);
  }
  return {{"status", to_string(r.status)},
          {"iterations", r.iterations},
          {"final_dist", r.final_dist},
          {"tolerance", r.tolerance},
          {"distances", dists},
          {"ratios", ratios},
          {"note", r.note}};
}

json to_json(const ClosedFormError& e) {
  return {{"sup_l2", e.sup_l2},
          {"m2", e.m2},
          {"component_sup",
           {{"y", e.component_sup[0]},
            {"Y", e.component_sup[1]},
            {"z", e.component_sup[2]},
            {"Z", e.component_sup[3]},
            {"k", e.component_sup[4]}}}};
}

std::string summary_table(const HypothesisReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "hyp" << std::setw(22) << "status" << std::setw(12)
     << "violations"
     << "note\n";
  auto row = [&](const char* name, const HypothesisEntry& e) {
    os << std::setw(6) << name << std::setw(22) << to_string(e.status) << std::setw(12)
       << e.n_violations << e.note << "\n";
  };
  row("A1", r.A1);
  row("A2", r.A2);
  row("A3", r.A3);
  row("A4", r.A4);
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : "infeasible"; };
  const auto& e = r.estimate;
  os << "estimated: theta=" << opt(e.theta) << " theta1_only=" << opt(e.theta1_only)
     << " theta2_only=" << opt(e.theta2_only) << " theta_reversed=" << opt(e.theta_reversed)
     << " beta=" << opt(e.beta) << " beta_reversed=" << opt(e.beta_reversed)
     << " c=" << opt(e.c) << " gamma=" << opt(e.gamma) << "\n";
  os << "samples: " << r.n_samples << " (" << r.sampler << ")\n";
  return os.str();
}

CsvWriter::CsvWriter(std::ostream& os, const std::string& manifest_hash,
                     const std::vector<std::string>& header)
    : os_(os), cols_(header.size()) {
  os_ << "# manifest_hash=" << manifest_hash << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
  os_ << '\n';
}

void CsvWriter::sep() {
  if (at_ == cols_) throw std::logic_error("csv row has too many fields");
  if (at_++) os_ << ',';
}

CsvWriter& CsvWriter::operator<<(double v) {
  sep();
  os_ << format_double(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(long v) {
  sep();
  os_ << v;
  return *this;
}

void CsvWriter::end_row() {
  if (at_ != cols_) throw std::logic_error("csv row has too few fields");
  os_ << '\n';
  at_ = 0;
}

void write_solution_csv(std::ostream& os, const std::string& hash, const EnsembleProcess& v,
                        int max_paths) {
  const auto& l = v.layout;
  std::vector<std::string> header = {"path", "t"};
  for (int r = 0; r < l.d_H; ++r) header.push_back("y_" + std::to_string(r));
  for (int r = 0; r < l.d_H; ++r) header.push_back("Y_" + std::to_string(r));
  for (int r = 0; r < l.d_H; ++r)
    for (int c = 0; c < l.d_E2; ++c) header.push_back("z_" + std::to_string(r) + "_" + std::to_string(c));
  for (int r = 0; r < l.d_H; ++r)
    for (int c = 0; c < l.d_E1; ++c) header.push_back("Z_" + std::to_string(r) + "_" + std::to_string(c));
  for (int j = 0; j < l.m(); ++j)
    for (int r = 0; r < l.d_H; ++r) header.push_back("k_" + std::to_string(r) + "_" + std::to_string(j));
  CsvWriter csv(os, hash, header);
  const int n = std::min(max_paths, v.n_paths);
  for (int p = 0; p < n; ++p)
    for (int i = 0; i <= v.steps; ++i) {
      const NodeBlock& nb = v.nodes[i];
      csv << p << v.T * static_cast<double>(i) / v.steps;
      for (const Eigen::MatrixXd* m : {&nb.y, &nb.Y, &nb.z, &nb.Z, &nb.k})
        for (Eigen::Index c = 0; c < m->cols(); ++c) csv << (*m)(p, c);
      csv.end_row();
    }
}

void write_trace_csv(std::ostream& os, const std::string& hash,
                     const std::vector<PicardRecord>& trace) {
  CsvWriter csv(os, hash, {"alpha", "iter", "m2_dist", "ratio"});
  for (const auto& r : trace) {
    csv << r.alpha << r.iter << r.m2_dist << r.ratio;
    csv.end_row();
  }
}

void write_residual_csv(std::ostream& os, const std::string& hash, const ResidualReport& r) {
  CsvWriter csv(os, hash, {"t", "fwd_res", "bwd_res"});
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    csv << r.t[i] << r.forward[i] << r.backward[i];
    csv.end_row();
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

}  // namespace fbdsde
