// JSON reports, CSV artifacts and the run manifest hash.
//
// CSVs start with a "# manifest_hash=<hex>" line followed by a mandatory
// header row; numbers use '.' and 17 significant digits, lines end in '\n'.
#pragma once

#include "fbdsde/hypothesis.hpp"
#include "fbdsde/verification.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fbdsde {

using nlohmann::json;

/// FNV-1a 64 of the compact dump; objects are key-sorted so the dump is
/// canonical.
std::string json_hash(const json& j);

/// Locale-independent shortest round-trip formatting of a double.
std::string format_double(double v);

json to_json(const StateQuintuple& v);
json to_json(const MonotoneConstants& c);
json to_json(const Witness& w);
json to_json(const HypothesisReport& r);
json to_json(const ResidualReport& r);
json to_json(const StageDiagnostics& d);
/// Timing fields are left out so reports stay reproducible; they belong in
/// the manifest.
json to_json(const LadderDiagnostics& d);
json to_json(const PicardResult& r);
json to_json(const ClosedFormError& e);

/// Human-readable table of a hypothesis report.
std::string summary_table(const HypothesisReport& r);

class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const std::string& manifest_hash,
            const std::vector<std::string>& header);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long v);
  CsvWriter& operator<<(int v) { return *this << static_cast<long>(v); }
  void end_row();

 private:
  void sep();
  std::ostream& os_;
  std::size_t cols_;
  std::size_t at_ = 0;
};

/// Columns: path, t, y_r..., Y_r..., z_r_c..., Z_r_c..., k_r_j... for the
/// first `max_paths` paths.
void write_solution_csv(std::ostream& os, const std::string& hash, const EnsembleProcess& v,
                        int max_paths);
/// Columns: alpha, iter, m2_dist, ratio. Wall times stay in the manifest.
void write_trace_csv(std::ostream& os, const std::string& hash,
                     const std::vector<PicardRecord>& trace);
/// Columns: t, fwd_res, bwd_res.
void write_residual_csv(std::ostream& os, const std::string& hash, const ResidualReport& r);

/// Writes `j` pretty-printed with a trailing newline.
void write_json_file(const std::string& path, const json& j);

}  // namespace fbdsde
