#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace randobs {

// One row per forecast-analysis cycle (or per integration step for the
// continuous filter). kappa and reward are only meaningful for the
// bandit-driven discrete experiment and are written as 0 elsewhere.
struct RunRecord {
  long cycle = 0;
  double time = 0.0;
  double rmse = 0.0;
  double trace_p = 0.0;
  double kappa = 0.0;
  double reward = 0.0;
  int n_j = 0;
  std::vector<int> j_indices;  // sorted, 0-based
  bool switched = false;

  bool operator==(const RunRecord&) const = default;
};

inline constexpr const char* kRunCsvHeader =
    "cycle,time,rmse,trace_p,kappa,reward,n_j,j_indices,switched";

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_run_record(const RunRecord& r) {
  std::string out = std::to_string(r.cycle);
  out += ',';
  out += format_double(r.time);
  out += ',';
  out += format_double(r.rmse);
  out += ',';
  out += format_double(r.trace_p);
  out += ',';
  out += format_double(r.kappa);
  out += ',';
  out += format_double(r.reward);
  out += ',';
  out += std::to_string(r.n_j);
  out += ',';
  for (std::size_t i = 0; i < r.j_indices.size(); ++i) {
    if (i > 0) out += ';';
    out += std::to_string(r.j_indices[i]);
  }
  out += ',';
  out += r.switched ? '1' : '0';
  return out;
}

inline void emit_csv(const std::vector<RunRecord>& records,
                     std::ostream& os) {
  os << kRunCsvHeader << '\n';
  for (const auto& r : records) os << format_run_record(r) << '\n';
}

inline void emit_csv(const std::vector<RunRecord>& records,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("emit_csv: cannot open '" + path + "'");
  emit_csv(records, os);
  os.flush();
  if (!os) throw std::runtime_error("emit_csv: write failed for '" + path + "'");
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_csv_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) {
    throw std::runtime_error("parse_run_csv: bad number '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline std::vector<RunRecord> parse_run_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kRunCsvHeader) {
    throw std::runtime_error("parse_run_csv: missing or unexpected header");
  }
  std::vector<RunRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 9) {
      throw std::runtime_error("parse_run_csv: expected 9 fields, got " +
                               std::to_string(fields.size()));
    }
    RunRecord r;
    r.cycle = std::stol(fields[0]);
    r.time = detail::parse_csv_double(fields[1]);
    r.rmse = detail::parse_csv_double(fields[2]);
    r.trace_p = detail::parse_csv_double(fields[3]);
    r.kappa = detail::parse_csv_double(fields[4]);
    r.reward = detail::parse_csv_double(fields[5]);
    r.n_j = std::stoi(fields[6]);
    if (!fields[7].empty()) {
      for (const auto& tok : detail::split(fields[7], ';')) {
        r.j_indices.push_back(std::stoi(tok));
      }
    }
    r.switched = fields[8] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RunRecord> parse_run_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("parse_run_csv: cannot open '" + path + "'");
  }
  return parse_run_csv(is);
}

// Small helper for the aggregate tables: header plus preformatted rows.
inline void write_table(const std::string& path, const std::string& header,
                        const std::vector<std::string>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_table: cannot open '" + path + "'");
  os << header << '\n';
  for (const auto& r : rows) os << r << '\n';
  os.flush();
  if (!os) throw std::runtime_error("write_table: write failed for '" + path + "'");
}

}  // namespace randobs
