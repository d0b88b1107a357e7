#pragma once

// CSV ingestion and report serialization.
//
// Report CSV layout (fixed):
//   # sqsi <version>
//   # config <single-line JSON>
//   method,variable,column,estimate,lcb,ucb,pvalue,sigma,pivot_at_lcb,pivot_at_ucb,quadrature_error,flags
// Reals use 17 significant digits; infinite endpoints print as inf / -inf.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqsi/pipeline.hpp"

#ifndef SQSI_VERSION
#define SQSI_VERSION "0.1.0"
#endif

namespace sqsi {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = SQSI_VERSION;

/// Missing file, unreadable input, malformed table. Maps to exit code 2.
struct IoError : std::runtime_error {
  std::string path;
  IoError(const std::string& msg, std::string p) : std::runtime_error(msg), path(std::move(p)) {}
};

// ---------------------------------------------------------------------------
// CSV reading

namespace detail {

/// Splits RFC-4180 text into records. Quoted fields may hold commas, CRLF and
/// doubled quotes.
inline std::vector<std::vector<std::string>> parse_csv_records(const std::string& text,
                                                               const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  long line = 1;
  const size_t n = text.size();
  for (size_t i = 0; i < n; ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started && !field.empty()) {
          throw IoError("stray quote on line " + std::to_string(line), path);
        }
        quoted = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
        rows.push_back(std::move(row));
        row.clear();
        ++line;
        break;
      default:
        field += ch;
        field_started = true;
    }
  }
  if (quoted) throw IoError("unterminated quoted field", path);
  if (field_started || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  // Blank lines carry no record.
  rows.erase(std::remove_if(rows.begin(), rows.end(),
                            [](const std::vector<std::string>& r) {
                              return r.size() == 1 && r[0].empty();
                            }),
             rows.end());
  return rows;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool is_missing(const std::string& cell) {
  const std::string t = trim(cell);
  return t.empty() || t == "NA" || t == "NaN" || t == "nan" || t == "N/A";
}

inline bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno != ERANGE && std::isfinite(out);
}

}  // namespace detail

struct CsvOptions {
  std::string response;
  std::vector<std::string> drop;
  std::vector<std::string> one_hot;
};

/// Reads a header-first CSV into a numeric design. Rows with a missing cell
/// in any used column are dropped and counted; one-hot columns expand to
/// indicators for every level but the first (in sorted order).
inline Dataset load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file: " + path, path);
  std::stringstream buf;
  buf << in.rdbuf();
  auto records = detail::parse_csv_records(buf.str(), path);
  if (records.empty()) throw IoError("empty CSV (a header row is required): " + path, path);

  const std::vector<std::string> header = [&] {
    std::vector<std::string> h;
    for (auto& c : records[0]) h.push_back(detail::trim(c));
    return h;
  }();
  const size_t width = header.size();
  auto find_col = [&](const std::string& name) -> long {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<long>(it - header.begin());
  };
  if (opt.response.empty()) throw std::invalid_argument("a response column is required");
  const long resp = find_col(opt.response);
  if (resp < 0) throw IoError("response column '" + opt.response + "' not in header", path);
  for (const auto& d : opt.drop) {
    if (find_col(d) < 0) throw IoError("drop column '" + d + "' not in header", path);
  }
  for (const auto& d : opt.one_hot) {
    if (find_col(d) < 0) throw IoError("one-hot column '" + d + "' not in header", path);
  }
  auto listed = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };

  std::vector<size_t> used;  // predictor columns in header order
  for (size_t k = 0; k < width; ++k) {
    if (static_cast<long>(k) == resp || listed(opt.drop, header[k])) continue;
    used.push_back(k);
  }

  Dataset d;
  d.response = opt.response;
  std::vector<std::vector<std::string>> kept;
  for (size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.size() != width) {
      throw IoError("row " + std::to_string(r) + " has " + std::to_string(rec.size()) +
                        " fields, header has " + std::to_string(width),
                    path);
    }
    bool missing = detail::is_missing(rec[static_cast<size_t>(resp)]);
    for (size_t k : used) missing = missing || detail::is_missing(rec[k]);
    if (missing) {
      ++d.dropped_rows;
      continue;
    }
    kept.push_back(std::move(rec));
  }
  if (d.dropped_rows > 0) {
    d.warnings.push_back("dropped " + std::to_string(d.dropped_rows) +
                         " row(s) with missing values");
  }

  // Levels per one-hot column.
  std::map<size_t, std::vector<std::string>> levels;
  for (size_t k : used) {
    if (!listed(opt.one_hot, header[k])) continue;
    std::set<std::string> seen;
    for (auto& rec : kept) seen.insert(detail::trim(rec[k]));
    levels[k] = std::vector<std::string>(seen.begin(), seen.end());
  }

  long cols = 0;
  for (size_t k : used) {
    cols += levels.count(k) ? std::max<long>(static_cast<long>(levels[k].size()) - 1, 0) : 1;
  }
  const long n = static_cast<long>(kept.size());
  d.X.resize(n, cols);
  d.Y.resize(n);
  for (size_t k : used) {
    if (levels.count(k)) {
      for (size_t l = 1; l < levels[k].size(); ++l) d.names.push_back(header[k] + "=" + levels[k][l]);
    } else {
      d.names.push_back(header[k]);
    }
  }
  for (long i = 0; i < n; ++i) {
    const auto& rec = kept[static_cast<size_t>(i)];
    double v = 0.0;
    if (!detail::parse_double(rec[static_cast<size_t>(resp)], v)) {
      throw IoError("unparseable value '" + rec[static_cast<size_t>(resp)] + "' in column '" +
                        opt.response + "' (data row " + std::to_string(i + 1) + ")",
                    path);
    }
    d.Y[i] = v;
    long at = 0;
    for (size_t k : used) {
      if (levels.count(k)) {
        const auto& lv = levels[k];
        const std::string cell = detail::trim(rec[k]);
        for (size_t l = 1; l < lv.size(); ++l) d.X(i, at++) = (cell == lv[l]) ? 1.0 : 0.0;
        continue;
      }
      if (!detail::parse_double(rec[k], v)) {
        throw IoError("unparseable value '" + rec[k] + "' in column '" + header[k] +
                          "' (data row " + std::to_string(i + 1) + ")",
                      path);
      }
      d.X(i, at++) = v;
    }
  }
  for (long k = 0; k < cols; ++k) {
    if (n > 0 && (d.X.col(k).array() == d.X(0, k)).all()) {
      d.warnings.push_back("constant column: " + d.names[static_cast<size_t>(k)]);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Number formatting

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON has no infinities; they are written as the strings "inf" / "-inf".
inline json real_json(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// Writes X and Y as a CSV with the response first.
inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path, path);
  out << csv_quote(d.response);
  for (const auto& nm : d.names) out << ',' << csv_quote(nm);
  out << '\n';
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    out << format_real(d.Y[i]);
    for (Eigen::Index k = 0; k < d.X.cols(); ++k) out << ',' << format_real(d.X(i, k));
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path, path);
}

// ---------------------------------------------------------------------------
// Config echo and reports

inline json config_json(const InferenceConfig& c) {
  json j;
  j["tau"] = c.tau;
  j["alpha"] = c.alpha;
  j["lambda_scale"] = c.lambda_scale;
  j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr);
  j["kernel"] = std::string(to_string(c.kernel));
  j["bandwidth_mode"] = std::string(to_string(c.bandwidth_mode));
  j["h_select"] = c.h_select ? json(*c.h_select) : json(nullptr);
  j["h_infer"] = c.h_infer ? json(*c.h_infer) : json(nullptr);
  j["delta2"] = c.delta2;
  j["seed"] = c.seed;
  j["split_fraction"] = c.split_fraction;
  j["standardize"] = c.standardize;
  j["intercept"] = c.intercept;
  j["naive_randomize"] = c.naive_randomize;
  j["check_monotone"] = c.check_monotone;
  j["solver"] = {{"max_iter", c.solver.max_iter},
                 {"tol_kkt", c.solver.tol_kkt},
                 {"tol_refit", c.solver.tol_refit},
                 {"tol_zero", c.solver.tol_zero}};
  j["invert"] = {{"tol_invert", c.invert.tol_invert},
                 {"initial_halfwidth", c.invert.initial_halfwidth},
                 {"max_halfwidth", c.invert.max_halfwidth}};
  return j;
}

inline const std::vector<std::string>& report_csv_header() {
  static const std::vector<std::string> h = {
      "method", "variable", "column", "estimate", "lcb", "ucb", "pvalue", "sigma",
      "pivot_at_lcb", "pivot_at_ucb", "quadrature_error", "flags"};
  return h;
}

inline std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

inline void write_report_rows(std::ostream& out, const InferenceReport& r) {
  for (const auto& row : r.rows) {
    out << to_string(r.method) << ',' << csv_quote(row.name) << ',' << row.column << ','
        << format_real(row.estimate) << ',' << format_real(row.lcb) << ','
        << format_real(row.ucb) << ',' << format_real(row.pvalue) << ','
        << format_real(row.sigma) << ',' << format_real(row.pivot_at_lcb) << ','
        << format_real(row.pivot_at_ucb) << ',' << format_real(row.quadrature_error) << ','
        << csv_quote(join(row.flags, ';')) << '\n';
  }
}

inline void write_report_csv(const std::vector<InferenceReport>& reports, const json& echo,
                             const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path, path);
  out << "# sqsi " << kVersion << '\n';
  out << "# config " << echo.dump() << '\n';
  out << join(report_csv_header(), ',') << '\n';
  for (const auto& r : reports) write_report_rows(out, r);
  if (!out) throw IoError("write failed: " + path, path);
}

inline json report_json(const InferenceReport& r) {
  json j;
  j["method"] = std::string(to_string(r.method));
  j["n"] = r.n;
  j["p"] = r.p;
  j["lambda"] = real_json(r.lambda);
  j["h_select"] = real_json(r.h_select);
  j["h_infer"] = real_json(r.h_infer);
  j["config"] = config_json(r.config);
  json sel = json::array();
  for (const auto& row : r.rows) sel.push_back(row.name);
  j["selected"] = sel;
  json rows = json::array();
  for (const auto& row : r.rows) {
    json o;
    o["variable"] = row.name;
    o["column"] = row.column;
    o["estimate"] = real_json(row.estimate);
    o["lcb"] = real_json(row.lcb);
    o["ucb"] = real_json(row.ucb);
    o["pvalue"] = real_json(row.pvalue);
    o["sigma"] = real_json(row.sigma);
    o["pivot_at_lcb"] = real_json(row.pivot_at_lcb);
    o["pivot_at_ucb"] = real_json(row.pivot_at_ucb);
    o["quadrature_error"] = real_json(row.quadrature_error);
    o["flags"] = row.flags;
    rows.push_back(std::move(o));
  }
  j["rows"] = rows;
  j["flags"] = r.flags;
  j["kkt_residual"] = real_json(r.kkt_residual);
  j["max_identity_residual"] = real_json(r.max_identity_residual);
  return j;
}

inline void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path, path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path, path);
}

}  // namespace sqsi
