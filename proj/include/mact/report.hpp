#pragma once

/**
 * @file
 * @brief Experiment reports: tabular records, summary, checks, and their
 * CSV / JSON serialisation.
 *
 * Layout on disk: <out>/<id>/<table>.csv plus <out>/<id>/summary.json.
 * Each CSV starts with one '#' comment line documenting the columns, then a
 * header line; numbers use the shortest round-trip decimal form, so reading
 * a file back reproduces the in-memory doubles exactly.
 */

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mact/errors.hpp"

namespace mact {

using Json = nlohmann::ordered_json;
using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::string name;
  std::string description;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::invalid_argument("Table::add_row: width mismatch in " + name);
    rows.push_back(std::move(row));
  }

  std::size_t column_index(std::string_view col) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == col) return i;
    }
    throw std::out_of_range("Table " + name + ": no column " + std::string(col));
  }

  /// Numeric column; integer cells are widened.
  std::vector<double> numbers(std::string_view col) const {
    const std::size_t c = column_index(col);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      if (const auto* d = std::get_if<double>(&r[c])) {
        out.push_back(*d);
      } else if (const auto* i = std::get_if<std::int64_t>(&r[c])) {
        out.push_back(static_cast<double>(*i));
      } else {
        throw std::invalid_argument("Table " + name + ": column " + std::string(col) + " is not numeric");
      }
    }
    return out;
  }

  std::vector<std::string> strings(std::string_view col) const {
    const std::size_t c = column_index(col);
    std::vector<std::string> out;
    for (const auto& r : rows) {
      if (const auto* s = std::get_if<std::string>(&r[c])) {
        out.push_back(*s);
      } else {
        throw std::invalid_argument("Table " + name + ": column " + std::string(col) + " is not text");
      }
    }
    return out;
  }
};

struct Check {
  std::string name;
  bool passed{false};
  std::string detail;
};

struct Provenance {
  std::string config_hash;
  std::uint64_t seed{0};
};

struct ExperimentReport {
  std::string id;
  std::vector<Table> tables;
  Json summary = Json::object();
  std::vector<Check> checks;
  Provenance provenance;

  const Table& table(std::string_view name) const {
    for (const auto& t : tables) {
      if (t.name == name) return t;
    }
    throw std::out_of_range("report " + id + ": no table " + std::string(name));
  }

  bool all_passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }
};

/// 64-bit FNV-1a as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") != std::string::npos) {
    throw std::invalid_argument("format_cell: text cells must not contain ',', '\"' or newlines: " + s);
  }
  return s;
}

inline std::string to_csv(const Table& t) {
  std::string out = "# " + t.description + " | columns: ";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_cell(r[i]);
    out += '\n';
  }
  return out;
}

namespace detail {

inline Cell parse_cell(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  const bool looks_integral = !s.empty() && s.find_first_of(".eE") == std::string_view::npos;
  if (looks_integral) {
    std::int64_t i = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), i);
    if (r.ec == std::errc{} && r.ptr == s.data() + s.size()) return i;
  }
  double d = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), d);
  if (r.ec == std::errc{} && r.ptr == s.data() + s.size()) return d;
  return std::string(s);
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Parse the CSV written by to_csv. Integer-looking cells come back as integers.
inline Table parse_csv(std::string_view text, std::string name) {
  Table t;
  t.name = std::move(name);
  std::size_t pos = 0;
  bool header_done = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto bar = line.find(" | columns: ");
      t.description = std::string(line.substr(2, bar == std::string_view::npos ? std::string_view::npos : bar - 2));
      continue;
    }
    const auto fields = detail::split(line);
    if (!header_done) {
      for (auto f : fields) t.columns.emplace_back(f);
      header_done = true;
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw IoError("parse_csv: " + t.name + ": row width " + std::to_string(fields.size()) + " != " +
                    std::to_string(t.columns.size()));
    }
    std::vector<Cell> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(detail::parse_cell(f));
    t.rows.push_back(std::move(row));
  }
  if (!header_done) throw IoError("parse_csv: " + t.name + ": missing header line");
  return t;
}

inline Json summary_document(const ExperimentReport& r) {
  Json doc = Json::object();
  doc["experiment"] = r.id;
  doc["provenance"] = {{"config_hash", r.provenance.config_hash}, {"seed", r.provenance.seed}};
  doc["summary"] = r.summary;
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  doc["checks"] = checks;
  Json tables = Json::array();
  for (const auto& t : r.tables) tables.push_back(t.name + ".csv");
  doc["tables"] = tables;
  return doc;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Write <out>/<id>/*.csv and summary.json; returns the experiment directory.
inline std::filesystem::path emit(const ExperimentReport& r, const std::filesystem::path& out_dir) {
  const auto dir = out_dir / r.id;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& t : r.tables) detail::write_file(dir / (t.name + ".csv"), to_csv(t));
  detail::write_file(dir / "summary.json", summary_document(r).dump(2) + "\n");
  return dir;
}

/// Read back a directory written by emit().
inline ExperimentReport load_report(const std::filesystem::path& dir) {
  ExperimentReport r;
  Json doc;
  try {
    doc = Json::parse(detail::read_file(dir / "summary.json"));
  } catch (const Json::parse_error& e) {
    throw IoError((dir / "summary.json").string() + ": " + e.what());
  }
  r.id = doc.at("experiment").get<std::string>();
  r.provenance.config_hash = doc.at("provenance").at("config_hash").get<std::string>();
  r.provenance.seed = doc.at("provenance").at("seed").get<std::uint64_t>();
  r.summary = doc.at("summary");
  for (const auto& c : doc.at("checks")) {
    r.checks.push_back({c.at("name").get<std::string>(), c.at("passed").get<bool>(), c.at("detail").get<std::string>()});
  }
  for (const auto& f : doc.at("tables")) {
    const auto file = f.get<std::string>();
    const auto stem = std::filesystem::path(file).stem().string();
    r.tables.push_back(parse_csv(detail::read_file(dir / file), stem));
  }
  return r;
}

/**
 * @brief Compare two summaries key by key; numbers must agree to `tol`
 * (absolute, relative above 1). Returns the mismatching keys as "a.b.c".
 */
inline std::vector<std::string> summary_mismatches(const Json& expected, const Json& actual, double tol = 1e-12,
                                                   const std::string& prefix = "") {
  std::vector<std::string> bad;
  if (expected.is_object()) {
    if (!actual.is_object()) return {prefix.empty() ? "<root>" : prefix};
    for (auto it = expected.begin(); it != expected.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (!actual.contains(it.key())) {
        bad.push_back(key);
        continue;
      }
      auto sub = summary_mismatches(it.value(), actual.at(it.key()), tol, key);
      bad.insert(bad.end(), sub.begin(), sub.end());
    }
    return bad;
  }
  if (expected.is_array()) {
    if (!actual.is_array() || actual.size() != expected.size()) return {prefix};
    for (std::size_t i = 0; i < expected.size(); ++i) {
      auto sub = summary_mismatches(expected[i], actual[i], tol, prefix + "[" + std::to_string(i) + "]");
      bad.insert(bad.end(), sub.begin(), sub.end());
    }
    return bad;
  }
  if (expected.is_number()) {
    if (!actual.is_number()) return {prefix};
    const double a = expected.get<double>();
    const double b = actual.get<double>();
    if (std::isnan(a) && std::isnan(b)) return {};
    if (!(std::abs(a - b) <= tol * std::max(1.0, std::abs(a)))) return {prefix};
    return {};
  }
  if (expected != actual) return {prefix};
  return {};
}

}  // namespace mact
