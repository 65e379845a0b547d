#pragma once

// Method-comparison tables (text and CSV). Numbers keep the precision they
// were written with, so "85.30" renders as 85.30 and "94" as 94.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace railguard {

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ReportParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A decimal number plus the count of fractional digits it was written with.
struct DecimalValue {
  double value = 0.0;
  int decimals = 0;

  static DecimalValue parse(std::string_view text) {
    std::string_view s = text;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '%' || s.back() == '\r')) {
      s.remove_suffix(1);
    }
    if (s.empty()) throw ReportParseError("empty numeric field");
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ReportParseError("not a number: \"" + std::string(text) + "\"");
    }
    const auto dot = s.find('.');
    const int decimals = dot == std::string_view::npos ? 0 : static_cast<int>(s.size() - dot - 1);
    return {v, decimals};
  }

  std::string str() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(decimals);
    os << value;
    return os.str();
  }
};

enum class TableKind { track_detection, object_detection };

struct MethodRow {
  std::string method;
  DecimalValue accuracy;          // percent
  DecimalValue precision_recall;  // percent
  DecimalValue third;             // seconds (track_detection) or F1 percent (object_detection)
};

inline std::string table_title(TableKind kind) {
  return kind == TableKind::track_detection ? "Track detection methods" : "Object detection methods";
}

inline std::vector<std::string> table_columns(TableKind kind) {
  if (kind == TableKind::track_detection) {
    return {"Method", "Accuracy", "Precision-Recall", "Computational Time (s)"};
  }
  return {"Method", "Accuracy", "Precision-Recall", "F1-Score"};
}

inline void validate_rows(const std::vector<MethodRow>& rows, TableKind kind) {
  if (rows.empty()) throw std::invalid_argument("comparison table needs at least one row");
  auto percent = [](const DecimalValue& v, const std::string& what, const std::string& method) {
    if (!(v.value >= 0.0 && v.value <= 100.0)) {
      throw RangeError(method + ": " + what + " " + v.str() + " is outside [0,100]");
    }
  };
  for (const auto& r : rows) {
    percent(r.accuracy, "accuracy", r.method);
    percent(r.precision_recall, "precision-recall", r.method);
    if (kind == TableKind::object_detection) {
      percent(r.third, "F1-score", r.method);
    } else if (!(r.third.value >= 0.0)) {
      throw RangeError(r.method + ": computational time " + r.third.str() + " is negative");
    }
  }
}

/// Fixed-column text table with a title line. Percent columns carry a '%'.
inline std::string render_comparison_table(const std::vector<MethodRow>& rows, TableKind kind) {
  validate_rows(rows, kind);
  const auto header = table_columns(kind);
  std::vector<std::vector<std::string>> cells;
  cells.push_back(header);
  for (const auto& r : rows) {
    std::string third = r.third.str();
    if (kind == TableKind::object_detection) third += "%";
    cells.push_back({r.method, r.accuracy.str() + "%", r.precision_recall.str() + "%", third});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  auto line = [&](const std::vector<std::string>& row) {
    std::string s;
    for (std::size_t c = 0; c < row.size(); ++c) {
      s += row[c];
      if (c + 1 < row.size()) s += std::string(width[c] - row[c].size() + 2, ' ');
    }
    return s + "\n";
  };

  std::string out = table_title(kind) + "\n";
  out += line(cells[0]);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  out += line(rule);
  for (std::size_t i = 1; i < cells.size(); ++i) out += line(cells[i]);
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::string render_comparison_csv(const std::vector<MethodRow>& rows, TableKind kind) {
  validate_rows(rows, kind);
  const auto header = table_columns(kind);
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + csv_field(header[c]);
  out += "\n";
  for (const auto& r : rows) {
    out += csv_field(r.method) + "," + r.accuracy.str() + "," + r.precision_recall.str() + "," +
           r.third.str() + "\n";
  }
  return out;
}

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw ReportParseError("unterminated quote in CSV line");
  out.push_back(std::move(cur));
  return out;
}

/// Reads rows written by render_comparison_csv (a header line, then 4 fields per row).
inline std::vector<MethodRow> read_method_rows(std::istream& in) {
  std::vector<MethodRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw ReportParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(f.size()));
    }
    if (!header_seen) {
      header_seen = true;
      if (f[0] == "Method") continue;
    }
    try {
      rows.push_back({f[0], DecimalValue::parse(f[1]), DecimalValue::parse(f[2]), DecimalValue::parse(f[3])});
    } catch (const ReportParseError& e) {
      throw ReportParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace railguard
