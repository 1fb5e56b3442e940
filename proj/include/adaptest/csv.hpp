#pragma once

// Minimal RFC 4180 reading and writing: comma separated, double-quote escaping,
// LF or CRLF line ends. Quoted fields may not span lines.

#include <adaptest/common.hpp>

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace adaptest::csv {

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << escape(fields[i]);
  }
  os << '\n';
}

inline std::vector<std::string> split_row(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
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
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

struct Row {
  std::size_t line = 0;  // 1-based, header is line 1
  std::vector<std::string> fields;
};

/// Reads a table whose header must equal `expected_header` exactly.
inline std::vector<Row> read_table(std::istream& is, const std::vector<std::string>& expected_header,
                                   const std::string& what) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(what + ": missing header");
  if (split_row(line) != expected_header) throw ParseError(what + ": header does not match the schema");
  std::vector<Row> rows;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    Row r;
    r.line = n;
    try {
      r.fields = split_row(line);
    } catch (const ParseError& e) {
      throw ParseError(what + " line " + std::to_string(n) + ": " + e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace adaptest::csv
