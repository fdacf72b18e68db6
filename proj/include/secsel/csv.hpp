#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "secsel/common.hpp"

namespace secsel {

// Minimal CSV support: comma-separated fields with optional double quotes.
// Enough for the trip/AMP inputs and the metrics outputs; not a general
// RFC 4180 implementation.
namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

struct Row {
  std::size_t line_no = 0;  // 1-based line in the file
  std::vector<std::string> fields;
};

inline std::vector<Row> read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open CSV file '" + path + "'");
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    rows.push_back({line_no, split_line(line)});
  }
  return rows;
}

inline double to_double(const std::string& s, const std::string& path, std::size_t line_no,
                        const char* what) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) {
    throw parse_error(path + ":" + std::to_string(line_no) + ": '" + s + "' is not a valid " + what);
  }
  return v;
}

inline bool is_numeric(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  return ec == std::errc{} && ptr == end;
}

}  // namespace csv
}  // namespace secsel
