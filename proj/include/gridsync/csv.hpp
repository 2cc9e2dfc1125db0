#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace gridsync {

// Full-precision decimal text; round-trips to the identical double.
inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Column-oriented trace store. Time is kept apart from the data channels so
// emitters always lead with it.
struct Recording {
  std::vector<std::string> names;               // data channels, time excluded
  std::vector<double> time;
  std::vector<std::vector<double>> columns;     // parallel to names

  std::size_t rows() const { return time.size(); }
};

inline void emit_csv(const Recording& rec, std::ostream& os) {
  if (rec.columns.size() != rec.names.size()) {
    throw config_error("emit_csv: recording names and columns disagree");
  }
  for (const auto& col : rec.columns) {
    if (col.size() != rec.time.size()) {
      throw config_error("emit_csv: column length does not match the time axis");
    }
  }
  os << "time_s";
  for (const auto& n : rec.names) os << ',' << n;
  os << '\n';
  for (std::size_t r = 0; r < rec.time.size(); ++r) {
    os << format_full(rec.time[r]);
    for (const auto& col : rec.columns) os << ',' << format_full(col[r]);
    os << '\n';
  }
}

inline void emit_csv(const Recording& rec, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("emit_csv: cannot open " + path);
  emit_csv(rec, os);
  os.flush();
  if (!os) throw io_error("emit_csv: write failed for " + path);
}

// Reads back a file produced by emit_csv. Exists mostly so tests can prove the
// emitted text reproduces the in-memory doubles bit for bit.
inline Recording parse_csv(std::istream& is) {
  Recording rec;
  std::string line;
  if (!std::getline(is, line)) throw io_error("parse_csv: empty input");
  std::stringstream header(line);
  std::string cell;
  bool first = true;
  while (std::getline(header, cell, ',')) {
    if (first) {
      if (cell != "time_s") throw io_error("parse_csv: first column must be time_s");
      first = false;
    } else {
      rec.names.push_back(cell);
    }
  }
  if (first) throw io_error("parse_csv: header has no columns");
  rec.columns.resize(rec.names.size());
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::size_t idx = 0;
    while (std::getline(row, cell, ',')) {
      const char* begin = cell.c_str();
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin || *end != '\0') {
        throw io_error("parse_csv: bad number at line " + std::to_string(line_no));
      }
      if (idx == 0) {
        rec.time.push_back(v);
      } else if (idx <= rec.columns.size()) {
        rec.columns[idx - 1].push_back(v);
      } else {
        throw io_error("parse_csv: too many cells at line " + std::to_string(line_no));
      }
      ++idx;
    }
    if (idx != rec.columns.size() + 1) {
      throw io_error("parse_csv: wrong cell count at line " + std::to_string(line_no));
    }
  }
  return rec;
}

inline Recording parse_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("parse_csv: cannot open " + path);
  return parse_csv(is);
}

}  // namespace gridsync
