#ifndef PVN_CSV_HPP_
#define PVN_CSV_HPP_

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pvn/error.hpp"

namespace pvn {

/// Shortest-round-trip-safe formatting (%.17g) so files are reproducible and lossless.
inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : os_(path, std::ios::binary) {
    if (!os_) throw MissingInputError("cannot write " + path);
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

 private:
  std::ofstream os_;
};

/// Reads a CSV with a header row into string cells. No quoting support: the
/// files this project writes never contain commas inside fields.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("file not found: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      if (header) *header = cells;
      first = false;
    } else {
      rows.push_back(std::move(cells));
    }
  }
  return rows;
}

}  // namespace pvn

#endif  // PVN_CSV_HPP_
