#pragma once
// Small CSV writer with pinned number formatting. All report files go through
// this so a given seed always produces byte-identical output.

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace doploc {

// Shortest round-trippable decimal form; fixed across platforms for doubles
// produced by identical arithmetic.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path);
  }

  void header(const std::string& line) { out_ << line << "\n"; }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << cells[i];
    }
    out_ << "\n";
  }

  // Convenience: all-numeric row.
  void row_numeric(const std::vector<double>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << format_number(cells[i]);
    }
    out_ << "\n";
  }

  void close() { out_.close(); }

 private:
  std::ofstream out_;
};

}  // namespace doploc
