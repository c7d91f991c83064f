#pragma once

#include <charconv>
#include <fstream>
#include <string>

#include "nsde/common.hpp"

namespace nsde {

// Shortest decimal form that round-trips the exact double, so repeated runs
// emit byte-identical files.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : f_(path, std::ios::binary) {
    if (!f_) throw config_error("cannot open for writing: " + path);
  }

  CsvWriter& field(const std::string& s) {
    sep();
    f_ << s;
    return *this;
  }
  CsvWriter& field(double v) { return field(format_double(v)); }
  CsvWriter& field(int v) { return field(std::to_string(v)); }
  CsvWriter& field(long v) { return field(std::to_string(v)); }
  CsvWriter& field(size_t v) { return field(std::to_string(v)); }
  void endrow() {
    f_ << '\n';
    first_ = true;
  }

 private:
  void sep() {
    if (!first_) f_ << ',';
    first_ = false;
  }
  std::ofstream f_;
  bool first_ = true;
};

}  // namespace nsde
