#pragma once

#include <span>
#include <string>
#include <vector>

#include "nsde/common.hpp"

namespace nsde {

struct ParamSegment {
  std::string name;
  std::vector<int> shape;
  size_t offset = 0;
  size_t size = 0;
};

// Flat parameter storage carved into named, contiguous, non-overlapping
// segments. Segments are append-only so the layout is fixed once built.
class ParamVector {
 public:
  // Appends a zero-initialized segment and returns its offset.
  size_t add(const std::string& name, std::vector<int> shape);

  size_t size() const { return values_.size(); }
  bool has(const std::string& name) const;
  const ParamSegment& segment(const std::string& name) const;
  const std::vector<ParamSegment>& segments() const { return segments_; }

  std::span<double> view(const std::string& name);
  std::span<const double> view(const std::string& name) const;
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  Vec& values() { return values_; }
  const Vec& values() const { return values_; }

  // Same layout, all values zero (optimizer moment buffers).
  ParamVector zeros_like() const;

  std::string to_json() const;
  static ParamVector from_json(const std::string& text);
  void save(const std::string& path) const;
  static ParamVector load(const std::string& path);

 private:
  Vec values_;
  std::vector<ParamSegment> segments_;
};

}  // namespace nsde
