#include "nsde/params.hpp"

#include <fstream>

#include <json.hpp>

namespace nsde {

size_t ParamVector::add(const std::string& name, std::vector<int> shape) {
  if (has(name)) throw config_error("duplicate parameter segment: " + name);
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw config_error("negative dimension in segment " + name);
    n *= static_cast<size_t>(d);
  }
  ParamSegment seg{name, std::move(shape), values_.size(), n};
  values_.resize(values_.size() + n, 0.0);
  segments_.push_back(std::move(seg));
  return segments_.back().offset;
}

bool ParamVector::has(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return true;
  return false;
}

const ParamSegment& ParamVector::segment(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw config_error("unknown parameter segment: " + name);
}

std::span<double> ParamVector::view(const std::string& name) {
  const ParamSegment& s = segment(name);
  return {values_.data() + s.offset, s.size};
}

std::span<const double> ParamVector::view(const std::string& name) const {
  const ParamSegment& s = segment(name);
  return {values_.data() + s.offset, s.size};
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  out.segments_ = segments_;
  out.values_.assign(values_.size(), 0.0);
  return out;
}

std::string ParamVector::to_json() const {
  nlohmann::json doc;
  doc["format"] = "nsde-params-v1";
  auto& segs = doc["segments"] = nlohmann::json::array();
  for (const auto& s : segments_) {
    nlohmann::json j;
    j["name"] = s.name;
    j["shape"] = s.shape;
    j["values"] = std::vector<double>(values_.begin() + s.offset,
                                      values_.begin() + s.offset + s.size);
    segs.push_back(std::move(j));
  }
  return doc.dump(1);
}

ParamVector ParamVector::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("parameter file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "nsde-params-v1")
    throw config_error("parameter file has unknown format");
  ParamVector out;
  for (const auto& j : doc.at("segments")) {
    std::vector<int> shape = j.at("shape").get<std::vector<int>>();
    size_t off = out.add(j.at("name").get<std::string>(), shape);
    std::vector<double> vals = j.at("values").get<std::vector<double>>();
    const ParamSegment& seg = out.segments_.back();
    if (vals.size() != seg.size)
      throw config_error("segment " + seg.name + " value count does not match shape");
    std::copy(vals.begin(), vals.end(), out.values_.begin() + off);
  }
  return out;
}

void ParamVector::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open for writing: " + path);
  f << to_json() << '\n';
}

ParamVector ParamVector::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open parameter file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

}  // namespace nsde
