#include "nsde/dataset.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace nsde {

size_t Dataset::total_points() const {
  size_t n = 0;
  for (const auto& tr : trajectories) n += tr.size();
  return n;
}

void Dataset::validate() const {
  if (dt <= 0.0) throw config_error("dataset: dt must be positive");
  if (state_dim < 1) throw config_error("dataset: state_dim must be >= 1");
  if (control_dim < 0) throw config_error("dataset: control_dim must be >= 0");
  for (size_t k = 0; k < trajectories.size(); ++k) {
    const Trajectory& tr = trajectories[k];
    std::string where = "dataset trajectory " + std::to_string(k);
    if (tr.x.size() != tr.t.size() || tr.u.size() != tr.t.size())
      throw config_error(where + ": t/x/u length mismatch");
    for (const Vec& row : tr.x)
      if (row.size() != static_cast<size_t>(state_dim))
        throw config_error(where + ": state row width mismatch");
    for (const Vec& row : tr.u)
      if (row.size() != static_cast<size_t>(control_dim))
        throw config_error(where + ": control row width mismatch");
    for (size_t i = 1; i < tr.t.size(); ++i)
      if (std::abs(tr.t[i] - tr.t[i - 1] - dt) > 1e-9)
        throw config_error(where + ": non-uniform timestamps");
  }
}

std::string Dataset::to_json() const {
  nlohmann::json doc;
  doc["dt"] = dt;
  doc["state_dim"] = state_dim;
  doc["control_dim"] = control_dim;
  auto& trs = doc["trajectories"] = nlohmann::json::array();
  for (const auto& tr : trajectories) {
    nlohmann::json j;
    j["t"] = tr.t;
    j["x"] = tr.x;
    j["u"] = tr.u;
    trs.push_back(std::move(j));
  }
  return doc.dump(1);
}

Dataset Dataset::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("dataset is not valid JSON: ") + e.what());
  }
  Dataset out;
  try {
    out.dt = doc.at("dt").get<double>();
    out.state_dim = doc.at("state_dim").get<int>();
    out.control_dim = doc.at("control_dim").get<int>();
    for (const auto& j : doc.at("trajectories")) {
      Trajectory tr;
      tr.t = j.at("t").get<Vec>();
      tr.x = j.at("x").get<std::vector<Vec>>();
      tr.u = j.at("u").get<std::vector<Vec>>();
      out.trajectories.push_back(std::move(tr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("dataset fields malformed: ") + e.what());
  }
  out.validate();
  return out;
}

void Dataset::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open for writing: " + path);
  f << to_json() << '\n';
}

Dataset Dataset::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open dataset: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

}  // namespace nsde
