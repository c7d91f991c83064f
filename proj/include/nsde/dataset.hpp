#pragma once

#include <string>
#include <vector>

#include "nsde/common.hpp"

namespace nsde {

// One recorded rollout. u has one row per sample (the last row is unused by
// training segments); rows are empty when control_dim == 0.
struct Trajectory {
  Vec t;
  std::vector<Vec> x;
  std::vector<Vec> u;

  size_t size() const { return x.size(); }
};

struct Dataset {
  double dt = 0.0;
  int state_dim = 0;
  int control_dim = 0;
  std::vector<Trajectory> trajectories;

  size_t total_points() const;
  void validate() const;

  std::string to_json() const;
  static Dataset from_json(const std::string& text);
  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

}  // namespace nsde
