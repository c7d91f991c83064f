#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsde {

using Vec = std::vector<double>;

// Invalid dimensions, selectors, or run configuration.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf appeared while integrating; carries the step at which it happened.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace nsde
