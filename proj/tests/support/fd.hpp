#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "nsde/common.hpp"

namespace nsde::testing {

// Central finite differences of a scalar function over a flat vector.
inline Vec fd_grad(const std::function<double(std::span<const double>)>& f,
                   std::span<const double> x, double h = 1e-5) {
  Vec xs(x.begin(), x.end());
  Vec g(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    double orig = xs[i];
    xs[i] = orig + h;
    double fp = f(xs);
    xs[i] = orig - h;
    double fm = f(xs);
    xs[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Largest relative error between two gradients, ignoring entries where the
// reference is below the floor (relative error is meaningless there).
inline double max_rel_err(std::span<const double> got, std::span<const double> want,
                          double floor = 1e-8) {
  double worst = 0.0;
  for (size_t i = 0; i < got.size(); ++i) {
    double denom = std::abs(want[i]);
    if (denom < floor) {
      worst = std::max(worst, std::abs(got[i] - want[i]));
    } else {
      worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
  }
  return worst;
}

}  // namespace nsde::testing
