#pragma once

#include "nsde/common.hpp"

namespace nsde::testing {

// Classic fourth-order Runge-Kutta step for a time-invariant vector field.
template <typename F>
Vec rk4_step(const F& f, const Vec& x, double dt) {
  size_t n = x.size();
  Vec k1 = f(x);
  Vec tmp(n);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  Vec k2 = f(tmp);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  Vec k3 = f(tmp);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
  Vec k4 = f(tmp);
  Vec out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

}  // namespace nsde::testing
