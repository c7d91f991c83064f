#pragma once

#include <cstdint>
#include <string>

#include "nsde/dataset.hpp"

namespace nsde {

struct MassSpringParams {
  double m = 1.0;
  double b = 0.5;
  double k = 1.0;
};

// One forward-Euler step of the damped oscillator x'' = (-b x' - k x) / m.
Vec mass_spring_step(const Vec& x, double dt, const MassSpringParams& p = {});

struct CartpoleParams {
  double m_cart = 1.0;
  double m_pole = 0.1;
  double length = 0.5;   // pivot to pole center of mass
  double gravity = 9.81;
  double u_max = 10.0;   // force saturation, newtons
};

// One forward-Euler step of the frictionless cart-pole. State is
// [position, velocity, angle, angular velocity] with angle 0 upright,
// measured from the upward vertical and stored unwrapped.
Vec cartpole_step(const Vec& x, double u, double dt, const CartpoleParams& p = {});

// Continuous-time accelerations used by the Euler steps; exposed for
// higher-order integration in tests.
Vec mass_spring_deriv(const Vec& x, const MassSpringParams& p = {});
Vec cartpole_deriv(const Vec& x, double u, const CartpoleParams& p = {});

double cartpole_energy(const Vec& x, const CartpoleParams& p = {});

enum class Policy { kNone, kUniformRandom, kScripted };
Policy parse_policy(const std::string& name);
std::string policy_name(Policy p);

struct DataGenConfig {
  std::string system = "mass_spring";  // or "cartpole"
  int n_traj = 5;
  double duration = 5.0;   // seconds per trajectory
  double dt = 0.01;
  Vec init_lo, init_hi;    // per-dimension initial-state box
  Vec noise_std;           // per-dimension observation noise
  Policy policy = Policy::kNone;
  double control_scale = 10.0;  // uniform_random draws from [-scale, scale]
  uint64_t seed = 0;

  MassSpringParams mass_spring;
  CartpoleParams cartpole;

  void validate() const;
};

// Simulates the requested system with Euler at dt, applies the policy, and
// adds Gaussian observation noise to the recorded states. Controls are
// recorded clean.
Dataset generate_dataset(const DataGenConfig& cfg);

// Planar point clouds inside [-0.2, 0.2]^2 stored as zero-control
// trajectories: a circle or a figure eight traced at uniform parameter
// spacing with Gaussian jitter.
Dataset fig2_point_clouds(const std::string& shape, int n_points, double jitter_std,
                          uint64_t seed);

}  // namespace nsde
