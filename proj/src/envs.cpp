#include "nsde/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nsde/rng.hpp"

namespace nsde {

Vec mass_spring_deriv(const Vec& x, const MassSpringParams& p) {
  if (x.size() != 2) throw config_error("mass-spring state must have 2 dimensions");
  return {x[1], (-p.b * x[1] - p.k * x[0]) / p.m};
}

Vec mass_spring_step(const Vec& x, double dt, const MassSpringParams& p) {
  Vec f = mass_spring_deriv(x, p);
  return {x[0] + f[0] * dt, x[1] + f[1] * dt};
}

// Pole modeled as a uniform rod pivoting at the cart, center of mass at
// distance `length` from the pivot; angle measured from the upward vertical.
Vec cartpole_deriv(const Vec& x, double u, const CartpoleParams& p) {
  if (x.size() != 4) throw config_error("cartpole state must have 4 dimensions");
  double force = std::clamp(u, -p.u_max, p.u_max);
  double s = std::sin(x[2]), c = std::cos(x[2]);
  double total = p.m_cart + p.m_pole;
  double temp = (force + p.m_pole * p.length * x[3] * x[3] * s) / total;
  double th_acc = (p.gravity * s - c * temp) /
                  (p.length * (4.0 / 3.0 - p.m_pole * c * c / total));
  double x_acc = temp - p.m_pole * p.length * th_acc * c / total;
  return {x[1], x_acc, x[3], th_acc};
}

Vec cartpole_step(const Vec& x, double u, double dt, const CartpoleParams& p) {
  Vec f = cartpole_deriv(x, u, p);
  return {x[0] + f[0] * dt, x[1] + f[1] * dt, x[2] + f[2] * dt, x[3] + f[3] * dt};
}

double cartpole_energy(const Vec& x, const CartpoleParams& p) {
  double c = std::cos(x[2]);
  double v2 = x[1] * x[1] + 2.0 * p.length * x[3] * x[1] * c +
              p.length * p.length * x[3] * x[3];
  double inertia = p.m_pole * p.length * p.length / 3.0;
  return 0.5 * p.m_cart * x[1] * x[1] + 0.5 * p.m_pole * v2 +
         0.5 * inertia * x[3] * x[3] + p.m_pole * p.gravity * p.length * c;
}

Policy parse_policy(const std::string& name) {
  if (name == "none") return Policy::kNone;
  if (name == "uniform_random") return Policy::kUniformRandom;
  if (name == "scripted") return Policy::kScripted;
  throw config_error("unknown policy: " + name);
}

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::kNone: return "none";
    case Policy::kUniformRandom: return "uniform_random";
    case Policy::kScripted: return "scripted";
  }
  throw config_error("unknown policy value");
}

namespace {

int system_state_dim(const std::string& system) {
  if (system == "mass_spring") return 2;
  if (system == "cartpole") return 4;
  throw config_error("unknown system: " + system);
}

// Energy-shaping swingup with weak cart centering; used only to make the
// recorded trajectories explore the swingup regime.
double scripted_control(const Vec& x, const CartpoleParams& p) {
  double c = std::cos(x[2]);
  double inertia = 4.0 / 3.0 * p.m_pole * p.length * p.length;
  double e_pole = 0.5 * inertia * x[3] * x[3] + p.m_pole * p.gravity * p.length * c;
  double e_top = p.m_pole * p.gravity * p.length;
  double u = 8.0 * (e_pole - e_top) * x[3] * c - 0.4 * x[0] - 0.6 * x[1];
  return std::clamp(u, -p.u_max, p.u_max);
}

}  // namespace

void DataGenConfig::validate() const {
  int dim = system_state_dim(system);
  if (n_traj < 0) throw config_error("n_traj must be nonnegative");
  if (dt <= 0.0) throw config_error("dt must be positive");
  if (duration < dt) throw config_error("duration must cover at least one step");
  if (static_cast<int>(init_lo.size()) != dim || static_cast<int>(init_hi.size()) != dim)
    throw config_error("initial-state box must match the state dimension");
  for (int i = 0; i < dim; ++i)
    if (init_lo[i] > init_hi[i]) throw config_error("initial-state box is inverted");
  if (!noise_std.empty() && static_cast<int>(noise_std.size()) != dim)
    throw config_error("noise_std must match the state dimension");
  for (double s : noise_std)
    if (s < 0.0) throw config_error("noise_std must be nonnegative");
  if (system == "mass_spring" && policy != Policy::kNone)
    throw config_error("mass_spring has no control input; use policy none");
}

Dataset generate_dataset(const DataGenConfig& cfg) {
  cfg.validate();
  int dim = system_state_dim(cfg.system);
  bool controlled = cfg.system == "cartpole";
  int n_steps = static_cast<int>(std::lround(cfg.duration / cfg.dt));

  Dataset data;
  data.dt = cfg.dt;
  data.state_dim = dim;
  data.control_dim = controlled ? 1 : 0;

  Vec noise(dim, 0.0);
  if (!cfg.noise_std.empty()) noise = cfg.noise_std;

  for (int k = 0; k < cfg.n_traj; ++k) {
    NormalStream rng(mix_seed(cfg.seed, k));
    Vec x(dim);
    for (int i = 0; i < dim; ++i) x[i] = rng.uniform(cfg.init_lo[i], cfg.init_hi[i]);

    Trajectory traj;
    for (int i = 0; i <= n_steps; ++i) {
      double u = 0.0;
      if (controlled) {
        if (cfg.policy == Policy::kUniformRandom)
          u = rng.uniform(-cfg.control_scale, cfg.control_scale);
        else if (cfg.policy == Policy::kScripted)
          u = scripted_control(x, cfg.cartpole);
      }
      Vec obs = x;
      for (int d = 0; d < dim; ++d)
        if (noise[d] > 0.0) obs[d] += noise[d] * rng.next();
      traj.t.push_back(i * cfg.dt);
      traj.x.push_back(obs);
      traj.u.push_back(controlled ? Vec{u} : Vec{});
      if (i < n_steps) {
        x = controlled ? cartpole_step(x, u, cfg.dt, cfg.cartpole)
                       : mass_spring_step(x, cfg.dt, cfg.mass_spring);
      }
    }
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

Dataset fig2_point_clouds(const std::string& shape, int n_points, double jitter_std,
                          uint64_t seed) {
  if (n_points < 2) throw config_error("point cloud needs at least 2 points");
  if (jitter_std < 0.0) throw config_error("jitter_std must be nonnegative");
  const double a = 0.1;  // leaves room in [-0.2, 0.2]^2 for cells far from the curve
  const double two_pi = 2.0 * std::numbers::pi;

  NormalStream rng(seed);
  Dataset data;
  data.dt = 1.0;
  data.state_dim = 2;
  data.control_dim = 0;
  Trajectory traj;
  for (int i = 0; i < n_points; ++i) {
    double t = two_pi * i / n_points;
    double px, py;
    if (shape == "circle") {
      px = a * std::cos(t);
      py = a * std::sin(t);
    } else if (shape == "figure_eight") {
      px = a * std::sin(t);
      py = a * std::sin(t) * std::cos(t);
    } else {
      throw config_error("unknown shape: " + shape);
    }
    if (jitter_std > 0.0) {
      px += jitter_std * rng.next();
      py += jitter_std * rng.next();
    }
    traj.t.push_back(static_cast<double>(i));
    traj.x.push_back({px, py});
    traj.u.push_back({});
  }
  data.trajectories.push_back(std::move(traj));
  return data;
}

}  // namespace nsde
