#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nsde/model.hpp"
#include "nsde/solver.hpp"

namespace nsde {

struct MpcConfig {
  Vec q;                     // diagonal state tracking weights
  Vec r;                     // diagonal control effort weights
  int horizon_steps = 30;
  int n_particles = 1;
  Vec u_lo, u_hi;            // per-entry control bounds
  int iters = 40;
  double lr0 = 0.1;
  uint64_t seed = 0;
  double dt = 0.02;          // control period == solver step
  Scheme scheme = Scheme::kEulerMaruyama;
  std::vector<int> angle_dims;  // tracking residual wrapped to [-pi, pi]

  double horizon_s() const { return horizon_steps * dt; }
  void validate(int state_dim, int control_dim) const;
};

// Time-indexed reference states, held constant between knots.
struct ReferenceTrack {
  Vec times;
  std::vector<Vec> states;

  void validate() const;
  Vec at(double t) const;
  // References for predicted steps 1..n starting at t0.
  std::vector<Vec> window(double t0, double dt, int n) const;

  static ReferenceTrack constant(const Vec& x, double duration);
  void save(const std::string& path) const;
  static ReferenceTrack load(const std::string& path);
};

struct MpcCost {
  double value = 0.0;
  bool diverged = false;
};

// Monte-Carlo estimate of the tracking + effort cost over cfg.n_particles
// paths with noise keyed by cfg.seed. Divergent or non-finite rollouts yield
// the fixed 1e9 penalty with the flag set.
MpcCost mpc_cost(const NeuralSdeModel& model, const Vec& x0, const std::vector<Vec>& controls,
                 const std::vector<Vec>& ref_window, const MpcConfig& cfg);

// Tape version; u_flat is the horizon*control_dim leaf holding the controls.
// Model parameters enter as constants, so backward() yields d cost / d u.
Var mpc_cost_node(Tape& t, const NeuralSdeModel& model, Var u_flat, const Vec& x0,
                  const std::vector<Vec>& ref_window, const MpcConfig& cfg);

// Nesterov-accelerated projected gradient descent on mpc_cost with an
// adaptive step (halve on increase, grow 1.1x on decrease) and best-iterate
// memory. Noise is frozen for the whole solve (common random numbers).
std::vector<Vec> solve_controls(const NeuralSdeModel& model, const Vec& x0,
                                const std::vector<Vec>& ref_window,
                                const std::vector<Vec>& warm_start, const MpcConfig& cfg,
                                MpcCost* best_cost = nullptr);

// Receding-horizon warm start: drop the applied control, repeat the last.
std::vector<Vec> shift_warm_start(const std::vector<Vec>& plan);

using EnvStep = std::function<Vec(const Vec& x, const Vec& u)>;

struct EpisodeLog {
  Vec t;
  std::vector<Vec> state;
  std::vector<Vec> control;
  Vec planned_cost;
  Vec solve_wall_s;
  bool terminated_early = false;

  // (t, state..., control..., planned_cost); wall times go to the sidecar so
  // the main log is reproducible byte-for-byte.
  void save_csv(const std::string& path) const;
  void save_timing_csv(const std::string& path) const;
};

// Receding-horizon loop: replan each control period from the current true
// state with the shifted previous solution as warm start, apply the first
// control to env_step. A non-finite environment state ends the episode early.
EpisodeLog run_episode(const NeuralSdeModel& model, const EnvStep& env_step, const Vec& x0,
                       const ReferenceTrack& ref, const MpcConfig& cfg, double episode_s);

}  // namespace nsde
