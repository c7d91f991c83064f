#pragma once

#include <string>
#include <vector>

#include "nsde/model.hpp"

namespace nsde {

enum class Scheme { kEulerOde, kEulerMaruyama, kMilsteinDf };

Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);

struct SolverConfig {
  Scheme scheme = Scheme::kEulerMaruyama;
  double dt = 0.01;
  int horizon = 1;
  int n_particles = 1;
  uint64_t seed = 0;

  void validate() const;
};

struct PathBundle {
  int n_particles = 0;
  int horizon = 0;
  int state_dim = 0;
  Vec times;                            // horizon+1 entries, k*dt
  std::vector<std::vector<Vec>> paths;  // [particle][step][dim]

  void save_csv(const std::string& path) const;
};

// Anything integrable by the fixed-step schemes. Diffusion is diagonal.
struct SdeDynamics {
  virtual ~SdeDynamics() = default;
  virtual int dim() const = 0;
  virtual Vec drift(std::span<const double> x, std::span<const double> u) const = 0;
  virtual Vec diffusion(std::span<const double> x, std::span<const double> u) const = 0;
};

// One particle path. controls may be empty for uncontrolled systems; noise
// comes from the stream keyed (seed, particle) regardless of scheme so that
// schemes are comparable on shared draws.
Vec rollout_plain(const SdeDynamics& dyn, std::span<const double> x0,
                  const std::vector<Vec>& controls, const SolverConfig& cfg, int particle,
                  std::vector<Vec>* trace = nullptr);

PathBundle sdesolve(const NeuralSdeModel& model, std::span<const double> x0,
                    const std::vector<Vec>& controls, const SolverConfig& cfg);

// Differentiable rollout on an existing tape. Returns states[0..horizon];
// noise is drawn exactly as in the plain path and entered as constants.
std::vector<Var> sdesolve_nodes(Tape& t, const NeuralSdeModel& model, Var src, Var x0,
                                const std::vector<Var>& controls, const SolverConfig& cfg,
                                int particle);

// Strong error of a scheme on geometric Brownian motion dx = a x dt + b x dW,
// measured against the pathwise-exact solution on the same increments.
struct Gbm {
  double a = 1.0;
  double b = 0.5;
  double x0 = 1.0;
  double T = 1.0;
};
Vec strong_error(Scheme scheme, const Gbm& sde, const std::vector<double>& dt_list,
                 int n_paths, uint64_t seed);

// Least-squares slope of log(err) against log(dt).
double fit_loglog_slope(const std::vector<double>& dts, const Vec& errs);

}  // namespace nsde
