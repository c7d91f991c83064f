#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nsde/dataset.hpp"
#include "nsde/model.hpp"
#include "nsde/solver.hpp"

namespace nsde {

// Rectangular evaluation grid over selected dimensions of a larger vector;
// the remaining dimensions take their values from `fixed`. Cells are visited
// row-major (first axis slowest) and evaluated at cell centers.
struct GridSpec {
  struct Axis {
    int dim = 0;
    double lo = 0.0, hi = 0.0;
    int n_cells = 0;
  };
  std::vector<Axis> axes;
  Vec fixed;

  long n_total() const;
  void validate(int vec_dim) const;
  // The full vector for one cell; idx is per-axis cell indices.
  Vec cell_vector(const std::vector<int>& idx) const;
  Vec cell_vector(long flat_idx) const;
  std::vector<int> unflatten(long flat_idx) const;

  // [-0.2, 0.2]^2 over dims (0, 1) with 41x41 cells.
  static GridSpec default_2d(int vec_dim = 2);
};

// d-net output at every cell center of a grid in feature space.
Vec dmap(const NeuralSdeModel& model, const GridSpec& grid);

struct VarianceField {
  Vec values;                 // trace of terminal-state sample covariance
  std::vector<uint8_t> valid; // 0 where the rollout diverged
};

// Rolls cfg.n_particles paths from each cell center for horizon_s seconds
// (cells are initial states; non-gridded dims come from grid.fixed) under a
// held constant control, and records the terminal-state variance. Divergent
// cells are marked invalid rather than failing the sweep.
VarianceField uncertainty_grid(const NeuralSdeModel& model, const GridSpec& grid,
                               double horizon_s, const SolverConfig& cfg,
                               const Vec& control = {});

// (cell_x, cell_y, value) rows in cell order; requires exactly two axes.
// Invalid cells are written as nan.
void save_field_csv(const std::string& path, const GridSpec& grid, const Vec& values,
                    const std::vector<uint8_t>* valid = nullptr);

struct PredictionReport {
  double t0 = 0.0;
  bool valid = true;               // false if the rollout diverged
  Vec times;                       // window-relative, steps+1 entries
  std::vector<Vec> mean;           // per step, per dim, across particles
  std::vector<Vec> stddev;
  std::vector<Vec> truth;
  double rmse = 0.0;               // of the mean path over predicted steps
  double coverage3 = 0.0;          // truth within mean +- 3 std

  // Coverage for an arbitrary envelope multiplier.
  double coverage(double multiplier) const;
};

// Splits the trajectory into windows of window_s seconds (last one may be
// shorter), conditions each on its first recorded state, replays the recorded
// controls open-loop with cfg.n_particles sampled paths, and reports
// mean/std/RMSE/coverage against the recording.
std::vector<PredictionReport> openloop_report(const NeuralSdeModel& model,
                                              const Trajectory& traj, double window_s,
                                              const SolverConfig& cfg);

void save_reports_csv(const std::string& path, const std::vector<PredictionReport>& reports);
void save_reports_json(const std::string& path, const std::vector<PredictionReport>& reports);

}  // namespace nsde
