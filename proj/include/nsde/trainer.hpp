#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "nsde/losses.hpp"

namespace nsde {

struct TrainConfig {
  int batch_size = 512;
  int horizon = 50;
  double lr_start = 0.01;
  double lr_end = 0.001;
  int decay_steps = 10000;
  int max_steps = 10000;
  int eval_every = 200;
  int patience = 10;        // evaluations without improvement before stopping
  double eval_fraction = 0.1;  // held-out share, split by whole trajectories
  uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  Vec m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Uniform over all valid (trajectory, offset) pairs; segments never cross a
// trajectory boundary. Trajectories shorter than horizon+1 contribute none;
// if every trajectory is too short this is a configuration error.
std::vector<Segment> sample_segments(const Dataset& data, int horizon, int batch_size,
                                     uint64_t seed);

double lr_at(long step, const TrainConfig& cfg);

// In-place Adam update with bias correction.
void adam_step(AdamState& st, Vec& params, std::span<const double> grad, double lr);

struct EvalRecord {
  long step = 0;
  LossBreakdown train;
  double holdout = 0.0;  // held-out data loss; NaN when there is no holdout
};

struct TrainResult {
  std::vector<EvalRecord> history;
  long steps_run = 0;
  long best_step = -1;
  double best_holdout = 0.0;
  bool aborted = false;
  std::string abort_reason;

  void save_history_csv(const std::string& path) const;
};

// Optimizes model.params() in place; on return the parameters are the best
// held-out checkpoint (or the final step when there is no holdout split).
TrainResult train(NeuralSdeModel& model, const Dataset& data, const TrainConfig& tc,
                  const LossConfig& lc, const SolverConfig& sc);

}  // namespace nsde
