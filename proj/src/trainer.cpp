#include "nsde/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nsde/csvio.hpp"
#include "nsde/rng.hpp"

namespace nsde {

void TrainConfig::validate() const {
  if (batch_size <= 0) throw config_error("batch_size must be positive");
  if (horizon <= 0) throw config_error("horizon must be positive");
  if (lr_start <= 0.0 || lr_end <= 0.0) throw config_error("learning rates must be positive");
  if (decay_steps <= 0) throw config_error("decay_steps must be positive");
  if (max_steps < 0) throw config_error("max_steps must be nonnegative");
  if (eval_every <= 0) throw config_error("eval_every must be positive");
  if (patience <= 0) throw config_error("patience must be positive");
  if (eval_fraction < 0.0 || eval_fraction >= 1.0)
    throw config_error("eval_fraction must lie in [0, 1)");
}

namespace {

// Valid conditioning offsets for one trajectory: o + horizon must still index
// a recorded state.
long valid_offsets(const Trajectory& traj, int horizon) {
  long n = static_cast<long>(traj.size()) - horizon;
  return std::max(0L, n);
}

std::vector<Segment> sample_from(const Dataset& data, const std::vector<int>& trajs,
                                 int horizon, int batch_size, uint64_t seed) {
  std::vector<long> counts;
  long total = 0;
  for (int ti : trajs) {
    long c = valid_offsets(data.trajectories[ti], horizon);
    counts.push_back(c);
    total += c;
  }
  if (total == 0) throw config_error("prediction horizon exceeds every trajectory length");

  NormalStream rng(seed);
  std::vector<Segment> out;
  out.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    uint64_t r = rng.raw();
    long idx = static_cast<long>((static_cast<unsigned __int128>(r) *
                                  static_cast<unsigned __int128>(total)) >> 64);
    for (size_t k = 0; k < trajs.size(); ++k) {
      if (idx < counts[k]) {
        out.push_back({&data.trajectories[trajs[k]], static_cast<int>(idx)});
        break;
      }
      idx -= counts[k];
    }
  }
  return out;
}

// Non-overlapping tiling of the held-out trajectories; fixed once per run.
std::vector<Segment> tile_segments(const Dataset& data, const std::vector<int>& trajs,
                                   int horizon) {
  std::vector<Segment> out;
  for (int ti : trajs) {
    const Trajectory& traj = data.trajectories[ti];
    for (long o = 0; o + horizon < static_cast<long>(traj.size()); o += horizon)
      out.push_back({&traj, static_cast<int>(o)});
  }
  return out;
}

}  // namespace

std::vector<Segment> sample_segments(const Dataset& data, int horizon, int batch_size,
                                     uint64_t seed) {
  if (horizon <= 0) throw config_error("horizon must be positive");
  if (batch_size <= 0) throw config_error("batch_size must be positive");
  std::vector<int> all(data.trajectories.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return sample_from(data, all, horizon, batch_size, seed);
}

double lr_at(long step, const TrainConfig& cfg) {
  if (step >= cfg.decay_steps) return cfg.lr_end;
  double frac = static_cast<double>(step) / static_cast<double>(cfg.decay_steps);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
}

void adam_step(AdamState& st, Vec& params, std::span<const double> grad, double lr) {
  if (st.m.size() != params.size() || grad.size() != params.size())
    throw config_error("adam state does not match parameter size");
  st.step += 1;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    double mhat = st.m[i] / bc1;
    double vhat = st.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

void TrainResult::save_history_csv(const std::string& path) const {
  CsvWriter csv(path);
  csv.field("step")
      .field("loss_data")
      .field("loss_grad")
      .field("loss_convex")
      .field("loss_mu")
      .field("loss_total")
      .field("holdout_data")
      .endrow();
  for (const EvalRecord& r : history) {
    csv.field(r.step)
        .field(r.train.data)
        .field(r.train.grad)
        .field(r.train.convex)
        .field(r.train.mu)
        .field(r.train.total)
        .field(r.holdout)
        .endrow();
  }
}

TrainResult train(NeuralSdeModel& model, const Dataset& data, const TrainConfig& tc,
                  const LossConfig& lc, const SolverConfig& sc) {
  tc.validate();
  data.validate();
  lc.validate(model.state_dim());

  TrainResult result;
  if (tc.max_steps == 0) return result;

  int n_traj = static_cast<int>(data.trajectories.size());
  int n_eval = 0;
  if (tc.eval_fraction > 0.0 && n_traj > 1) {
    n_eval = static_cast<int>(std::lround(tc.eval_fraction * n_traj));
    n_eval = std::clamp(n_eval, 1, n_traj - 1);
  }
  std::vector<int> train_trajs, eval_trajs;
  for (int i = 0; i < n_traj; ++i)
    (i < n_traj - n_eval ? train_trajs : eval_trajs).push_back(i);

  std::vector<Segment> holdout = tile_segments(data, eval_trajs, tc.horizon);
  uint64_t holdout_seed = mix_seed(tc.seed, 0xE7A1u);

  SolverConfig run_sc = sc;
  run_sc.horizon = tc.horizon;

  LossConfig eval_lc = lc;
  eval_lc.alpha = 1.0;
  eval_lc.beta = eval_lc.gamma = eval_lc.lam = 0.0;

  auto eval_holdout = [&]() -> double {
    if (holdout.empty()) return std::numeric_limits<double>::quiet_NaN();
    try {
      return total_loss(model, holdout, eval_lc, run_sc, holdout_seed).data;
    } catch (const divergence_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Vec params = model.params().values();
  AdamState adam(params.size());
  Vec best_params = params;
  double best_holdout = std::numeric_limits<double>::infinity();
  long best_step = -1;
  int stale_evals = 0;
  double lr_scale = 1.0;
  bool halved = false;
  int consecutive_failures = 0;

  Tape tape;
  auto record = [&](long step, const LossBreakdown& bd) {
    model.params().values() = params;
    EvalRecord rec{step, bd, eval_holdout()};
    result.history.push_back(rec);
    if (!holdout.empty() && rec.holdout < best_holdout) {
      best_holdout = rec.holdout;
      best_step = step;
      best_params = params;
      stale_evals = 0;
    } else if (!holdout.empty()) {
      stale_evals += 1;
    }
  };

  long step = 0;
  for (; step < tc.max_steps; ++step) {
    std::vector<Segment> batch =
        sample_from(data, train_trajs, tc.horizon, tc.batch_size, mix_seed(tc.seed, step));
    tape.reset();
    Var src = tape.leaf(params);
    LossBreakdown bd;
    bool failed = false;
    try {
      Var loss = total_loss_node(tape, model, src, batch, lc, run_sc,
                                 mix_seed(tc.seed, 0xB0057u, step), &bd);
      tape.backward(loss);
      if (!std::isfinite(bd.total)) failed = true;
    } catch (const divergence_error&) {
      failed = true;
    }
    if (!failed) {
      std::span<const double> g = tape.adjoint(src);
      for (double v : g)
        if (!std::isfinite(v)) { failed = true; break; }
      if (!failed) {
        consecutive_failures = 0;
        adam_step(adam, params, g, lr_scale * lr_at(step, tc));
        if ((step + 1) % tc.eval_every == 0) {
          record(step + 1, bd);
          if (!holdout.empty() && stale_evals >= tc.patience) { step += 1; break; }
        }
      }
    }
    if (failed) {
      consecutive_failures += 1;
      if (consecutive_failures >= 2) {
        result.aborted = true;
        result.abort_reason = "two consecutive diverged batches at step " + std::to_string(step);
        step += 1;
        break;
      }
      if (!halved) { lr_scale = 0.5; halved = true; }
    }
  }
  result.steps_run = step;

  if (!holdout.empty() && best_step >= 0) {
    params = best_params;
    result.best_step = best_step;
    result.best_holdout = best_holdout;
  } else {
    result.best_step = step;
    result.best_holdout = std::numeric_limits<double>::quiet_NaN();
  }
  model.params().values() = params;
  return result;
}

}  // namespace nsde
