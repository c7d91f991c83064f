#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "nsde/losses.hpp"

namespace nsde::cli {

namespace {

void ensure_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw config_error("cannot create output directory " + out_dir + ": " + ec.message());
}

// The per-dimension spread covering 95% of the samples, reported the same way
// the data-collection summaries quote coverage.
void print_dataset_summary(const Dataset& data) {
  size_t points = data.total_points();
  std::printf("dataset: %zu trajectories, %zu points, dt %g\n", data.trajectories.size(),
              points, data.dt);
  if (points == 0) return;
  for (int d = 0; d < data.state_dim; ++d) {
    Vec abs_vals;
    abs_vals.reserve(points);
    for (const auto& traj : data.trajectories)
      for (const Vec& row : traj.x) abs_vals.push_back(std::abs(row[d]));
    std::sort(abs_vals.begin(), abs_vals.end());
    size_t i95 = static_cast<size_t>(std::ceil(0.95 * abs_vals.size()));
    if (i95 > 0) i95 -= 1;
    std::printf("95%% of the data has |x_%d| <= %g (max %g)\n", d, abs_vals[i95],
                abs_vals.back());
  }
}

double wrap_pi(double a) {
  double two_pi = 2.0 * 3.14159265358979323846;
  double w = std::remainder(a, two_pi);
  return w;
}

}  // namespace

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  Dataset data;
  std::string system = cfg.gen_system();
  if (system == "fig2") {
    data = fig2_point_clouds(cfg.gen_shape(), cfg.gen_n_points(), cfg.gen_jitter_std(),
                             cfg.seed);
  } else {
    data = generate_dataset(cfg.gen());
  }
  if (data.trajectories.empty())
    std::fprintf(stderr, "warning: generated dataset has no trajectories\n");
  data.save(out_dir + "/dataset.json");
  print_dataset_summary(data);
  write_manifest(out_dir, "gen-data", cfg, {"dataset.json"});
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  Dataset data = Dataset::load(cfg.file("dataset"));
  ModelConfig mc = cfg.model();
  NeuralSdeModel model = build_model(mc, cfg.seed);
  TrainConfig tc = cfg.train();
  LossConfig lc = cfg.loss();
  if (lc.s_diag.empty()) lc.s_diag = default_s_diag(data);
  SolverConfig sc = cfg.solver();

  TrainResult res = train(model, data, tc, lc, sc);

  res.save_history_csv(out_dir + "/history.csv");
  save_checkpoint(out_dir + "/checkpoint.json", mc, model);
  write_manifest(out_dir, "train", cfg, {"checkpoint.json", "history.csv"});
  std::printf("train: %ld steps", res.steps_run);
  if (res.best_step >= 0) std::printf(", best holdout %g at step %ld", res.best_holdout,
                                      res.best_step);
  std::printf("\n");
  if (res.aborted) {
    std::fprintf(stderr, "training aborted: %s\n", res.abort_reason.c_str());
    return 2;
  }
  return 0;
}

int cmd_eval_grid(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  NeuralSdeModel model = load_checkpoint(cfg.file("checkpoint"));
  EvalSection ev = cfg.eval();
  GridSpec grid = ev.grid.axes.empty() ? GridSpec::default_2d(model.state_dim()) : ev.grid;
  if (grid.fixed.empty()) grid.fixed.assign(model.state_dim(), 0.0);

  Vec d = dmap(model, grid);
  save_field_csv(out_dir + "/dmap.csv", grid, d);

  SolverConfig sc = cfg.solver();
  VarianceField field = uncertainty_grid(model, grid, ev.horizon_s, sc, ev.control);
  save_field_csv(out_dir + "/variance.csv", grid, field.values, &field.valid);
  write_manifest(out_dir, "eval-grid", cfg, {"dmap.csv", "variance.csv"});

  double mean_d = 0.0;
  for (double v : d) mean_d += v;
  mean_d /= static_cast<double>(d.size());
  long invalid = 0;
  for (uint8_t ok : field.valid)
    if (!ok) invalid += 1;
  std::printf("eval-grid: %ld cells, mean d %g, %ld divergent variance cells\n",
              grid.n_total(), mean_d, invalid);
  return 0;
}

int cmd_eval_openloop(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  NeuralSdeModel model = load_checkpoint(cfg.file("checkpoint"));
  Dataset data = Dataset::load(cfg.file("dataset"));
  EvalSection ev = cfg.eval();
  if (ev.trajectory < 0 || ev.trajectory >= static_cast<int>(data.trajectories.size()))
    throw config_error("eval.trajectory is out of range");
  SolverConfig sc = cfg.solver();

  auto reports = openloop_report(model, data.trajectories[ev.trajectory], ev.window_s, sc);
  save_reports_csv(out_dir + "/openloop.csv", reports);
  save_reports_json(out_dir + "/openloop.json", reports);
  write_manifest(out_dir, "eval-openloop", cfg, {"openloop.csv", "openloop.json"});

  for (const auto& rep : reports) {
    if (rep.valid)
      std::printf("window t0=%g: rmse %g, 3-sigma coverage %.3f\n", rep.t0, rep.rmse,
                  rep.coverage3);
    else
      std::printf("window t0=%g: diverged\n", rep.t0);
  }
  return 0;
}

int cmd_mpc(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  NeuralSdeModel model = load_checkpoint(cfg.file("checkpoint"));
  ReferenceTrack ref = ReferenceTrack::load(cfg.file("reference"));
  MpcSection ms = cfg.mpc();
  if (ms.x0.size() != static_cast<size_t>(model.state_dim()))
    throw config_error("mpc.x0 must match the model state dimension");

  std::string system = cfg.gen_system();
  EnvStep env;
  double dt = ms.mpc.dt;
  if (system == "cartpole") {
    env = [dt](const Vec& x, const Vec& u) { return cartpole_step(x, u[0], dt); };
  } else if (system == "mass_spring") {
    env = [dt](const Vec& x, const Vec&) { return mass_spring_step(x, dt); };
  } else {
    throw config_error("mpc: no simulator for gen.system '" + system + "'");
  }

  EpisodeLog log = run_episode(model, env, ms.x0, ref, ms.mpc, ms.episode_s);
  log.save_csv(out_dir + "/episode.csv");
  // Wall times vary run to run, so they stay out of the manifest.
  log.save_timing_csv(out_dir + "/timing.csv");
  write_manifest(out_dir, "mpc", cfg, {"episode.csv"});

  size_t n = log.state.size();
  size_t tail = std::max<size_t>(1, n / 5);
  for (int dim : ms.mpc.angle_dims) {
    double worst = 0.0;
    for (size_t i = n - tail; i < n; ++i)
      worst = std::max(worst, std::abs(wrap_pi(log.state[i][dim])));
    std::printf("final %zu steps: max wrapped |x_%d| = %g rad\n", tail, dim, worst);
  }
  if (!log.state.empty()) {
    std::printf("final state:");
    for (double v : log.state.back()) std::printf(" %g", v);
    std::printf("\n");
  }
  if (log.terminated_early) {
    std::fprintf(stderr, "episode terminated early: environment state became invalid\n");
    return 2;
  }
  return 0;
}

}  // namespace nsde::cli
