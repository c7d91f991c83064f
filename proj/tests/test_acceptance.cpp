// Acceptance gate: eight end-to-end checks with pinned tolerances, one
// PASS/FAIL line each. Run a single check with --criterion N (1..8) or all
// of them with no arguments. Exit status 0 only if every requested check
// passes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "nsde/envs.hpp"
#include "nsde/evaluator.hpp"
#include "nsde/losses.hpp"
#include "nsde/model.hpp"
#include "nsde/mpc.hpp"
#include "nsde/rng.hpp"
#include "nsde/solver.hpp"
#include "nsde/trainer.hpp"
#include "run_config.hpp"
#include "support/fd.hpp"

namespace fs = std::filesystem;
using namespace nsde;
using nsde::cli::RunConfig;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double wrap_pi(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

double median(Vec v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Euclidean distance from a 2D point to the nearest dataset state.
double min_dist_2d(const Vec& p, const std::vector<Vec>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec& q : pts) {
    double dx = p[0] - q[0], dy = p[1] - q[1];
    best = std::min(best, std::hypot(dx, dy));
  }
  return best;
}

std::vector<Vec> all_states(const Dataset& d) {
  std::vector<Vec> out;
  for (const auto& tr : d.trajectories) out.insert(out.end(), tr.x.begin(), tr.x.end());
  return out;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string config_path(const std::string& rel) {
  return std::string(NSDE_CONFIG_DIR) + "/" + rel;
}

// ---------------------------------------------------------------------------
// 1. Analytic-gradient oracle across model/loss configurations.

Dataset synthetic_dataset(int state_dim, int control_dim, int n_points, double dt,
                          uint64_t seed) {
  NormalStream rng(seed);
  Dataset data;
  data.dt = dt;
  data.state_dim = state_dim;
  data.control_dim = control_dim;
  for (int tr = 0; tr < 2; ++tr) {
    Trajectory traj;
    for (int i = 0; i < n_points; ++i) {
      traj.t.push_back(i * dt);
      Vec x(state_dim);
      for (int d = 0; d < state_dim; ++d)
        x[d] = 0.3 * std::sin(0.4 * i + d + 2 * tr) + 0.02 * rng.next();
      traj.x.push_back(std::move(x));
      Vec u(control_dim);
      for (int d = 0; d < control_dim; ++d) u[d] = rng.uniform(-0.8, 0.8);
      traj.u.push_back(std::move(u));
    }
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

Outcome criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  const char* acts[3] = {"tanh", "swish", "sigmoid"};
  double worst_on = 0.0, worst_off = 0.0;
  int n_on = 0, n_off = 0;

  for (int i = 0; i < 20; ++i) {
    uint64_t seed = 100 + i;
    NormalStream rng(mix_seed(7, seed));

    ModelConfig mc;
    if (i % 3 == 0) {
      mc.composer = "blackbox";
      mc.state_dim = 1 + i % 3 + (i / 3) % 2;
      mc.control_dim = i % 2;
      mc.drift_terms.push_back({"g", (i % 2) ? std::vector<int>{3} : std::vector<int>{},
                                acts[i % 3], {}});
    } else if (i % 3 == 1) {
      mc.composer = "velocity-passthrough";
      mc.state_dim = (i % 2) ? 4 : 2;
      mc.control_dim = i % 2;
      for (int p = 0; p < mc.state_dim / 2; ++p)
        mc.drift_terms.push_back({"g" + std::to_string(p), {3}, acts[(i + p) % 3], {}});
    } else {
      mc.composer = "cartpole-affine";
      mc.state_dim = 4;
      mc.control_dim = 1;
      mc.drift_terms.push_back({"g1", {3}, acts[i % 3], {0, 1, 2, 3}});
      mc.drift_terms.push_back({"g2", {}, acts[(i + 1) % 3], {2, 3}});
      mc.drift_terms.push_back({"g3", {3}, acts[(i + 2) % 3], {0, 1, 2, 3}});
      mc.drift_terms.push_back({"g4", {}, acts[i % 3], {2, 3}});
    }
    mc.sigma_max.assign(mc.state_dim, 0.0);
    for (double& s : mc.sigma_max) s = rng.uniform(0.05, 0.3);
    mc.d_hidden = {5};
    mc.d_activation = acts[(i + 1) % 3];
    mc.mu_hidden = {4};
    mc.mu_activation = acts[(i + 2) % 3];

    SolverConfig sc;
    sc.scheme = Scheme::kEulerMaruyama;
    sc.dt = 0.05;
    sc.horizon = 10;
    sc.n_particles = 1 + i % 2;
    sc.seed = seed;

    bool on_solver = (i % 2 == 0);
    LossConfig lc;
    lc.alpha = on_solver ? rng.uniform(0.5, 1.5) : 0.0;
    lc.beta = rng.uniform(0.2, 1.0);
    lc.gamma = rng.uniform(0.3, 1.0);
    lc.lam = rng.uniform(0.02, 0.1);
    lc.rho = rng.uniform(0.05, 0.1);
    lc.n_convex_pairs = 3;
    lc.s_diag.assign(mc.state_dim, 0.0);
    for (double& s : lc.s_diag) s = rng.uniform(0.5, 2.0);

    Dataset data = synthetic_dataset(mc.state_dim, mc.control_dim, sc.horizon + 3, sc.dt, seed);
    std::vector<Segment> batch = sample_segments(data, sc.horizon, 2, seed);

    NeuralSdeModel model = build_model(mc, seed);
    Vec base = model.params().values();

    Tape t;
    Var src = t.leaf(model.params().flat());
    Var loss = total_loss_node(t, model, src, batch, lc, sc, seed);
    t.backward(loss);
    std::span<const double> adj = t.adjoint(src);
    Vec got(adj.begin(), adj.end());

    auto f = [&](std::span<const double> p) {
      std::copy(p.begin(), p.end(), model.params().values().begin());
      return total_loss(model, batch, lc, sc, seed).total;
    };
    Vec want = testing::fd_grad(f, base, 1e-5);
    std::copy(base.begin(), base.end(), model.params().values().begin());

    double scale = 0.0;
    for (double w : want) scale = std::max(scale, std::abs(w));
    double err = testing::max_rel_err(got, want, std::max(1e-4, 1e-2 * scale));
    if (on_solver) {
      worst_on = std::max(worst_on, err);
      ++n_on;
      if (err > 1e-4)
        return {false, "config " + std::to_string(i) + " (" + mc.composer +
                           ", 10-step rollout) rel err " + std::to_string(err) + " > 1e-4"};
    } else {
      worst_off = std::max(worst_off, err);
      ++n_off;
      if (err > 1e-5)
        return {false, "config " + std::to_string(i) + " (" + mc.composer +
                           ", no rollout) rel err " + std::to_string(err) + " > 1e-5"};
    }
  }

  std::ostringstream msg;
  msg << n_on << " rollout configs worst rel err " << worst_on << " (tol 1e-4), " << n_off
      << " loss-only configs worst " << worst_off << " (tol 1e-5) [" << elapsed_s(t0) << " s]";
  return {true, msg.str()};
}

// ---------------------------------------------------------------------------
// 2. Strong convergence order on geometric Brownian motion.

Outcome criterion2() {
  auto t0 = std::chrono::steady_clock::now();
  Gbm sde;  // a=1, b=0.5, x0=1, T=1
  std::vector<double> dts = {1.0 / 64, 1.0 / 128, 1.0 / 256};
  int n_paths = 2000;

  Vec errs_em = strong_error(Scheme::kEulerMaruyama, sde, dts, n_paths, 21);
  double slope_em = fit_loglog_slope(dts, errs_em);
  Vec errs_mil = strong_error(Scheme::kMilsteinDf, sde, dts, n_paths, 21);
  double slope_mil = fit_loglog_slope(dts, errs_mil);

  bool ok = slope_em >= 0.35 && slope_em <= 0.65 && slope_mil >= 0.85 && slope_mil <= 1.15;
  std::ostringstream msg;
  msg << "Euler-Maruyama slope " << slope_em << " (want [0.35, 0.65]), Milstein slope "
      << slope_mil << " (want [0.85, 1.15]), " << n_paths << " shared-noise paths ["
      << elapsed_s(t0) << " s]";
  return {ok, msg.str()};
}

// ---------------------------------------------------------------------------
// 3. Ornstein-Uhlenbeck moments against the analytic solution.

struct OuDynamics : SdeDynamics {
  int dim() const override { return 1; }
  Vec drift(std::span<const double> x, std::span<const double>) const override {
    return {-x[0]};
  }
  Vec diffusion(std::span<const double>, std::span<const double>) const override {
    return {0.5};
  }
};

Outcome criterion3() {
  auto t0 = std::chrono::steady_clock::now();
  OuDynamics dyn;
  SolverConfig cfg;
  cfg.scheme = Scheme::kEulerMaruyama;
  cfg.dt = 0.005;
  cfg.horizon = 200;  // T = 1
  cfg.n_particles = 20000;
  cfg.seed = 33;

  Vec x0 = {1.0};
  int n = cfg.n_particles;
  Vec terminal(n);
  for (int p = 0; p < n; ++p) terminal[p] = rollout_plain(dyn, x0, {}, cfg, p)[0];

  double mean = 0.0;
  for (double v : terminal) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : terminal) var += (v - mean) * (v - mean);
  var /= (n - 1);

  double want_mean = std::exp(-1.0);
  double want_var = 0.1080;
  double se = std::sqrt(var / n);
  bool mean_ok = std::abs(mean - want_mean) <= 3.0 * se;
  bool var_ok = std::abs(var - want_var) <= 0.05 * want_var;

  std::ostringstream msg;
  msg << "mean " << mean << " vs exp(-1) = " << want_mean << " (|diff| "
      << std::abs(mean - want_mean) << " <= 3 SE = " << 3.0 * se << "), variance " << var
      << " vs " << want_var << " within 5%, " << n << " particles [" << elapsed_s(t0) << " s]";
  return {mean_ok && var_ok, msg.str()};
}

// ---------------------------------------------------------------------------
// 4. Distance field separates on-data from far cells for both point clouds.

Outcome criterion4() {
  auto t0 = std::chrono::steady_clock::now();
  fs::path tmp = fresh_dir("nsde_acc4");
  const double rho = 0.05;
  std::ostringstream msg;

  for (const std::string shape : {"circle", "figure_eight"}) {
    std::string dir = shape == "circle" ? "fig2_circle" : "fig2_eight";
    for (uint64_t seed : {0, 1, 2}) {
      Dataset cloud = fig2_point_clouds(shape, 200, 0.002, seed);
      fs::path data_path = tmp / (shape + "_" + std::to_string(seed) + ".json");
      cloud.save(data_path.string());

      RunConfig rc = RunConfig::load(config_path(dir + "/train.json"),
                                     {"files.dataset=" + data_path.string()}, seed);
      NeuralSdeModel model = build_model(rc.model(), seed);
      LossConfig lc = rc.loss();
      TrainResult res = train(model, cloud, rc.train(), lc, rc.solver());
      if (res.aborted)
        return {false, shape + " seed " + std::to_string(seed) +
                           ": training aborted: " + res.abort_reason};

      std::vector<Vec> pts = all_states(cloud);
      GridSpec grid = GridSpec::default_2d(2);
      double near_sum = 0.0, far_sum = 0.0;
      long near_n = 0, far_n = 0;
      for (long i = 0; i < grid.n_total(); ++i) {
        Vec cell = grid.cell_vector(i);
        double dist = min_dist_2d(cell, pts);
        double d = model.d_psi_from_features(cell);
        if (dist < rho) {
          near_sum += d;
          ++near_n;
        } else if (dist > 3.0 * rho) {
          far_sum += d;
          ++far_n;
        }
      }
      if (near_n == 0 || far_n == 0)
        return {false, shape + ": degenerate grid split (near " + std::to_string(near_n) +
                           ", far " + std::to_string(far_n) + ")"};
      double near_mean = near_sum / near_n;
      double far_mean = far_sum / far_n;
      msg << shape << "/seed" << seed << ": near " << near_mean << " far " << far_mean << "; ";
      if (!(near_mean < 0.2))
        return {false, shape + " seed " + std::to_string(seed) + ": mean d over cells within " +
                           std::to_string(rho) + " of data is " + std::to_string(near_mean) +
                           ", want < 0.2"};
      if (!(far_mean > 0.8))
        return {false, shape + " seed " + std::to_string(seed) +
                           ": mean d over cells beyond 3 rho is " + std::to_string(far_mean) +
                           ", want > 0.8"};
    }
  }
  msg << "[" << elapsed_s(t0) << " s]";
  return {true, msg.str()};
}

// ---------------------------------------------------------------------------
// 5. Mass-spring model: accurate + calibrated open loop, distance-ordered
//    predictive variance.

Outcome criterion5() {
  auto t0 = std::chrono::steady_clock::now();
  fs::path tmp = fresh_dir("nsde_acc5");

  RunConfig rc_gen = RunConfig::load(config_path("mass_spring_d2/gen.json"), {}, {});
  Dataset data = generate_dataset(rc_gen.gen());
  fs::path data_path = tmp / "dataset.json";
  data.save(data_path.string());

  RunConfig rc = RunConfig::load(config_path("mass_spring_d2/train.json"),
                                 {"files.dataset=" + data_path.string()}, {});
  NeuralSdeModel model = build_model(rc.model(), rc.seed);
  LossConfig lc = rc.loss();
  if (lc.s_diag.empty()) lc.s_diag = default_s_diag(data);
  TrainResult res = train(model, data, rc.train(), lc, rc.solver());
  if (res.aborted) return {false, "training aborted: " + res.abort_reason};
  double t_train = elapsed_s(t0);

  // 8 s ground-truth rollout from outside the data support.
  Trajectory truth;
  Vec x = {0.15, -0.15};
  double dt = 0.01;
  for (int i = 0; i <= 800; ++i) {
    truth.t.push_back(i * dt);
    truth.x.push_back(x);
    truth.u.push_back({});
    x = mass_spring_step(x, dt);
  }

  SolverConfig sc = rc.solver();
  sc.n_particles = 50;
  sc.seed = 7;
  std::vector<PredictionReport> reports = openloop_report(model, truth, 8.0, sc);
  if (reports.size() != 1 || !reports[0].valid)
    return {false, "expected one valid 8 s prediction window"};
  double rmse = reports[0].rmse;
  double cov = reports[0].coverage3;
  if (!(rmse < 0.05))
    return {false, "open-loop RMSE " + std::to_string(rmse) + ", want < 0.05"};
  if (!(cov >= 0.90))
    return {false, "3-sigma coverage " + std::to_string(cov) + ", want >= 0.90"};

  SolverConfig gc = rc.solver();
  gc.n_particles = 20;
  gc.seed = 11;
  GridSpec grid = GridSpec::default_2d(2);
  VarianceField field = uncertainty_grid(model, grid, 0.5, gc);

  std::vector<Vec> pts = all_states(data);
  Vec near_vals, far_vals;
  for (long i = 0; i < grid.n_total(); ++i) {
    if (!field.valid[i]) continue;
    double dist = min_dist_2d(grid.cell_vector(i), pts);
    if (dist < 0.05) near_vals.push_back(field.values[i]);
    else if (dist >= 0.15) far_vals.push_back(field.values[i]);
  }
  if (near_vals.empty() || far_vals.empty()) return {false, "degenerate variance grid split"};
  double med_near = median(near_vals);
  double med_far = median(far_vals);

  std::ostringstream msg;
  msg << "RMSE " << rmse << " (< 0.05), 3-sigma coverage " << cov
      << " (>= 0.90), on-data median variance " << med_near << " < far median " << med_far
      << " (" << near_vals.size() << "/" << far_vals.size() << " cells); train " << t_train
      << " s, total " << elapsed_s(t0) << " s";
  return {med_near < med_far, msg.str()};
}

// ---------------------------------------------------------------------------
// 6. Cartpole swingup via sampling-based MPC on the learned model.

Outcome criterion6() {
  auto t0 = std::chrono::steady_clock::now();
  fs::path tmp = fresh_dir("nsde_acc6");

  RunConfig rc_gen = RunConfig::load(config_path("cartpole/gen.json"), {}, {});
  Dataset data = generate_dataset(rc_gen.gen());
  fs::path data_path = tmp / "dataset.json";
  data.save(data_path.string());

  RunConfig rc = RunConfig::load(config_path("cartpole/train.json"),
                                 {"files.dataset=" + data_path.string()}, {});
  ModelConfig mc = rc.model();
  NeuralSdeModel model = build_model(mc, rc.seed);
  LossConfig lc = rc.loss();
  if (lc.s_diag.empty()) lc.s_diag = default_s_diag(data);
  TrainResult res = train(model, data, rc.train(), lc, rc.solver());
  if (res.aborted) return {false, "training aborted: " + res.abort_reason};
  fs::path ckpt = tmp / "checkpoint.json";
  cli::save_checkpoint(ckpt.string(), mc, model);
  double t_train = elapsed_s(t0);

  int wins = 0;
  std::ostringstream runs;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    RunConfig rm = RunConfig::load(
        config_path("cartpole/mpc.json"),
        {"files.checkpoint=" + ckpt.string(),
         "files.reference=" + config_path("cartpole/upright_ref.json")},
        seed);
    cli::MpcSection ms = rm.mpc();
    ReferenceTrack ref = ReferenceTrack::load(rm.file("reference"));

    Vec x0 = ms.x0;
    NormalStream pert(mix_seed(4242, seed));
    x0[2] += pert.uniform(-0.05, 0.05);
    x0[3] += pert.uniform(-0.05, 0.05);

    double dt = ms.mpc.dt;
    EnvStep env = [dt](const Vec& s, const Vec& u) { return cartpole_step(s, u[0], dt); };
    EpisodeLog log = run_episode(model, env, x0, ref, ms.mpc, ms.episode_s);

    double worst = 0.0;
    bool upright = !log.terminated_early;
    for (size_t i = 0; i < log.t.size(); ++i) {
      if (log.t[i] < ms.episode_s - 2.0) continue;
      worst = std::max(worst, std::abs(wrap_pi(log.state[i][2])));
    }
    upright = upright && worst < 0.2;
    wins += upright;
    runs << "s" << seed << (upright ? " ok(" : " miss(") << worst << ") ";
  }

  std::ostringstream msg;
  msg << wins << "/10 seeds hold |wrapped theta| < 0.2 rad over the final 2 s: " << runs.str()
      << "; train " << t_train << " s, total " << elapsed_s(t0) << " s";
  return {wins >= 6, msg.str()};
}

// ---------------------------------------------------------------------------
// 7. Byte-identical artifacts when every CLI command reruns with the same
//    config and seed.

int run_cmd(const std::string& args) {
  std::string cmd = std::string(NSDE_BIN) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::string sa = slurp(a), sb = slurp(b);
  return !sa.empty() && sa == sb;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump(1) << "\n";
}

Outcome criterion7() {
  auto t0 = std::chrono::steady_clock::now();
  fs::path tmp = fresh_dir("nsde_acc7");
  auto at = [&](const std::string& rel) { return (tmp / rel).string(); };

  // gen-data, twice, plus a cartpole set that feeds the later stages.
  nlohmann::json gen_fig2 = {
      {"seed", 3},
      {"gen", {{"system", "fig2"}, {"shape", "circle"}, {"n_points", 50}, {"jitter_std", 0.002}}}};
  write_json(tmp / "gen_fig2.json", gen_fig2);
  nlohmann::json gen_cp = {
      {"seed", 5},
      {"gen",
       {{"system", "cartpole"},
        {"n_traj", 2},
        {"duration", 1.0},
        {"dt", 0.02},
        {"init_lo", {-0.1, -0.1, 3.0, -0.1}},
        {"init_hi", {0.1, 0.1, 3.3, 0.1}},
        {"noise_std", {0.0, 0.0, 0.0, 0.0}},
        {"policy", "uniform_random"},
        {"control_scale", 10.0}}}};
  write_json(tmp / "gen_cp.json", gen_cp);

  for (const char* d : {"ga", "gb", "cp"}) fs::create_directories(tmp / d);
  if (run_cmd("gen-data --config " + at("gen_fig2.json") + " --out " + at("ga")) != 0)
    return {false, "gen-data exited nonzero"};
  if (run_cmd("gen-data --config " + at("gen_fig2.json") + " --out " + at("gb")) != 0)
    return {false, "gen-data rerun exited nonzero"};
  for (const char* f : {"dataset.json", "manifest.json"})
    if (!same_bytes(tmp / "ga" / f, tmp / "gb" / f))
      return {false, std::string("gen-data rerun changed ") + f};
  if (run_cmd("gen-data --config " + at("gen_cp.json") + " --out " + at("cp")) != 0)
    return {false, "cartpole gen-data exited nonzero"};

  // train, twice.
  nlohmann::json train_cfg = {
      {"seed", 5},
      {"files", {{"dataset", at("cp/dataset.json")}}},
      {"model",
       {{"state_dim", 4},
        {"control_dim", 1},
        {"composer", "blackbox"},
        {"drift_terms", {{{"name", "g"}, {"hidden", {3}}, {"activation", "tanh"}}}},
        {"sigma_max", {0.01, 0.01, 0.01, 0.01}},
        {"d_hidden", {4}},
        {"mu_hidden", {3}},
        {"feature_selector", {0, 1, 2, 3}}}},
      {"solver", {{"dt", 0.02}, {"horizon", 5}, {"n_particles", 1}}},
      {"loss", {{"alpha", 1.0}, {"beta", 0.01}, {"gamma", 0.01}, {"lambda", 0.1}}},
      {"train",
       {{"batch_size", 4},
        {"horizon", 5},
        {"max_steps", 6},
        {"eval_every", 3},
        {"eval_fraction", 0.5}}}};
  write_json(tmp / "train.json", train_cfg);
  for (const char* d : {"ta", "tb"}) fs::create_directories(tmp / d);
  if (run_cmd("train --config " + at("train.json") + " --out " + at("ta")) != 0)
    return {false, "train exited nonzero"};
  if (run_cmd("train --config " + at("train.json") + " --out " + at("tb")) != 0)
    return {false, "train rerun exited nonzero"};
  for (const char* f : {"checkpoint.json", "history.csv", "manifest.json"})
    if (!same_bytes(tmp / "ta" / f, tmp / "tb" / f))
      return {false, std::string("train rerun changed ") + f};

  // eval-grid, twice.
  nlohmann::json grid_cfg = {
      {"seed", 5},
      {"files", {{"checkpoint", at("ta/checkpoint.json")}}},
      {"solver", {{"dt", 0.02}, {"horizon", 1}, {"n_particles", 3}}},
      {"eval",
       {{"grid",
         {{"dims", {0, 2}},
          {"lo", {-0.3, 2.8}},
          {"hi", {0.3, 3.5}},
          {"n_cells", {7, 7}},
          {"fixed", {0.0, 0.0, 0.0, 0.0}}}},
        {"horizon_s", 0.1}}}};
  write_json(tmp / "grid.json", grid_cfg);
  for (const char* d : {"ea", "eb"}) fs::create_directories(tmp / d);
  if (run_cmd("eval-grid --config " + at("grid.json") + " --out " + at("ea")) != 0)
    return {false, "eval-grid exited nonzero"};
  if (run_cmd("eval-grid --config " + at("grid.json") + " --out " + at("eb")) != 0)
    return {false, "eval-grid rerun exited nonzero"};
  for (const char* f : {"dmap.csv", "variance.csv", "manifest.json"})
    if (!same_bytes(tmp / "ea" / f, tmp / "eb" / f))
      return {false, std::string("eval-grid rerun changed ") + f};

  // eval-openloop, twice.
  nlohmann::json ol_cfg = {
      {"seed", 5},
      {"files", {{"dataset", at("cp/dataset.json")}, {"checkpoint", at("ta/checkpoint.json")}}},
      {"solver", {{"dt", 0.02}, {"horizon", 1}, {"n_particles", 5}}},
      {"eval", {{"window_s", 0.5}, {"trajectory", 0}}}};
  write_json(tmp / "ol.json", ol_cfg);
  for (const char* d : {"oa", "ob"}) fs::create_directories(tmp / d);
  if (run_cmd("eval-openloop --config " + at("ol.json") + " --out " + at("oa")) != 0)
    return {false, "eval-openloop exited nonzero"};
  if (run_cmd("eval-openloop --config " + at("ol.json") + " --out " + at("ob")) != 0)
    return {false, "eval-openloop rerun exited nonzero"};
  for (const char* f : {"openloop.csv", "openloop.json", "manifest.json"})
    if (!same_bytes(tmp / "oa" / f, tmp / "ob" / f))
      return {false, std::string("eval-openloop rerun changed ") + f};

  // mpc, twice; the timing sidecar is excluded by design.
  ReferenceTrack::constant({0.0, 0.0, 0.0, 0.0}, 1.0).save(at("ref.json"));
  nlohmann::json mpc_cfg = {
      {"seed", 5},
      {"files", {{"checkpoint", at("ta/checkpoint.json")}, {"reference", at("ref.json")}}},
      {"gen", {{"system", "cartpole"}}},
      {"mpc",
       {{"q", {1.0, 0.1, 5.0, 0.1}},
        {"r", {0.01}},
        {"u_lo", {-10.0}},
        {"u_hi", {10.0}},
        {"horizon_steps", 5},
        {"iters", 3},
        {"dt", 0.02},
        {"angle_dims", {2}},
        {"episode_s", 0.2},
        {"x0", {0.0, 0.0, 3.1, 0.0}}}}};
  write_json(tmp / "mpc.json", mpc_cfg);
  for (const char* d : {"ma", "mb"}) fs::create_directories(tmp / d);
  if (run_cmd("mpc --config " + at("mpc.json") + " --out " + at("ma")) != 0)
    return {false, "mpc exited nonzero"};
  if (run_cmd("mpc --config " + at("mpc.json") + " --out " + at("mb")) != 0)
    return {false, "mpc rerun exited nonzero"};
  for (const char* f : {"episode.csv", "manifest.json"})
    if (!same_bytes(tmp / "ma" / f, tmp / "mb" / f))
      return {false, std::string("mpc rerun changed ") + f};

  // Usage and config failures map to exit code 1.
  if (run_cmd("train --config " + at("nonexistent.json")) != 1)
    return {false, "missing config should exit 1"};
  nlohmann::json bad = gen_fig2;
  bad["gen"]["n_trajectories"] = 3;
  write_json(tmp / "bad.json", bad);
  if (run_cmd("gen-data --config " + at("bad.json") + " --out " + at("ga")) != 1)
    return {false, "unknown config key should exit 1"};

  std::ostringstream msg;
  msg << "gen-data, train, eval-grid, eval-openloop, mpc all byte-identical on rerun; "
         "bad configs exit 1 ["
      << elapsed_s(t0) << " s]";
  return {true, msg.str()};
}

// ---------------------------------------------------------------------------
// 8. Structural invariants.

ModelConfig random_model_config(NormalStream& rng, int idx) {
  const char* acts[3] = {"tanh", "swish", "sigmoid"};
  ModelConfig mc;
  mc.composer = "blackbox";
  mc.state_dim = 1 + idx % 3;
  mc.control_dim = idx % 2;
  mc.drift_terms.push_back({"g", {4}, acts[idx % 3], {}});
  mc.sigma_max.assign(mc.state_dim, 0.0);
  for (double& s : mc.sigma_max) s = rng.uniform(0.05, 0.5);
  mc.d_hidden = {6};
  mc.d_activation = acts[(idx + 1) % 3];
  mc.mu_hidden = {4};
  mc.mu_activation = acts[(idx + 2) % 3];
  return mc;
}

Outcome criterion8() {
  auto t0 = std::chrono::steady_clock::now();

  // Diffusion bounded by sigma_max, d in (0,1), mu > 0; sigma ordered like d
  // across inputs (the output transform is monotone in d).
  for (int i = 0; i < 20; ++i) {
    NormalStream rng(mix_seed(80, i));
    ModelConfig mc = random_model_config(rng, i);
    NeuralSdeModel m = build_model(mc, 80 + i);
    Vec x1(mc.state_dim), x2(mc.state_dim), u1(mc.control_dim), u2(mc.control_dim);
    for (int trial = 0; trial < 10; ++trial) {
      for (double& v : x1) v = rng.uniform(-2.0, 2.0);
      for (double& v : x2) v = rng.uniform(-2.0, 2.0);
      for (double& v : u1) v = rng.uniform(-2.0, 2.0);
      for (double& v : u2) v = rng.uniform(-2.0, 2.0);
      double d1 = m.d_psi(x1, u1), d2 = m.d_psi(x2, u2);
      if (!(d1 > 0.0 && d1 < 1.0)) return {false, "d outside (0,1)"};
      double mu = m.mu_eval(x1, u1);
      if (!(mu > 0.0)) return {false, "mu not positive"};
      Vec s1 = m.diffusion_eval(x1, u1), s2 = m.diffusion_eval(x2, u2);
      for (int d = 0; d < mc.state_dim; ++d) {
        if (!(s1[d] > 0.0 && s1[d] < mc.sigma_max[d]))
          return {false, "diffusion outside (0, sigma_max)"};
        if ((d1 < d2) != (s1[d] < s2[d]) && s1[d] != s2[d])
          return {false, "diffusion not ordered with d (transform must be monotone)"};
      }
    }
  }

  // sigma_max = 0 collapses the SDE onto the deterministic Euler path.
  {
    NormalStream rng(81);
    ModelConfig mc = random_model_config(rng, 1);
    mc.sigma_max.assign(mc.state_dim, 0.0);
    NeuralSdeModel m = build_model(mc, 81);
    Vec x0(mc.state_dim, 0.1);
    std::vector<Vec> controls(12, Vec(mc.control_dim, 0.3));
    SolverConfig cfg;
    cfg.dt = 0.05;
    cfg.horizon = 12;
    cfg.n_particles = 2;
    cfg.seed = 5;
    cfg.scheme = Scheme::kEulerMaruyama;
    PathBundle em = sdesolve(m, x0, controls, cfg);
    cfg.scheme = Scheme::kEulerOde;
    PathBundle ode = sdesolve(m, x0, controls, cfg);
    for (int p = 0; p < cfg.n_particles; ++p)
      for (int k = 0; k <= cfg.horizon; ++k)
        for (int d = 0; d < mc.state_dim; ++d)
          if (em.paths[p][k][d] != ode.paths[p][k][d])
            return {false, "zero diffusion does not reduce to the deterministic path"};
  }

  // Projection returns exactly clamped controls.
  {
    ModelConfig mc;
    mc.composer = "blackbox";
    mc.state_dim = 1;
    mc.control_dim = 1;
    mc.drift_terms.push_back({"g", {}, "tanh", {}});
    mc.sigma_max = {0.0};
    NeuralSdeModel m = build_model(mc, 3);
    auto w = m.params().view("drift/g/W0");
    w[0] = 0.0;
    w[1] = 1.0;  // dx = u dt
    MpcConfig cfg;
    cfg.q = {1.0};
    cfg.r = {0.0};
    cfg.u_lo = {-0.15};
    cfg.u_hi = {0.15};
    cfg.horizon_steps = 4;
    cfg.iters = 25;
    cfg.lr0 = 0.3;
    cfg.dt = 1.0;
    std::vector<Vec> ref(4, Vec{50.0});
    std::vector<Vec> warm(4, Vec{0.0});
    std::vector<Vec> plan = solve_controls(m, {0.0}, ref, warm, cfg);
    bool hit_hi = false;
    for (const Vec& u : plan) {
      if (u[0] < cfg.u_lo[0] || u[0] > cfg.u_hi[0])
        return {false, "projected control escaped its bounds"};
      hit_hi = hit_hi || u[0] == cfg.u_hi[0];
    }
    if (!hit_hi) return {false, "pushing toward an unreachable target must clamp exactly"};
  }

  // Adam with bias correction matches the closed form for two steps.
  {
    AdamState st(2);
    Vec p = {1.0, -2.0};
    Vec g1 = {0.5, -1.0}, g2 = {0.25, -0.5};
    double lr = 0.01;
    Vec m(2, 0.0), v(2, 0.0), want = p;
    adam_step(st, p, g1, lr);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.1 * g1[i];
      v[i] = 0.001 * g1[i] * g1[i];
      double mh = m[i] / (1 - 0.9), vh = v[i] / (1 - 0.999);
      want[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      if (std::abs(p[i] - want[i]) > 1e-15) return {false, "Adam step 1 mismatch"};
    }
    adam_step(st, p, g2, lr);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g2[i];
      v[i] = 0.999 * v[i] + 0.001 * g2[i] * g2[i];
      double mh = m[i] / (1 - 0.81), vh = v[i] / (1 - 0.999 * 0.999);
      want[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      if (std::abs(p[i] - want[i]) > 1e-14) return {false, "Adam step 2 mismatch"};
    }
  }

  // The convexity hinge is exactly zero on quadratics with curvature >= mu
  // and strictly positive below; the gap vanishes on coincident pairs.
  {
    NormalStream rng(88);
    for (int trial = 0; trial < 50; ++trial) {
      double k = rng.uniform(0.05, 1.0);
      double mu = rng.uniform(0.05, 1.0);
      Vec z = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      Vec zp = {z[0] + rng.uniform(-0.5, 0.5), z[1] + rng.uniform(-0.5, 0.5)};
      double nz = z[0] * z[0] + z[1] * z[1];
      double nzp = zp[0] * zp[0] + zp[1] * zp[1];
      double dot = 2.0 * k * (z[0] * (zp[0] - z[0]) + z[1] * (zp[1] - z[1]));
      double dd = (zp[0] - z[0]) * (zp[0] - z[0]) + (zp[1] - z[1]) * (zp[1] - z[1]);
      double gap = k * nzp - k * nz - dot - mu * dd;  // = (k - mu) |z'-z|^2
      Tape t;
      double hinge = t.value(t.hinge_sq(t.constant(gap)))[0];
      if (k >= mu && hinge != 0.0) return {false, "hinge active on a valid quadratic"};
      if (k < mu - 1e-9 && dd > 1e-12 && hinge <= 0.0)
        return {false, "hinge inactive below the curvature bound"};
    }
    NormalStream rng2(89);
    ModelConfig mc = random_model_config(rng2, 2);
    NeuralSdeModel m = build_model(mc, 89);
    Vec a(m.diffusion().features.size(), 0.3);
    if (convexity_gap(m, a, a, a) != 0.0)
      return {false, "convexity gap nonzero on coincident pair"};
  }

  std::ostringstream msg;
  msg << "diffusion/d/mu bounds, monotone output transform, zero-diffusion reduction, exact "
         "projection, Adam closed form, quadratic hinge inactivity ["
      << elapsed_s(t0) << " s]";
  return {true, msg.str()};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > 8) {
    std::fprintf(stderr, "criterion must be 1..8\n");
    return 2;
  }

  Outcome (*checks[8])() = {criterion1, criterion2, criterion3, criterion4,
                            criterion5, criterion6, criterion7, criterion8};
  bool all_ok = true;
  for (int n = 1; n <= 8; ++n) {
    if (only != 0 && n != only) continue;
    Outcome out;
    try {
      out = checks[n - 1]();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s — %s\n", n, out.pass ? "PASS" : "FAIL", out.detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && out.pass;
  }
  return all_ok ? 0 : 1;
}
