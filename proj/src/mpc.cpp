#include "nsde/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "nsde/csvio.hpp"
#include "nsde/rng.hpp"

namespace nsde {

void MpcConfig::validate(int state_dim, int control_dim) const {
  if (control_dim < 1) throw config_error("mpc needs a controlled model");
  if (static_cast<int>(q.size()) != state_dim)
    throw config_error("q must match the state dimension");
  if (static_cast<int>(r.size()) != control_dim)
    throw config_error("r must match the control dimension");
  for (double v : q)
    if (v < 0.0) throw config_error("q entries must be nonnegative");
  for (double v : r)
    if (v < 0.0) throw config_error("r entries must be nonnegative");
  if (static_cast<int>(u_lo.size()) != control_dim ||
      static_cast<int>(u_hi.size()) != control_dim)
    throw config_error("control bounds must match the control dimension");
  for (int i = 0; i < control_dim; ++i)
    if (u_lo[i] > u_hi[i]) throw config_error("control bounds are inverted");
  if (horizon_steps < 1) throw config_error("horizon_steps must be at least 1");
  if (n_particles < 1) throw config_error("n_particles must be at least 1");
  if (iters < 1) throw config_error("iters must be at least 1");
  if (lr0 <= 0.0) throw config_error("lr0 must be positive");
  if (dt <= 0.0) throw config_error("dt must be positive");
  for (int d : angle_dims)
    if (d < 0 || d >= state_dim) throw config_error("angle dimension out of range");
}

void ReferenceTrack::validate() const {
  if (times.empty() || times.size() != states.size())
    throw config_error("reference track needs matching times and states");
  for (size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1]) throw config_error("reference times must increase");
  for (const Vec& s : states)
    if (s.size() != states[0].size()) throw config_error("reference states must share a dimension");
}

Vec ReferenceTrack::at(double t) const {
  if (t <= times.front()) return states.front();
  if (t >= times.back()) return states.back();
  size_t i = std::upper_bound(times.begin(), times.end(), t) - times.begin();
  return states[i - 1];
}

std::vector<Vec> ReferenceTrack::window(double t0, double dt, int n) const {
  std::vector<Vec> out;
  out.reserve(n);
  for (int k = 1; k <= n; ++k) out.push_back(at(t0 + k * dt));
  return out;
}

ReferenceTrack ReferenceTrack::constant(const Vec& x, double duration) {
  ReferenceTrack ref;
  ref.times = {0.0, duration};
  ref.states = {x, x};
  return ref;
}

void ReferenceTrack::save(const std::string& path) const {
  nlohmann::json doc;
  doc["times"] = times;
  doc["states"] = states;
  std::ofstream out(path);
  if (!out) throw config_error("cannot open " + path);
  out << doc.dump(1) << "\n";
}

ReferenceTrack ReferenceTrack::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    ReferenceTrack ref;
    ref.times = doc.at("times").get<Vec>();
    ref.states = doc.at("states").get<std::vector<Vec>>();
    ref.validate();
    return ref;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("bad reference file " + path + ": " + e.what());
  }
}

Var mpc_cost_node(Tape& t, const NeuralSdeModel& model, Var u_flat, const Vec& x0,
                  const std::vector<Vec>& ref_window, const MpcConfig& cfg) {
  int cdim = model.control_dim();
  int H = cfg.horizon_steps;
  if (static_cast<int>(ref_window.size()) != H)
    throw config_error("reference window must cover the horizon");

  Var params = t.constant(model.params().flat());
  Var x0c = t.constant(x0);
  std::vector<Var> controls(H);
  std::vector<int> idx(cdim);
  for (int k = 0; k < H; ++k) {
    for (int c = 0; c < cdim; ++c) idx[c] = k * cdim + c;
    controls[k] = t.gather(u_flat, idx);
  }

  SolverConfig sc;
  sc.scheme = cfg.scheme;
  sc.dt = cfg.dt;
  sc.horizon = H;
  sc.n_particles = cfg.n_particles;
  sc.seed = cfg.seed;

  Var total = t.constant(0.0);
  for (int p = 0; p < cfg.n_particles; ++p) {
    std::vector<Var> states = sdesolve_nodes(t, model, params, x0c, controls, sc, p);
    for (int k = 1; k <= H; ++k) {
      Var diff = t.sub(states[k], t.constant(ref_window[k - 1]));
      if (!cfg.angle_dims.empty()) diff = t.wrap_angles(diff, cfg.angle_dims);
      total = t.add(total, t.quad_diag(diff, cfg.q));
    }
  }
  if (cfg.n_particles > 1) total = t.mul(total, t.constant(1.0 / cfg.n_particles));
  for (int k = 0; k < H; ++k) total = t.add(total, t.quad_diag(controls[k], cfg.r));
  return total;
}

namespace {

constexpr double kDivergedPenalty = 1e9;

Vec flatten(const std::vector<Vec>& controls) {
  Vec flat;
  for (const Vec& u : controls) flat.insert(flat.end(), u.begin(), u.end());
  return flat;
}

std::vector<Vec> unflatten(const Vec& flat, int H, int cdim) {
  std::vector<Vec> out(H, Vec(cdim));
  for (int k = 0; k < H; ++k)
    for (int c = 0; c < cdim; ++c) out[k][c] = flat[k * cdim + c];
  return out;
}

void project(Vec& flat, const MpcConfig& cfg, int cdim) {
  for (size_t i = 0; i < flat.size(); ++i) {
    int c = static_cast<int>(i) % cdim;
    flat[i] = std::clamp(flat[i], cfg.u_lo[c], cfg.u_hi[c]);
  }
}

struct EvalResult {
  double cost = kDivergedPenalty;
  bool diverged = false;
  Vec grad;
};

EvalResult eval_cost(const NeuralSdeModel& model, const Vec& x0, const Vec& u_flat,
                     const std::vector<Vec>& ref_window, const MpcConfig& cfg,
                     Tape& tape, bool want_grad) {
  EvalResult res;
  tape.reset();
  Var u = tape.leaf(u_flat);
  try {
    Var cost = mpc_cost_node(tape, model, u, x0, ref_window, cfg);
    double value = tape.scalar(cost);
    if (!std::isfinite(value)) {
      res.diverged = true;
      return res;
    }
    res.cost = value;
    if (want_grad) {
      tape.backward(cost);
      std::span<const double> g = tape.adjoint(u);
      res.grad.assign(g.begin(), g.end());
      for (double v : res.grad)
        if (!std::isfinite(v)) {
          res.diverged = true;
          res.cost = kDivergedPenalty;
          return res;
        }
    }
  } catch (const divergence_error&) {
    res.diverged = true;
  }
  return res;
}

}  // namespace

MpcCost mpc_cost(const NeuralSdeModel& model, const Vec& x0, const std::vector<Vec>& controls,
                 const std::vector<Vec>& ref_window, const MpcConfig& cfg) {
  cfg.validate(model.state_dim(), model.control_dim());
  Tape tape;
  EvalResult res =
      eval_cost(model, x0, flatten(controls), ref_window, cfg, tape, /*want_grad=*/false);
  return {res.diverged ? kDivergedPenalty : res.cost, res.diverged};
}

std::vector<Vec> solve_controls(const NeuralSdeModel& model, const Vec& x0,
                                const std::vector<Vec>& ref_window,
                                const std::vector<Vec>& warm_start, const MpcConfig& cfg,
                                MpcCost* best_out) {
  cfg.validate(model.state_dim(), model.control_dim());
  int cdim = model.control_dim();
  int H = cfg.horizon_steps;
  if (static_cast<int>(warm_start.size()) != H)
    throw config_error("warm start must cover the horizon");

  Tape tape;
  Vec u = flatten(warm_start);
  project(u, cfg, cdim);
  Vec u_prev = u;

  EvalResult first = eval_cost(model, x0, u, ref_window, cfg, tape, false);
  double cur_cost = first.diverged ? kDivergedPenalty : first.cost;
  Vec best_u = u;
  double best_cost = cur_cost;
  bool best_diverged = first.diverged;
  double lr = cfg.lr0;

  for (int it = 1; it <= cfg.iters; ++it) {
    double beta = (it - 1.0) / (it + 2.0);
    Vec y(u.size());
    for (size_t i = 0; i < u.size(); ++i) y[i] = u[i] + beta * (u[i] - u_prev[i]);
    project(y, cfg, cdim);

    EvalResult at_y = eval_cost(model, x0, y, ref_window, cfg, tape, true);
    if (at_y.diverged) {
      lr *= 0.5;
      u_prev = u;  // kill momentum and retry smaller
      continue;
    }
    Vec cand(y.size());
    for (size_t i = 0; i < y.size(); ++i) cand[i] = y[i] - lr * at_y.grad[i];
    project(cand, cfg, cdim);

    EvalResult at_cand = eval_cost(model, x0, cand, ref_window, cfg, tape, false);
    double cand_cost = at_cand.diverged ? kDivergedPenalty : at_cand.cost;
    if (!at_cand.diverged && cand_cost <= cur_cost) {
      u_prev = u;
      u = cand;
      cur_cost = cand_cost;
      lr *= 1.1;
      if (cand_cost < best_cost) {
        best_cost = cand_cost;
        best_u = cand;
        best_diverged = false;
      }
    } else {
      lr *= 0.5;
      u_prev = u;
    }
  }

  if (best_out) *best_out = {best_cost, best_diverged};
  return unflatten(best_u, H, cdim);
}

std::vector<Vec> shift_warm_start(const std::vector<Vec>& plan) {
  if (plan.empty()) return plan;
  std::vector<Vec> out(plan.begin() + 1, plan.end());
  out.push_back(plan.back());
  return out;
}

EpisodeLog run_episode(const NeuralSdeModel& model, const EnvStep& env_step, const Vec& x0,
                       const ReferenceTrack& ref, const MpcConfig& cfg, double episode_s) {
  cfg.validate(model.state_dim(), model.control_dim());
  ref.validate();
  if (episode_s <= 0.0) throw config_error("episode_s must be positive");
  if (ref.times.back() + 1e-9 < episode_s)
    throw config_error("reference track does not cover the episode");
  int n_steps = static_cast<int>(std::lround(episode_s / cfg.dt));
  int cdim = model.control_dim();

  // Start from in-bounds zero (or the bound nearest zero).
  Vec u0(cdim);
  for (int c = 0; c < cdim; ++c) u0[c] = std::clamp(0.0, cfg.u_lo[c], cfg.u_hi[c]);
  std::vector<Vec> warm(cfg.horizon_steps, u0);

  EpisodeLog log;
  Vec x = x0;
  for (int step = 0; step < n_steps; ++step) {
    double t = step * cfg.dt;
    MpcConfig solve_cfg = cfg;
    solve_cfg.seed = mix_seed(cfg.seed, static_cast<uint64_t>(step));
    std::vector<Vec> window = ref.window(t, cfg.dt, cfg.horizon_steps);

    auto tic = std::chrono::steady_clock::now();
    MpcCost planned;
    std::vector<Vec> plan = solve_controls(model, x, window, warm, solve_cfg, &planned);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();

    log.t.push_back(t);
    log.state.push_back(x);
    log.control.push_back(plan[0]);
    log.planned_cost.push_back(planned.value);
    log.solve_wall_s.push_back(wall);

    Vec next = env_step(x, plan[0]);
    bool ok = next.size() == x.size();
    for (double v : next)
      if (!std::isfinite(v)) ok = false;
    if (!ok) {
      log.terminated_early = true;
      return log;
    }
    x = next;

    warm = shift_warm_start(plan);
  }
  // Terminal state row with no control applied.
  log.t.push_back(n_steps * cfg.dt);
  log.state.push_back(x);
  return log;
}

void EpisodeLog::save_csv(const std::string& path) const {
  CsvWriter csv(path);
  int sdim = state.empty() ? 0 : static_cast<int>(state[0].size());
  int cdim = control.empty() ? 0 : static_cast<int>(control[0].size());
  csv.field("t");
  for (int d = 0; d < sdim; ++d) csv.field("x_" + std::to_string(d));
  for (int c = 0; c < cdim; ++c) csv.field("u_" + std::to_string(c));
  csv.field("planned_cost").endrow();
  for (size_t i = 0; i < t.size(); ++i) {
    csv.field(t[i]);
    for (double v : state[i]) csv.field(v);
    if (i < control.size()) {
      for (double v : control[i]) csv.field(v);
      csv.field(planned_cost[i]);
    } else {
      for (int c = 0; c < cdim; ++c) csv.field("");
      csv.field("");
    }
    csv.endrow();
  }
}

void EpisodeLog::save_timing_csv(const std::string& path) const {
  CsvWriter csv(path);
  csv.field("t").field("solve_wall_s").endrow();
  for (size_t i = 0; i < solve_wall_s.size(); ++i)
    csv.field(t[i]).field(solve_wall_s[i]).endrow();
}

}  // namespace nsde
