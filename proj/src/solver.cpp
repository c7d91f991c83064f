#include "nsde/solver.hpp"

#include <cmath>

#include "nsde/csvio.hpp"
#include "nsde/rng.hpp"

namespace nsde {

Scheme parse_scheme(const std::string& name) {
  if (name == "euler_ode") return Scheme::kEulerOde;
  if (name == "euler_maruyama") return Scheme::kEulerMaruyama;
  if (name == "milstein_df") return Scheme::kMilsteinDf;
  throw config_error("unknown solver scheme: " + name);
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kEulerOde:
      return "euler_ode";
    case Scheme::kEulerMaruyama:
      return "euler_maruyama";
    case Scheme::kMilsteinDf:
      return "milstein_df";
  }
  return "?";
}

void SolverConfig::validate() const {
  if (dt <= 0.0) throw config_error("solver: dt must be positive");
  if (horizon < 1) throw config_error("solver: horizon must be >= 1");
  if (n_particles < 1) throw config_error("solver: n_particles must be >= 1");
}

namespace {

const Vec kEmpty;

const Vec& control_at(const std::vector<Vec>& controls, int k) {
  return controls.empty() ? kEmpty : controls[k];
}

void check_finite(std::span<const double> x, int step) {
  for (double v : x)
    if (!std::isfinite(v))
      throw divergence_error("integration diverged at step " + std::to_string(step), step);
}

}  // namespace

Vec rollout_plain(const SdeDynamics& dyn, std::span<const double> x0,
                  const std::vector<Vec>& controls, const SolverConfig& cfg, int particle,
                  std::vector<Vec>* trace) {
  cfg.validate();
  const int n = dyn.dim();
  const double sdt = std::sqrt(cfg.dt);
  NormalStream noise(mix_seed(cfg.seed, static_cast<uint64_t>(particle)));
  Vec x(x0.begin(), x0.end());
  Vec dw(n);
  if (trace) {
    trace->clear();
    trace->push_back(x);
  }
  for (int k = 0; k < cfg.horizon; ++k) {
    const Vec& u = control_at(controls, k);
    noise.fill(dw);
    Vec f = dyn.drift(x, u);
    if (cfg.scheme == Scheme::kEulerOde) {
      for (int i = 0; i < n; ++i) x[i] = x[i] + f[i] * cfg.dt;
    } else if (cfg.scheme == Scheme::kEulerMaruyama) {
      Vec s = dyn.diffusion(x, u);
      for (int i = 0; i < n; ++i) x[i] = x[i] + f[i] * cfg.dt + s[i] * (sdt * dw[i]);
    } else {
      Vec s = dyn.diffusion(x, u);
      Vec xbar(n);
      for (int i = 0; i < n; ++i) xbar[i] = x[i] + f[i] * cfg.dt + s[i] * sdt;
      Vec sbar = dyn.diffusion(xbar, u);
      for (int i = 0; i < n; ++i) {
        double dwi = sdt * dw[i];
        double corr = (sbar[i] - s[i]) * ((dwi * dwi - cfg.dt) / (2.0 * sdt));
        x[i] = x[i] + f[i] * cfg.dt + s[i] * dwi + corr;
      }
    }
    check_finite(x, k + 1);
    if (trace) trace->push_back(x);
  }
  return x;
}

namespace {

struct ModelDynamics final : SdeDynamics {
  const NeuralSdeModel* model;
  explicit ModelDynamics(const NeuralSdeModel& m) : model(&m) {}
  int dim() const override { return model->state_dim(); }
  Vec drift(std::span<const double> x, std::span<const double> u) const override {
    return model->drift_eval(x, u);
  }
  Vec diffusion(std::span<const double> x, std::span<const double> u) const override {
    return model->diffusion_eval(x, u);
  }
};

}  // namespace

PathBundle sdesolve(const NeuralSdeModel& model, std::span<const double> x0,
                    const std::vector<Vec>& controls, const SolverConfig& cfg) {
  cfg.validate();
  if (x0.size() != static_cast<size_t>(model.state_dim()))
    throw config_error("sdesolve: x0 size mismatch");
  if (model.control_dim() > 0 || !controls.empty()) {
    if (controls.size() != static_cast<size_t>(cfg.horizon))
      throw config_error("sdesolve: controls length must equal horizon");
    for (const Vec& u : controls)
      if (u.size() != static_cast<size_t>(model.control_dim()))
        throw config_error("sdesolve: control width mismatch");
  }

  ModelDynamics dyn(model);
  PathBundle out;
  out.n_particles = cfg.n_particles;
  out.horizon = cfg.horizon;
  out.state_dim = model.state_dim();
  out.times.resize(cfg.horizon + 1);
  for (int k = 0; k <= cfg.horizon; ++k) out.times[k] = k * cfg.dt;
  out.paths.resize(cfg.n_particles);
  for (int p = 0; p < cfg.n_particles; ++p)
    rollout_plain(dyn, x0, controls, cfg, p, &out.paths[p]);
  return out;
}

std::vector<Var> sdesolve_nodes(Tape& t, const NeuralSdeModel& model, Var src, Var x0,
                                const std::vector<Var>& controls, const SolverConfig& cfg,
                                int particle) {
  cfg.validate();
  const int n = model.state_dim();
  const double sdt = std::sqrt(cfg.dt);
  NormalStream noise(mix_seed(cfg.seed, static_cast<uint64_t>(particle)));
  Vec dw(n), dwc(n), corr_c(n);
  Var dtc = t.constant(cfg.dt);
  std::vector<Var> states;
  states.reserve(cfg.horizon + 1);
  states.push_back(x0);
  Var empty_u;
  if (controls.empty()) empty_u = t.constant(kEmpty);
  Var x = x0;
  for (int k = 0; k < cfg.horizon; ++k) {
    Var u = controls.empty() ? empty_u : controls[k];
    noise.fill(dw);
    Var f = model.drift_node(t, src, x, u);
    if (cfg.scheme == Scheme::kEulerOde) {
      x = t.add(x, t.mul(f, dtc));
    } else if (cfg.scheme == Scheme::kEulerMaruyama) {
      Var s = model.diffusion_node(t, src, x, u);
      for (int i = 0; i < n; ++i) dwc[i] = sdt * dw[i];
      x = t.add(t.add(x, t.mul(f, dtc)), t.mul(s, t.constant(dwc)));
    } else {
      Var s = model.diffusion_node(t, src, x, u);
      Var xbar = t.add(t.add(x, t.mul(f, dtc)), t.mul(s, t.constant(sdt)));
      Var sbar = model.diffusion_node(t, src, xbar, u);
      for (int i = 0; i < n; ++i) {
        double dwi = sdt * dw[i];
        dwc[i] = dwi;
        corr_c[i] = (dwi * dwi - cfg.dt) / (2.0 * sdt);
      }
      Var corr = t.mul(t.sub(sbar, s), t.constant(corr_c));
      x = t.add(t.add(t.add(x, t.mul(f, dtc)), t.mul(s, t.constant(dwc))), corr);
    }
    check_finite(t.value(x), k + 1);
    states.push_back(x);
  }
  return states;
}

namespace {

struct GbmDynamics final : SdeDynamics {
  double a, b;
  GbmDynamics(double a_, double b_) : a(a_), b(b_) {}
  int dim() const override { return 1; }
  Vec drift(std::span<const double> x, std::span<const double>) const override {
    return Vec{a * x[0]};
  }
  Vec diffusion(std::span<const double> x, std::span<const double>) const override {
    return Vec{b * x[0]};
  }
};

}  // namespace

Vec strong_error(Scheme scheme, const Gbm& sde, const std::vector<double>& dt_list,
                 int n_paths, uint64_t seed) {
  GbmDynamics dyn(sde.a, sde.b);
  Vec errs;
  for (double dt : dt_list) {
    int steps = static_cast<int>(std::lround(sde.T / dt));
    SolverConfig cfg;
    cfg.scheme = scheme;
    cfg.dt = dt;
    cfg.horizon = steps;
    cfg.seed = mix_seed(seed, static_cast<uint64_t>(steps));
    double acc = 0.0;
    Vec x0{sde.x0};
    for (int p = 0; p < n_paths; ++p) {
      Vec xT = rollout_plain(dyn, x0, {}, cfg, p);
      // pathwise-exact terminal value on the same increments
      NormalStream noise(mix_seed(cfg.seed, static_cast<uint64_t>(p)));
      double wT = 0.0;
      double sdt = std::sqrt(dt);
      for (int k = 0; k < steps; ++k) wT += sdt * noise.next();
      double exact = sde.x0 * std::exp((sde.a - 0.5 * sde.b * sde.b) * sde.T + sde.b * wT);
      acc += std::abs(xT[0] - exact);
    }
    errs.push_back(acc / n_paths);
  }
  return errs;
}

double fit_loglog_slope(const std::vector<double>& dts, const Vec& errs) {
  if (dts.size() != errs.size() || dts.size() < 2)
    throw config_error("slope fit needs matching lists of >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(dts.size());
  for (size_t i = 0; i < dts.size(); ++i) {
    double lx = std::log(dts[i]);
    double ly = std::log(errs[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void PathBundle::save_csv(const std::string& path) const {
  CsvWriter w(path);
  w.field(std::string("particle")).field(std::string("step")).field(std::string("t"));
  for (int i = 0; i < state_dim; ++i) w.field("x_" + std::to_string(i));
  w.endrow();
  for (int p = 0; p < n_particles; ++p)
    for (int k = 0; k <= horizon; ++k) {
      w.field(p).field(k).field(times[k]);
      for (int i = 0; i < state_dim; ++i) w.field(paths[p][k][i]);
      w.endrow();
    }
}

}  // namespace nsde
