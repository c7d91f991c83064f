#include "nsde/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "nsde/csvio.hpp"
#include "nsde/rng.hpp"

namespace nsde {

long GridSpec::n_total() const {
  long n = 1;
  for (const Axis& a : axes) n *= a.n_cells;
  return n;
}

void GridSpec::validate(int vec_dim) const {
  if (axes.empty()) throw config_error("grid needs at least one axis");
  std::set<int> seen;
  for (const Axis& a : axes) {
    if (a.dim < 0 || a.dim >= vec_dim) throw config_error("grid axis dimension out of range");
    if (!seen.insert(a.dim).second) throw config_error("grid axes must use distinct dimensions");
    if (a.n_cells < 1) throw config_error("grid axis needs at least one cell");
    if (!(a.lo < a.hi)) throw config_error("grid axis range is empty");
  }
  if (n_total() < 2) throw config_error("grid needs at least two cells");
  if (static_cast<int>(fixed.size()) != vec_dim)
    throw config_error("grid fixed vector does not match the evaluated dimension");
}

Vec GridSpec::cell_vector(const std::vector<int>& idx) const {
  Vec v = fixed;
  for (size_t k = 0; k < axes.size(); ++k) {
    const Axis& a = axes[k];
    double w = (a.hi - a.lo) / a.n_cells;
    v[a.dim] = a.lo + (idx[k] + 0.5) * w;
  }
  return v;
}

std::vector<int> GridSpec::unflatten(long flat_idx) const {
  std::vector<int> idx(axes.size());
  for (size_t k = axes.size(); k-- > 0;) {
    idx[k] = static_cast<int>(flat_idx % axes[k].n_cells);
    flat_idx /= axes[k].n_cells;
  }
  return idx;
}

Vec GridSpec::cell_vector(long flat_idx) const { return cell_vector(unflatten(flat_idx)); }

GridSpec GridSpec::default_2d(int vec_dim) {
  GridSpec g;
  g.axes = {{0, -0.2, 0.2, 41}, {1, -0.2, 0.2, 41}};
  g.fixed = Vec(vec_dim, 0.0);
  return g;
}

Vec dmap(const NeuralSdeModel& model, const GridSpec& grid) {
  int feat_dim = static_cast<int>(model.diffusion().features.size());
  grid.validate(feat_dim);
  long n = grid.n_total();
  Vec out(n);
  for (long i = 0; i < n; ++i) out[i] = model.d_psi_from_features(grid.cell_vector(i));
  return out;
}

VarianceField uncertainty_grid(const NeuralSdeModel& model, const GridSpec& grid,
                               double horizon_s, const SolverConfig& cfg,
                               const Vec& control) {
  grid.validate(model.state_dim());
  if (horizon_s <= 0.0) throw config_error("horizon_s must be positive");
  SolverConfig run = cfg;
  run.horizon = std::max(1, static_cast<int>(std::lround(horizon_s / run.dt)));
  run.validate();

  Vec u = control;
  if (u.empty()) u = Vec(model.control_dim(), 0.0);
  if (static_cast<int>(u.size()) != model.control_dim())
    throw config_error("held control does not match the control dimension");
  std::vector<Vec> controls(run.horizon, u);

  long n = grid.n_total();
  VarianceField field;
  field.values.assign(n, std::numeric_limits<double>::quiet_NaN());
  field.valid.assign(n, 1);
  for (long i = 0; i < n; ++i) {
    SolverConfig cell_cfg = run;
    cell_cfg.seed = mix_seed(cfg.seed, static_cast<uint64_t>(i));
    Vec x0 = grid.cell_vector(i);
    try {
      PathBundle bundle = sdesolve(model, x0, controls, cell_cfg);
      int dim = bundle.state_dim;
      int np = bundle.n_particles;
      double trace = 0.0;
      for (int d = 0; d < dim; ++d) {
        double lo = bundle.paths[0].back()[d], hi = lo, mean = 0.0;
        for (int p = 0; p < np; ++p) {
          double v = bundle.paths[p].back()[d];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          mean += v;
        }
        if (np < 2 || lo == hi) continue;  // degenerate spread is exactly zero
        mean /= np;
        double acc = 0.0;
        for (int p = 0; p < np; ++p) {
          double r = bundle.paths[p].back()[d] - mean;
          acc += r * r;
        }
        trace += acc / (np - 1);
      }
      field.values[i] = trace;
    } catch (const divergence_error&) {
      field.valid[i] = 0;
    }
  }
  return field;
}

void save_field_csv(const std::string& path, const GridSpec& grid, const Vec& values,
                    const std::vector<uint8_t>* valid) {
  if (grid.axes.size() != 2) throw config_error("field export expects a two-axis grid");
  if (static_cast<long>(values.size()) != grid.n_total())
    throw config_error("field size does not match the grid");
  CsvWriter csv(path);
  csv.field("cell_x").field("cell_y").field("value").endrow();
  for (long i = 0; i < grid.n_total(); ++i) {
    Vec v = grid.cell_vector(i);
    double val = values[i];
    if (valid && !(*valid)[i]) val = std::numeric_limits<double>::quiet_NaN();
    csv.field(v[grid.axes[0].dim]).field(v[grid.axes[1].dim]).field(val).endrow();
  }
}

double PredictionReport::coverage(double multiplier) const {
  long covered = 0, total = 0;
  for (size_t j = 1; j < truth.size(); ++j)
    for (size_t d = 0; d < truth[j].size(); ++d) {
      total += 1;
      if (std::abs(truth[j][d] - mean[j][d]) <= multiplier * stddev[j][d]) covered += 1;
    }
  return total == 0 ? 1.0 : static_cast<double>(covered) / total;
}

std::vector<PredictionReport> openloop_report(const NeuralSdeModel& model,
                                              const Trajectory& traj, double window_s,
                                              const SolverConfig& cfg) {
  if (traj.size() < 2) throw config_error("trajectory too short for open-loop evaluation");
  if (window_s <= 0.0) throw config_error("window_s must be positive");
  double dt = traj.t[1] - traj.t[0];
  int window_steps = std::max(1, static_cast<int>(std::lround(window_s / dt)));

  std::vector<PredictionReport> reports;
  int n_steps = static_cast<int>(traj.size()) - 1;
  for (int start = 0; start < n_steps; start += window_steps) {
    int len = std::min(window_steps, n_steps - start);
    SolverConfig run = cfg;
    run.dt = dt;
    run.horizon = len;
    run.seed = mix_seed(cfg.seed, static_cast<uint64_t>(reports.size()));
    run.validate();

    std::vector<Vec> controls(traj.u.begin() + start, traj.u.begin() + start + len);
    PredictionReport rep;
    rep.t0 = traj.t[start];
    rep.times.resize(len + 1);
    for (int j = 0; j <= len; ++j) rep.times[j] = j * dt;
    rep.truth.assign(traj.x.begin() + start, traj.x.begin() + start + len + 1);

    try {
      PathBundle bundle = sdesolve(model, traj.x[start], controls, run);
      int dim = bundle.state_dim;
      int np = bundle.n_particles;
      rep.mean.assign(len + 1, Vec(dim, 0.0));
      rep.stddev.assign(len + 1, Vec(dim, 0.0));
      for (int j = 0; j <= len; ++j) {
        for (int p = 0; p < np; ++p)
          for (int d = 0; d < dim; ++d) rep.mean[j][d] += bundle.paths[p][j][d];
        for (int d = 0; d < dim; ++d) rep.mean[j][d] /= np;
        if (np > 1) {
          for (int d = 0; d < dim; ++d) {
            double lo = bundle.paths[0][j][d], hi = lo;
            for (int p = 0; p < np; ++p) {
              lo = std::min(lo, bundle.paths[p][j][d]);
              hi = std::max(hi, bundle.paths[p][j][d]);
            }
            if (lo == hi) continue;
            double acc = 0.0;
            for (int p = 0; p < np; ++p) {
              double r = bundle.paths[p][j][d] - rep.mean[j][d];
              acc += r * r;
            }
            rep.stddev[j][d] = std::sqrt(acc / (np - 1));
          }
        }
      }
      double acc = 0.0;
      long cnt = 0;
      for (int j = 1; j <= len; ++j)
        for (int d = 0; d < dim; ++d) {
          double r = rep.mean[j][d] - rep.truth[j][d];
          acc += r * r;
          cnt += 1;
        }
      rep.rmse = std::sqrt(acc / cnt);
      rep.coverage3 = rep.coverage(3.0);
    } catch (const divergence_error&) {
      rep.valid = false;
      rep.rmse = std::numeric_limits<double>::quiet_NaN();
      rep.coverage3 = 0.0;
      rep.mean.clear();
      rep.stddev.clear();
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

void save_reports_csv(const std::string& path, const std::vector<PredictionReport>& reports) {
  CsvWriter csv(path);
  csv.field("window").field("t");
  if (!reports.empty() && !reports[0].truth.empty()) {
    int dim = static_cast<int>(reports[0].truth[0].size());
    for (int d = 0; d < dim; ++d) csv.field("mean_" + std::to_string(d));
    for (int d = 0; d < dim; ++d) csv.field("std_" + std::to_string(d));
    for (int d = 0; d < dim; ++d) csv.field("truth_" + std::to_string(d));
  }
  csv.endrow();
  for (size_t w = 0; w < reports.size(); ++w) {
    const PredictionReport& rep = reports[w];
    if (!rep.valid) continue;
    for (size_t j = 0; j < rep.times.size(); ++j) {
      csv.field(w).field(rep.t0 + rep.times[j]);
      for (double v : rep.mean[j]) csv.field(v);
      for (double v : rep.stddev[j]) csv.field(v);
      for (double v : rep.truth[j]) csv.field(v);
      csv.endrow();
    }
  }
}

void save_reports_json(const std::string& path, const std::vector<PredictionReport>& reports) {
  nlohmann::json doc;
  doc["n_windows"] = reports.size();
  doc["windows"] = nlohmann::json::array();
  for (const PredictionReport& rep : reports) {
    nlohmann::json w;
    w["t0"] = rep.t0;
    w["valid"] = rep.valid;
    w["steps"] = rep.times.empty() ? 0 : rep.times.size() - 1;
    w["rmse"] = rep.rmse;
    w["coverage_3sigma"] = rep.coverage3;
    doc["windows"].push_back(std::move(w));
  }
  std::ofstream out(path);
  if (!out) throw config_error("cannot open " + path);
  out << doc.dump(1) << "\n";
}

}  // namespace nsde
