#include "nsde/losses.hpp"

#include <algorithm>
#include <cmath>

#include "nsde/rng.hpp"

namespace nsde {

void LossConfig::validate(int state_dim) const {
  if (alpha < 0 || beta < 0 || gamma < 0 || lam < 0)
    throw config_error("loss weights must be >= 0");
  if (rho <= 0) throw config_error("rho must be positive");
  if (n_convex_pairs < 1) throw config_error("n_convex_pairs must be >= 1");
  if (s_diag.size() != static_cast<size_t>(state_dim))
    throw config_error("s_diag length must equal state dimension");
  for (double v : s_diag)
    if (v <= 0) throw config_error("s_diag entries must be positive");
}

Vec default_s_diag(const Dataset& data) {
  Vec mean(data.state_dim, 0.0), m2(data.state_dim, 0.0);
  size_t n = 0;
  for (const auto& tr : data.trajectories)
    for (size_t i = 0; i + 1 < tr.x.size(); ++i) {
      ++n;
      for (int d = 0; d < data.state_dim; ++d) {
        double diff = tr.x[i + 1][d] - tr.x[i][d];
        double delta = diff - mean[d];
        mean[d] += delta / static_cast<double>(n);
        m2[d] += delta * (diff - mean[d]);
      }
    }
  Vec out(data.state_dim, 1e-6);
  if (n > 1)
    for (int d = 0; d < data.state_dim; ++d)
      out[d] = std::max(m2[d] / static_cast<double>(n - 1), 1e-6);
  return out;
}

Vec anchor_features(const NeuralSdeModel& model, const Segment& seg) {
  return model.features(seg.traj->x[seg.offset], seg.traj->u[seg.offset]);
}

Var data_loss_node(Tape& t, const NeuralSdeModel& model, Var src, const Segment& seg,
                   const SolverConfig& scfg, std::span<const double> s_diag) {
  const Trajectory& tr = *seg.traj;
  if (seg.offset < 0 || seg.offset + scfg.horizon >= static_cast<int>(tr.size()))
    throw config_error("segment shorter than the prediction horizon");
  Vec inv(s_diag.size());
  for (size_t i = 0; i < s_diag.size(); ++i) inv[i] = 1.0 / s_diag[i];

  Var x0 = t.constant(tr.x[seg.offset]);
  std::vector<Var> controls;
  if (model.control_dim() > 0) {
    controls.reserve(scfg.horizon);
    for (int k = 0; k < scfg.horizon; ++k)
      controls.push_back(t.constant(tr.u[seg.offset + k]));
  }
  Var acc;
  for (int p = 0; p < scfg.n_particles; ++p) {
    auto states = sdesolve_nodes(t, model, src, x0, controls, scfg, p);
    for (int j = 1; j <= scfg.horizon; ++j) {
      Var r = t.sub(states[j], t.constant(tr.x[seg.offset + j]));
      Var q = t.quad_diag(r, inv);
      acc = acc.valid() ? t.add(acc, q) : q;
    }
  }
  return t.mul(acc, t.constant(1.0 / scfg.n_particles));
}

Var grad_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                   std::span<const Vec> anchors) {
  Var acc;
  for (const Vec& a : anchors) {
    auto dg = model.d_psi_with_input_grad(t, src, t.constant(a));
    // Squared norm: the plain norm's pull stays at unit magnitude however
    // close the gradient is to zero (and is undefined exactly there), which
    // under Adam flattens the whole field before the loss minima can form.
    Var n = t.dot(dg.input_grad, dg.input_grad);
    acc = acc.valid() ? t.add(acc, n) : n;
  }
  return acc.valid() ? acc : t.constant(0.0);
}

Var convexity_gap_node(Tape& t, const NeuralSdeModel& model, Var src, Var anchor_feat,
                       Var z_feat, Var zp_feat) {
  auto dz = model.d_psi_with_input_grad(t, src, z_feat);
  Var dzp = model.d_psi_node(t, src, zp_feat);
  Var diff = t.sub(zp_feat, z_feat);
  Var lin = t.dot(dz.input_grad, diff);
  Var quad = t.mul(model.mu_node(t, src, anchor_feat), t.dot(diff, diff));
  return t.sub(t.sub(t.sub(dzp, dz.d), lin), quad);
}

Var convex_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                     std::span<const Vec> anchors, double rho, int n_pairs, uint64_t seed) {
  Var acc;
  Vec z, zp;
  for (const Vec& a : anchors) {
    NormalStream noise(mix_seed(seed, hash_doubles(a)));
    Var af = t.constant(a);
    z.resize(a.size());
    zp.resize(a.size());
    for (int pair = 0; pair < n_pairs; ++pair) {
      for (size_t i = 0; i < a.size(); ++i) z[i] = a[i] + rho * noise.next();
      for (size_t i = 0; i < a.size(); ++i) zp[i] = a[i] + rho * noise.next();
      // The constraint quantifies over ordered pairs, so each draw is
      // penalized in both directions; one-sided hinges exert a spurious
      // net drift on the d field.
      Var zc = t.constant(z);
      Var zpc = t.constant(zp);
      Var h = t.add(t.hinge_sq(convexity_gap_node(t, model, src, af, zc, zpc)),
                    t.hinge_sq(convexity_gap_node(t, model, src, af, zpc, zc)));
      acc = acc.valid() ? t.add(acc, h) : h;
    }
  }
  return acc.valid() ? acc : t.constant(0.0);
}

Var mu_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                 std::span<const Vec> anchors) {
  Var acc;
  for (const Vec& a : anchors) {
    Var r = t.recip(model.mu_node(t, src, t.constant(a)));
    acc = acc.valid() ? t.add(acc, r) : r;
  }
  return acc.valid() ? acc : t.constant(0.0);
}

Var total_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                    std::span<const Segment> batch, const LossConfig& cfg,
                    const SolverConfig& scfg, uint64_t seed, LossBreakdown* breakdown) {
  cfg.validate(model.state_dim());
  Var total = t.constant(0.0);
  LossBreakdown bd;

  if (cfg.alpha > 0) {
    Var acc;
    for (size_t i = 0; i < batch.size(); ++i) {
      SolverConfig seg_cfg = scfg;
      seg_cfg.seed = mix_seed(seed, 1000 + i);
      Var d = data_loss_node(t, model, src, batch[i], seg_cfg, cfg.s_diag);
      acc = acc.valid() ? t.add(acc, d) : d;
    }
    if (acc.valid()) {
      bd.data = t.scalar(acc);
      total = t.add(total, t.mul(acc, t.constant(cfg.alpha)));
    }
  }

  if (cfg.beta > 0 || cfg.gamma > 0 || cfg.lam > 0) {
    std::vector<Vec> anchors;
    anchors.reserve(batch.size());
    for (const Segment& seg : batch) anchors.push_back(anchor_features(model, seg));
    if (cfg.beta > 0) {
      Var g = grad_loss_node(t, model, src, anchors);
      bd.grad = t.scalar(g);
      total = t.add(total, t.mul(g, t.constant(cfg.beta)));
    }
    if (cfg.gamma > 0) {
      Var c = convex_loss_node(t, model, src, anchors, cfg.rho, cfg.n_convex_pairs,
                               mix_seed(seed, 2));
      bd.convex = t.scalar(c);
      total = t.add(total, t.mul(c, t.constant(cfg.gamma)));
    }
    if (cfg.lam > 0) {
      Var m = mu_loss_node(t, model, src, anchors);
      bd.mu = t.scalar(m);
      total = t.add(total, t.mul(m, t.constant(cfg.lam)));
    }
  }

  bd.total = t.scalar(total);
  if (breakdown) *breakdown = bd;
  return total;
}

double data_loss(const NeuralSdeModel& model, const Segment& seg, const SolverConfig& scfg,
                 std::span<const double> s_diag) {
  Tape t;
  Var src = t.constant(model.params().flat());
  return t.scalar(data_loss_node(t, model, src, seg, scfg, s_diag));
}

double grad_loss(const NeuralSdeModel& model, std::span<const Vec> anchors) {
  Tape t;
  Var src = t.constant(model.params().flat());
  return t.scalar(grad_loss_node(t, model, src, anchors));
}

double convexity_gap(const NeuralSdeModel& model, const Vec& anchor_feat, const Vec& z_feat,
                     const Vec& zp_feat) {
  Tape t;
  Var src = t.constant(model.params().flat());
  return t.scalar(convexity_gap_node(t, model, src, t.constant(anchor_feat),
                                     t.constant(z_feat), t.constant(zp_feat)));
}

double convex_loss(const NeuralSdeModel& model, std::span<const Vec> anchors, double rho,
                   int n_pairs, uint64_t seed) {
  Tape t;
  Var src = t.constant(model.params().flat());
  return t.scalar(convex_loss_node(t, model, src, anchors, rho, n_pairs, seed));
}

double mu_loss(const NeuralSdeModel& model, std::span<const Vec> anchors) {
  Tape t;
  Var src = t.constant(model.params().flat());
  return t.scalar(mu_loss_node(t, model, src, anchors));
}

LossBreakdown total_loss(const NeuralSdeModel& model, std::span<const Segment> batch,
                         const LossConfig& cfg, const SolverConfig& scfg, uint64_t seed) {
  Tape t;
  Var src = t.constant(model.params().flat());
  LossBreakdown bd;
  total_loss_node(t, model, src, batch, cfg, scfg, seed, &bd);
  return bd;
}

}  // namespace nsde
