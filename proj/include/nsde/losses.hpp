#pragma once

#include "nsde/dataset.hpp"
#include "nsde/model.hpp"
#include "nsde/solver.hpp"

namespace nsde {

struct LossConfig {
  double alpha = 1.0;
  double beta = 0.01;
  double gamma = 0.01;
  double lam = 1.0;
  Vec s_diag;  // per-state observation variance
  double rho = 0.05;
  int n_convex_pairs = 8;

  void validate(int state_dim) const;
};

// A length-horizon prediction window inside one trajectory; offset indexes
// the conditioning state.
struct Segment {
  const Trajectory* traj = nullptr;
  int offset = 0;
};

// Per-dimension empirical variance of one-step state differences, floored at
// 1e-6; used when no observation variance is configured.
Vec default_s_diag(const Dataset& data);

struct LossBreakdown {
  double data = 0.0;
  double grad = 0.0;
  double convex = 0.0;
  double mu = 0.0;
  double total = 0.0;
};

// The diffusion-feature vector at a segment's conditioning point.
Vec anchor_features(const NeuralSdeModel& model, const Segment& seg);

// ---- tape builders (src is the node holding model parameters) ----
// Squared Mahalanobis residual sum over the predicted window, averaged over
// particles; noise keyed by scfg.seed.
Var data_loss_node(Tape& t, const NeuralSdeModel& model, Var src, const Segment& seg,
                   const SolverConfig& scfg, std::span<const double> s_diag);
// Sum of squared Euclidean norms of the d-net input gradient at each anchor.
Var grad_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                   std::span<const Vec> anchors);
// F = d(z') - d(z) - grad d(z).(z'-z) - mu(anchor) |z'-z|^2.
Var convexity_gap_node(Tape& t, const NeuralSdeModel& model, Var src, Var anchor_feat,
                       Var z_feat, Var zp_feat);
// Sum of hinge^2(F) over pairs drawn from N(anchor, rho^2 I); pair draws are
// keyed by (seed, anchor value) so batch order cannot matter.
Var convex_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                     std::span<const Vec> anchors, double rho, int n_pairs, uint64_t seed);
// Sum of 1/mu over anchors.
Var mu_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                 std::span<const Vec> anchors);
// Weighted combination; terms with zero weight are skipped entirely and
// reported as 0 in the breakdown. Anchors are the segments' conditioning
// points. Per-segment rollout noise is keyed (seed, segment ordinal).
Var total_loss_node(Tape& t, const NeuralSdeModel& model, Var src,
                    std::span<const Segment> batch, const LossConfig& cfg,
                    const SolverConfig& scfg, uint64_t seed,
                    LossBreakdown* breakdown = nullptr);

// ---- value-only wrappers ----
double data_loss(const NeuralSdeModel& model, const Segment& seg, const SolverConfig& scfg,
                 std::span<const double> s_diag);
double grad_loss(const NeuralSdeModel& model, std::span<const Vec> anchors);
double convexity_gap(const NeuralSdeModel& model, const Vec& anchor_feat, const Vec& z_feat,
                     const Vec& zp_feat);
double convex_loss(const NeuralSdeModel& model, std::span<const Vec> anchors, double rho,
                   int n_pairs, uint64_t seed);
double mu_loss(const NeuralSdeModel& model, std::span<const Vec> anchors);
LossBreakdown total_loss(const NeuralSdeModel& model, std::span<const Segment> batch,
                         const LossConfig& cfg, const SolverConfig& scfg, uint64_t seed);

}  // namespace nsde
