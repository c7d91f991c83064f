#pragma once

#include <string>
#include <vector>

#include "nsde/mlp.hpp"
#include "nsde/params.hpp"
#include "nsde/tape.hpp"

namespace nsde {

struct StateControl {
  Vec x;
  Vec u;
  Vec z() const {
    Vec out(x);
    out.insert(out.end(), u.begin(), u.end());
    return out;
  }
};

// One learned term inside the drift composer. selector picks entries of
// z = [x; u]; the term's MLP consumes exactly those entries.
struct UnknownTerm {
  std::string name;
  MlpSpec spec;
  std::vector<int> selector;
};

// composer is one of the registry entries:
//   "blackbox"             one term, output = full state derivative
//   "velocity-passthrough" state is (pos, vel) pairs; each pair derivative is
//                          [vel, g_i(sel_i)] with scalar-output terms
//   "cartpole-affine"      [x1, g0+g1*u, x3, g2+g3*u] over a 4d state, 1d control
struct DriftSpec {
  std::string composer;
  std::vector<UnknownTerm> terms;
};

struct DiffusionSpec {
  Vec sigma_max;               // per state entry, >= 0
  MlpSpec d_net;               // scalar raw output; sigmoid applied outside
  MlpSpec mu_net;              // scalar raw output; softplus applied outside
  std::vector<int> features;   // entries of z fed to d_net and mu_net
};

class NeuralSdeModel {
 public:
  NeuralSdeModel() = default;
  // Builds the parameter layout and seeds all nets.
  NeuralSdeModel(int state_dim, int control_dim, DriftSpec drift, DiffusionSpec diffusion,
                 uint64_t seed);

  int state_dim() const { return state_dim_; }
  int control_dim() const { return control_dim_; }
  const DriftSpec& drift() const { return drift_; }
  const DiffusionSpec& diffusion() const { return diffusion_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }
  // Replaces values from a checkpoint after verifying the layout matches.
  void load_params(const ParamVector& loaded);

  // ---- plain evaluation ----
  Vec drift_eval(std::span<const double> x, std::span<const double> u) const;
  double d_psi(std::span<const double> x, std::span<const double> u) const;
  Vec diffusion_eval(std::span<const double> x, std::span<const double> u) const;
  double mu_eval(std::span<const double> x, std::span<const double> u) const;
  Vec features(std::span<const double> x, std::span<const double> u) const;
  double d_psi_from_features(std::span<const double> feat) const;
  double mu_from_features(std::span<const double> feat) const;

  // ---- tape evaluation (src is the node holding this model's parameters) ----
  Var drift_node(Tape& t, Var src, Var x, Var u) const;
  Var diffusion_node(Tape& t, Var src, Var x, Var u) const;
  Var features_node(Tape& t, Var x, Var u) const;
  Var d_raw_node(Tape& t, Var src, Var feat) const;   // pre-sigmoid scalar
  Var d_psi_node(Tape& t, Var src, Var feat) const;
  Var mu_node(Tape& t, Var src, Var feat) const;
  // d_psi plus its gradient w.r.t. feat, both differentiable further.
  struct DWithGrad {
    Var d;
    Var input_grad;
  };
  DWithGrad d_psi_with_input_grad(Tape& t, Var src, Var feat) const;

  size_t term_offset(size_t i) const { return term_offsets_[i]; }
  size_t d_offset() const { return d_offset_; }
  size_t mu_offset() const { return mu_offset_; }
  size_t wphi_offset() const { return wphi_offset_; }
  size_t bphi_offset() const { return bphi_offset_; }

 private:
  void check_dims(size_t nx, size_t nu) const;
  Vec select(std::span<const double> x, std::span<const double> u,
             const std::vector<int>& sel) const;
  Var select_node(Tape& t, Var x, Var u, const std::vector<int>& sel) const;

  int state_dim_ = 0;
  int control_dim_ = 0;
  DriftSpec drift_;
  DiffusionSpec diffusion_;
  ParamVector params_;
  std::vector<size_t> term_offsets_;
  size_t d_offset_ = 0, wphi_offset_ = 0, bphi_offset_ = 0, mu_offset_ = 0;
};

// Declarative model description (the "model" config section).
struct ModelConfig {
  int state_dim = 0;
  int control_dim = 0;
  std::string composer;
  struct TermConfig {
    std::string name;
    std::vector<int> hidden;
    std::string activation = "tanh";
    std::vector<int> selector;  // empty: composer default
  };
  std::vector<TermConfig> drift_terms;
  Vec sigma_max;
  std::vector<int> d_hidden{32, 32};
  std::string d_activation = "swish";
  std::vector<int> mu_hidden{8, 8};
  std::string mu_activation = "tanh";
  std::vector<int> feature_selector;  // empty: all of z
};

NeuralSdeModel build_model(const ModelConfig& cfg, uint64_t seed);

}  // namespace nsde
