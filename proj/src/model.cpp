#include "nsde/model.hpp"

#include <cmath>

#include "nsde/rng.hpp"

namespace nsde {

namespace {

double sigmoid_val(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_val(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

std::vector<int> iota_selector(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

NeuralSdeModel::NeuralSdeModel(int state_dim, int control_dim, DriftSpec drift,
                               DiffusionSpec diffusion, uint64_t seed)
    : state_dim_(state_dim),
      control_dim_(control_dim),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)) {
  if (state_dim_ < 1 || control_dim_ < 0)
    throw config_error("model: invalid state/control dims");
  int zdim = state_dim_ + control_dim_;

  const std::string& comp = drift_.composer;
  size_t want_terms;
  if (comp == "blackbox") {
    want_terms = 1;
  } else if (comp == "velocity-passthrough") {
    if (state_dim_ % 2 != 0)
      throw config_error("velocity-passthrough requires an even state dimension");
    want_terms = static_cast<size_t>(state_dim_) / 2;
  } else if (comp == "cartpole-affine") {
    if (state_dim_ != 4 || control_dim_ != 1)
      throw config_error("cartpole-affine requires state_dim 4, control_dim 1");
    want_terms = 4;
  } else {
    throw config_error("unknown drift composer: " + comp);
  }
  if (drift_.terms.size() != want_terms)
    throw config_error("composer " + comp + " needs " + std::to_string(want_terms) +
                       " drift terms, got " + std::to_string(drift_.terms.size()));

  for (auto& term : drift_.terms) {
    if (term.selector.empty()) term.selector = iota_selector(zdim);
    for (int idx : term.selector)
      if (idx < 0 || idx >= zdim)
        throw config_error("drift term " + term.name + ": selector index out of range");
    term.spec.input_dim = static_cast<int>(term.selector.size());
    term.spec.output_dim = comp == "blackbox" ? state_dim_ : 1;
    term.spec.validate();
  }

  if (diffusion_.sigma_max.size() != static_cast<size_t>(state_dim_))
    throw config_error("sigma_max length must equal state dimension");
  for (double s : diffusion_.sigma_max)
    if (s < 0.0) throw config_error("sigma_max entries must be >= 0");
  if (diffusion_.features.empty()) diffusion_.features = iota_selector(zdim);
  for (int idx : diffusion_.features)
    if (idx < 0 || idx >= zdim)
      throw config_error("diffusion feature selector index out of range");
  diffusion_.d_net.input_dim = static_cast<int>(diffusion_.features.size());
  diffusion_.d_net.output_dim = 1;
  diffusion_.d_net.validate();
  diffusion_.mu_net.input_dim = static_cast<int>(diffusion_.features.size());
  diffusion_.mu_net.output_dim = 1;
  diffusion_.mu_net.validate();

  for (size_t i = 0; i < drift_.terms.size(); ++i) {
    size_t off = add_mlp_params(params_, "drift/" + drift_.terms[i].name,
                                drift_.terms[i].spec);
    term_offsets_.push_back(off);
    init_mlp(drift_.terms[i].spec,
             {params_.values().data() + off, drift_.terms[i].spec.param_count()},
             mix_seed(seed, 100 + i));
  }
  d_offset_ = add_mlp_params(params_, "diff/d", diffusion_.d_net);
  init_mlp(diffusion_.d_net,
           {params_.values().data() + d_offset_, diffusion_.d_net.param_count()},
           mix_seed(seed, 1));
  wphi_offset_ = params_.add("diff/Wphi_raw", {state_dim_});
  bphi_offset_ = params_.add("diff/bphi", {state_dim_});
  mu_offset_ = add_mlp_params(params_, "diff/mu", diffusion_.mu_net);
  init_mlp(diffusion_.mu_net,
           {params_.values().data() + mu_offset_, diffusion_.mu_net.param_count()},
           mix_seed(seed, 2));
}

void NeuralSdeModel::load_params(const ParamVector& loaded) {
  const auto& a = params_.segments();
  const auto& b = loaded.segments();
  if (a.size() != b.size()) throw config_error("checkpoint layout does not match model");
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].size != b[i].size || a[i].offset != b[i].offset)
      throw config_error("checkpoint segment " + b[i].name + " does not match model");
  params_.values() = loaded.values();
}

void NeuralSdeModel::check_dims(size_t nx, size_t nu) const {
  if (nx != static_cast<size_t>(state_dim_) || nu != static_cast<size_t>(control_dim_))
    throw config_error("model: state/control size mismatch");
}

Vec NeuralSdeModel::select(std::span<const double> x, std::span<const double> u,
                           const std::vector<int>& sel) const {
  Vec out(sel.size());
  for (size_t i = 0; i < sel.size(); ++i) {
    int idx = sel[i];
    out[i] = idx < state_dim_ ? x[idx] : u[idx - state_dim_];
  }
  return out;
}

Var NeuralSdeModel::select_node(Tape& t, Var x, Var u, const std::vector<int>& sel) const {
  Var z = t.concat(x, u);
  return t.gather(z, sel);
}

Vec NeuralSdeModel::drift_eval(std::span<const double> x, std::span<const double> u) const {
  check_dims(x.size(), u.size());
  const auto& terms = drift_.terms;
  auto term_out = [&](size_t i) {
    return mlp_eval(terms[i].spec,
                    {params_.values().data() + term_offsets_[i], terms[i].spec.param_count()},
                    select(x, u, terms[i].selector));
  };
  if (drift_.composer == "blackbox") return term_out(0);
  Vec out(state_dim_);
  if (drift_.composer == "velocity-passthrough") {
    for (int p = 0; p < state_dim_ / 2; ++p) {
      out[2 * p] = x[2 * p + 1];
      out[2 * p + 1] = term_out(p)[0];
    }
    return out;
  }
  // cartpole-affine
  out[0] = x[1];
  out[1] = term_out(0)[0] + term_out(1)[0] * u[0];
  out[2] = x[3];
  out[3] = term_out(2)[0] + term_out(3)[0] * u[0];
  return out;
}

Var NeuralSdeModel::drift_node(Tape& t, Var src, Var x, Var u) const {
  const auto& terms = drift_.terms;
  auto term_out = [&](size_t i) {
    return mlp_forward(t, terms[i].spec, src, term_offsets_[i],
                       select_node(t, x, u, terms[i].selector));
  };
  if (drift_.composer == "blackbox") return term_out(0);
  if (drift_.composer == "velocity-passthrough") {
    Var out;
    for (int p = 0; p < state_dim_ / 2; ++p) {
      Var vel = t.gather(x, std::array{2 * p + 1});
      Var pair = t.concat(vel, term_out(p));
      out = p == 0 ? pair : t.concat(out, pair);
    }
    return out;
  }
  // cartpole-affine
  Var a1 = t.add(term_out(0), t.mul(term_out(1), u));
  Var a3 = t.add(term_out(2), t.mul(term_out(3), u));
  Var top = t.concat(t.gather(x, std::array{1}), a1);
  Var bot = t.concat(t.gather(x, std::array{3}), a3);
  return t.concat(top, bot);
}

Vec NeuralSdeModel::features(std::span<const double> x, std::span<const double> u) const {
  check_dims(x.size(), u.size());
  return select(x, u, diffusion_.features);
}

Var NeuralSdeModel::features_node(Tape& t, Var x, Var u) const {
  return select_node(t, x, u, diffusion_.features);
}

double NeuralSdeModel::d_psi_from_features(std::span<const double> feat) const {
  Vec raw = mlp_eval(diffusion_.d_net,
                     {params_.values().data() + d_offset_, diffusion_.d_net.param_count()},
                     feat);
  return sigmoid_val(raw[0]);
}

double NeuralSdeModel::mu_from_features(std::span<const double> feat) const {
  Vec raw = mlp_eval(diffusion_.mu_net,
                     {params_.values().data() + mu_offset_, diffusion_.mu_net.param_count()},
                     feat);
  return softplus_val(raw[0]);
}

double NeuralSdeModel::d_psi(std::span<const double> x, std::span<const double> u) const {
  return d_psi_from_features(features(x, u));
}

double NeuralSdeModel::mu_eval(std::span<const double> x, std::span<const double> u) const {
  return mu_from_features(features(x, u));
}

Vec NeuralSdeModel::diffusion_eval(std::span<const double> x,
                                   std::span<const double> u) const {
  Vec feat = features(x, u);
  Vec raw = mlp_eval(diffusion_.d_net,
                     {params_.values().data() + d_offset_, diffusion_.d_net.param_count()},
                     feat);
  const double* wraw = params_.values().data() + wphi_offset_;
  const double* b = params_.values().data() + bphi_offset_;
  Vec out(state_dim_);
  for (int i = 0; i < state_dim_; ++i) {
    double w = 1.0 + softplus_val(wraw[i]);
    out[i] = diffusion_.sigma_max[i] * sigmoid_val(w * raw[0] + b[i]);
  }
  return out;
}

Var NeuralSdeModel::d_raw_node(Tape& t, Var src, Var feat) const {
  return mlp_forward(t, diffusion_.d_net, src, d_offset_, feat);
}

Var NeuralSdeModel::d_psi_node(Tape& t, Var src, Var feat) const {
  return t.sigmoid(d_raw_node(t, src, feat));
}

Var NeuralSdeModel::mu_node(Tape& t, Var src, Var feat) const {
  return t.softplus(mlp_forward(t, diffusion_.mu_net, src, mu_offset_, feat));
}

Var NeuralSdeModel::diffusion_node(Tape& t, Var src, Var x, Var u) const {
  Var feat = features_node(t, x, u);
  Var raw = d_raw_node(t, src, feat);
  std::vector<int> widx(state_dim_), bidx(state_dim_);
  for (int i = 0; i < state_dim_; ++i) {
    widx[i] = static_cast<int>(wphi_offset_) + i;
    bidx[i] = static_cast<int>(bphi_offset_) + i;
  }
  Var w = t.add(t.constant(1.0), t.softplus(t.gather(src, widx)));
  Var pre = t.add(t.mul(w, raw), t.gather(src, bidx));
  return t.mul(t.constant(diffusion_.sigma_max), t.sigmoid(pre));
}

NeuralSdeModel::DWithGrad NeuralSdeModel::d_psi_with_input_grad(Tape& t, Var src,
                                                                Var feat) const {
  MlpTrace tr = mlp_forward_trace(t, diffusion_.d_net, src, d_offset_, feat);
  Var d = t.sigmoid(tr.out);
  Var raw_grad = mlp_input_gradient(t, diffusion_.d_net, src, d_offset_, tr);
  Var input_grad = t.mul(t.sigmoid_grad(tr.out), raw_grad);
  return {d, input_grad};
}

NeuralSdeModel build_model(const ModelConfig& cfg, uint64_t seed) {
  DriftSpec drift;
  drift.composer = cfg.composer;
  for (size_t i = 0; i < cfg.drift_terms.size(); ++i) {
    const auto& tc = cfg.drift_terms[i];
    UnknownTerm term;
    term.name = tc.name.empty() ? "g" + std::to_string(i) : tc.name;
    term.spec.hidden = tc.hidden;
    term.spec.activation = parse_activation(tc.activation);
    term.selector = tc.selector;
    if (term.selector.empty() && cfg.composer == "cartpole-affine")
      term.selector = (i == 1 || i == 3) ? std::vector<int>{2, 3}
                                         : std::vector<int>{0, 1, 2, 3};
    drift.terms.push_back(std::move(term));
  }
  DiffusionSpec diff;
  diff.sigma_max = cfg.sigma_max;
  diff.d_net.hidden = cfg.d_hidden;
  diff.d_net.activation = parse_activation(cfg.d_activation);
  diff.mu_net.hidden = cfg.mu_hidden;
  diff.mu_net.activation = parse_activation(cfg.mu_activation);
  diff.features = cfg.feature_selector;
  return NeuralSdeModel(cfg.state_dim, cfg.control_dim, std::move(drift), std::move(diff),
                        seed);
}

}  // namespace nsde
