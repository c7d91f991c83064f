#include "nsde/mlp.hpp"

#include <cmath>

#include "nsde/rng.hpp"

namespace nsde {

namespace {

struct LayerDims {
  int in, out;
  size_t w_off, b_off;  // relative to the net's base offset
};

std::vector<LayerDims> layer_dims(const MlpSpec& spec) {
  std::vector<LayerDims> layers;
  int in = spec.input_dim;
  size_t off = 0;
  for (size_t l = 0; l <= spec.hidden.size(); ++l) {
    int out = l < spec.hidden.size() ? spec.hidden[l] : spec.output_dim;
    LayerDims d{in, out, off, off + static_cast<size_t>(in) * out};
    off = d.b_off + out;
    layers.push_back(d);
    in = out;
  }
  return layers;
}

double act_eval(Activation a, double x) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kSwish:
      return x / (1.0 + std::exp(-x));
  }
  return 0.0;
}

Var act_node(Tape& t, Activation a, Var x) {
  switch (a) {
    case Activation::kTanh:
      return t.tanh(x);
    case Activation::kSigmoid:
      return t.sigmoid(x);
    case Activation::kSwish:
      return t.swish(x);
  }
  throw std::logic_error("bad activation");
}

Var act_grad_node(Tape& t, Activation a, Var x) {
  switch (a) {
    case Activation::kTanh:
      return t.tanh_grad(x);
    case Activation::kSigmoid:
      return t.sigmoid_grad(x);
    case Activation::kSwish:
      return t.swish_grad(x);
  }
  throw std::logic_error("bad activation");
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "swish" || name == "silu") return Activation::kSwish;
  throw config_error("unknown activation: " + name);
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kSwish:
      return "swish";
  }
  return "?";
}

size_t MlpSpec::param_count() const {
  size_t n = 0;
  int in = input_dim;
  for (size_t l = 0; l <= hidden.size(); ++l) {
    int out = l < hidden.size() ? hidden[l] : output_dim;
    n += static_cast<size_t>(in + 1) * out;
    in = out;
  }
  return n;
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw config_error("mlp dims must be >= 1");
  for (int h : hidden)
    if (h < 1) throw config_error("mlp hidden widths must be >= 1");
}

size_t add_mlp_params(ParamVector& params, const std::string& name, const MlpSpec& spec) {
  spec.validate();
  size_t base = params.size();
  int in = spec.input_dim;
  for (size_t l = 0; l <= spec.hidden.size(); ++l) {
    int out = l < spec.hidden.size() ? spec.hidden[l] : spec.output_dim;
    params.add(name + "/W" + std::to_string(l), {out, in});
    params.add(name + "/b" + std::to_string(l), {out});
    in = out;
  }
  return base;
}

void init_mlp(const MlpSpec& spec, std::span<double> out, uint64_t seed) {
  if (out.size() != spec.param_count())
    throw config_error("init_mlp: span size does not match spec");
  NormalStream rs(seed);
  for (const LayerDims& d : layer_dims(spec)) {
    double limit = std::sqrt(6.0 / (d.in + d.out));
    for (size_t i = 0; i < static_cast<size_t>(d.in) * d.out; ++i)
      out[d.w_off + i] = rs.uniform(-limit, limit);
    for (int i = 0; i < d.out; ++i) out[d.b_off + i] = 0.0;
  }
}

Vec mlp_eval(const MlpSpec& spec, std::span<const double> params,
             std::span<const double> input) {
  if (input.size() != static_cast<size_t>(spec.input_dim))
    throw config_error("mlp_eval: input length mismatch");
  if (params.size() != spec.param_count())
    throw config_error("mlp_eval: params length mismatch");
  Vec a(input.begin(), input.end());
  auto layers = layer_dims(spec);
  for (size_t l = 0; l < layers.size(); ++l) {
    const LayerDims& d = layers[l];
    Vec y(d.out);
    for (int j = 0; j < d.out; ++j) {
      double acc = params[d.b_off + j];
      const double* w = params.data() + d.w_off + static_cast<size_t>(j) * d.in;
      for (int k = 0; k < d.in; ++k) acc += w[k] * a[k];
      y[j] = acc;
    }
    if (l + 1 < layers.size())
      for (double& v : y) v = act_eval(spec.activation, v);
    a = std::move(y);
  }
  return a;
}

MlpTrace mlp_forward_trace(Tape& t, const MlpSpec& spec, Var src, size_t offset, Var input) {
  if (t.size(input) != static_cast<size_t>(spec.input_dim))
    throw config_error("mlp_forward: input length mismatch");
  MlpTrace trace;
  auto layers = layer_dims(spec);
  Var a = input;
  for (size_t l = 0; l < layers.size(); ++l) {
    const LayerDims& d = layers[l];
    Var pre = t.affine(src, offset + d.w_off, offset + d.b_off, d.out, d.in, a);
    if (l + 1 < layers.size()) {
      trace.hidden_pre.push_back(pre);
      a = act_node(t, spec.activation, pre);
    } else {
      a = pre;
    }
  }
  trace.out = a;
  return trace;
}

Var mlp_forward(Tape& t, const MlpSpec& spec, Var src, size_t offset, Var input) {
  return mlp_forward_trace(t, spec, src, offset, input).out;
}

Var mlp_input_gradient(Tape& t, const MlpSpec& spec, Var src, size_t offset,
                       const MlpTrace& trace) {
  if (spec.output_dim != 1)
    throw std::logic_error("mlp_input_gradient requires scalar output");
  auto layers = layer_dims(spec);
  // Backward chain W_0^T D_0 ... W_{L-1}^T e built as forward tape ops, so the
  // result stays differentiable w.r.t. params and input.
  Var v = t.constant(1.0);
  for (size_t l = layers.size(); l-- > 0;) {
    const LayerDims& d = layers[l];
    if (l + 1 < layers.size())
      v = t.mul(act_grad_node(t, spec.activation, trace.hidden_pre[l]), v);
    v = t.affine_t(src, offset + d.w_off, d.out, d.in, v);
  }
  return v;
}

}  // namespace nsde
