#pragma once

#include <string>
#include <vector>

#include "nsde/params.hpp"
#include "nsde/tape.hpp"

namespace nsde {

enum class Activation { kTanh, kSwish, kSigmoid };

Activation parse_activation(const std::string& name);  // accepts silu as swish
std::string activation_name(Activation a);

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  Activation activation = Activation::kTanh;

  size_t param_count() const;
  void validate() const;
};

// Registers one segment per layer ("<name>/W0", "<name>/b0", ...) and returns
// the offset of the first one. Layers are contiguous in registration order.
size_t add_mlp_params(ParamVector& params, const std::string& name, const MlpSpec& spec);

// Uniform init in +-sqrt(6/(fan_in+fan_out)) per layer, zero biases.
void init_mlp(const MlpSpec& spec, std::span<double> out, uint64_t seed);

// Plain evaluation without a tape.
Vec mlp_eval(const MlpSpec& spec, std::span<const double> params, std::span<const double> input);

// Tape evaluation. hidden_pre holds each hidden layer's pre-activation node,
// needed to build the input-gradient chain below.
struct MlpTrace {
  Var out;
  std::vector<Var> hidden_pre;
};
MlpTrace mlp_forward_trace(Tape& t, const MlpSpec& spec, Var src, size_t offset, Var input);
Var mlp_forward(Tape& t, const MlpSpec& spec, Var src, size_t offset, Var input);

// Gradient of a scalar-output MLP w.r.t. its input, built as tape operations
// so the result can itself be differentiated (w.r.t. params or the input).
Var mlp_input_gradient(Tape& t, const MlpSpec& spec, Var src, size_t offset,
                       const MlpTrace& trace);

}  // namespace nsde
