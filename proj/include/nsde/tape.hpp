#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nsde/common.hpp"

namespace nsde {

// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Var {
  uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

enum class Op : uint8_t {
  kConst,    // leaf, never receives gradient
  kLeaf,     // leaf, gradient readable after backward()
  kAdd,      // a + b (b may be scalar-broadcast)
  kSub,      // a - b (either side may be scalar-broadcast)
  kMul,      // a * b elementwise (either side may be scalar-broadcast)
  kNeg,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kRecip,
  kTanh,
  kSigmoid,
  kSwish,       // x * sigmoid(x)
  kSoftplus,    // log(1 + e^x), overflow-safe
  kTanhGrad,    // d/dx tanh(x) = 1 - tanh(x)^2
  kSigmoidGrad, // d/dx sigmoid(x)
  kSwishGrad,   // d/dx swish(x)
  kAffine,      // W a + bias, W/bias taken from a node's storage
  kAffineT,     // W^T a, W taken from a node's storage
  kDot,         // scalar a . b
  kNorm2,       // scalar |a|; gradient 0 at a = 0
  kSum,         // scalar sum(a)
  kGather,      // a[indices]
  kConcat,      // [a; b]
  kHingeSq,     // x < 0 ? x^2 : 0, elementwise
  kWrap,        // wrap listed entries to [-pi, pi]; unit gradient
  kQuadDiag,    // scalar sum_i w_i a_i^2
};

// Reverse-mode tape over vector-valued nodes. Recording is eager: values are
// computed as nodes are appended. backward() sweeps the node list once in
// reverse; a tape is single-owner and not thread-safe.
class Tape {
 public:
  Tape() = default;

  // ----- leaves -----
  Var constant(std::span<const double> v);
  Var constant(double v);
  Var leaf(std::span<const double> v);

  // ----- elementwise -----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var recip(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var swish(Var a);
  Var softplus(Var a);
  Var tanh_grad(Var a);
  Var sigmoid_grad(Var a);
  Var swish_grad(Var a);
  Var hinge_sq(Var a);

  // ----- structured -----
  // y = W x (+ bias). W is rows x cols, row-major, read from src's value
  // storage at w_off; bias (length rows) at b_off, or SIZE_MAX for none.
  Var affine(Var src, size_t w_off, size_t b_off, int rows, int cols, Var x);
  // y = W^T x with W rows x cols from src at w_off; x has length rows.
  Var affine_t(Var src, size_t w_off, int rows, int cols, Var x);
  Var dot(Var a, Var b);
  Var norm2(Var a);
  Var sum(Var a);
  Var gather(Var a, std::span<const int> indices);
  Var concat(Var a, Var b);
  Var wrap_angles(Var a, std::span<const int> dims);
  Var quad_diag(Var a, std::span<const double> weights);

  // ----- access -----
  std::span<const double> value(Var v) const {
    const Node& n = nodes_[v.id];
    return {buf_.data() + n.val, n.len};
  }
  double scalar(Var v) const;
  size_t size(Var v) const { return nodes_[v.id].len; }
  size_t num_nodes() const { return nodes_.size(); }

  // Accumulates d(root)/d(node) for every node reachable from root. root must
  // be scalar. Adjoints of earlier backward() calls are cleared first.
  void backward(Var root);
  std::span<const double> adjoint(Var v) const {
    const Node& n = nodes_[v.id];
    return {adj_.data() + n.val, n.len};
  }

  // Drops all nodes but keeps allocated capacity.
  void reset();

 private:
  struct Node {
    Op op;
    bool requires_grad;
    uint32_t a = UINT32_MAX;
    uint32_t b = UINT32_MAX;
    uint32_t val = 0;  // offset into buf_
    uint32_t len = 0;
    uint32_t aux = 0;  // op-specific payload index
  };
  struct AffineAux {
    uint32_t src;
    uint32_t w_off;
    uint32_t b_off;  // UINT32_MAX: no bias
    int rows, cols;
  };

  Var push(Op op, uint32_t a, uint32_t b, size_t len, bool req);
  double* data(uint32_t id) { return buf_.data() + nodes_[id].val; }
  const double* cdata(uint32_t id) const { return buf_.data() + nodes_[id].val; }
  bool req(Var v) const { return nodes_[v.id].requires_grad; }
  Var binary(Op op, Var a, Var b);
  Var unary(Op op, Var a);

  std::vector<Node> nodes_;
  std::vector<double> buf_;
  std::vector<double> adj_;
  std::vector<AffineAux> affines_;
  std::vector<int> ints_;          // gather indices / wrap dims: [aux, aux+len)
  std::vector<double> doubles_;    // quad_diag weights
};

// Gradient of a scalar program with respect to a flat parameter block.
// build must use only tape primitives; params enters as the single leaf.
Vec grad(const std::function<Var(Tape&, Var)>& build, std::span<const double> params);

}  // namespace nsde
