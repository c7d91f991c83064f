#include "nsde/tape.hpp"

#include <cmath>
#include <cstring>

namespace nsde {

namespace {

inline double sigmoid_val(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_val(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

constexpr double kTwoPi = 6.283185307179586476925287;

inline double wrap_pi(double x) { return x - kTwoPi * std::round(x / kTwoPi); }

}  // namespace

Var Tape::push(Op op, uint32_t a, uint32_t b, size_t len, bool req) {
  Node n;
  n.op = op;
  n.requires_grad = req;
  n.a = a;
  n.b = b;
  n.val = static_cast<uint32_t>(buf_.size());
  n.len = static_cast<uint32_t>(len);
  buf_.resize(buf_.size() + len);
  nodes_.push_back(n);
  return Var{static_cast<uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(std::span<const double> v) {
  Var out = push(Op::kConst, UINT32_MAX, UINT32_MAX, v.size(), false);
  if (!v.empty()) std::memcpy(data(out.id), v.data(), v.size() * sizeof(double));
  return out;
}

Var Tape::constant(double v) {
  Var out = push(Op::kConst, UINT32_MAX, UINT32_MAX, 1, false);
  *data(out.id) = v;
  return out;
}

Var Tape::leaf(std::span<const double> v) {
  Var out = push(Op::kLeaf, UINT32_MAX, UINT32_MAX, v.size(), true);
  if (!v.empty()) std::memcpy(data(out.id), v.data(), v.size() * sizeof(double));
  return out;
}

Var Tape::binary(Op op, Var a, Var b) {
  size_t la = nodes_[a.id].len, lb = nodes_[b.id].len;
  size_t lo = std::max(la, lb);
  if (la != lb && la != 1 && lb != 1)
    throw config_error("tape: elementwise size mismatch");
  Var out = push(op, a.id, b.id, lo, req(a) || req(b));
  const double* pa = cdata(a.id);
  const double* pb = cdata(b.id);
  double* po = data(out.id);
  size_t sa = la == 1 ? 0 : 1, sb = lb == 1 ? 0 : 1;
  switch (op) {
    case Op::kAdd:
      for (size_t i = 0; i < lo; ++i) po[i] = pa[i * sa] + pb[i * sb];
      break;
    case Op::kSub:
      for (size_t i = 0; i < lo; ++i) po[i] = pa[i * sa] - pb[i * sb];
      break;
    case Op::kMul:
      for (size_t i = 0; i < lo; ++i) po[i] = pa[i * sa] * pb[i * sb];
      break;
    default:
      throw std::logic_error("tape: bad binary op");
  }
  return out;
}

Var Tape::add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::kMul, a, b); }

Var Tape::unary(Op op, Var a) {
  size_t l = nodes_[a.id].len;
  Var out = push(op, a.id, UINT32_MAX, l, req(a));
  const double* p = cdata(a.id);
  double* o = data(out.id);
  switch (op) {
    case Op::kNeg:
      for (size_t i = 0; i < l; ++i) o[i] = -p[i];
      break;
    case Op::kExp:
      for (size_t i = 0; i < l; ++i) o[i] = std::exp(p[i]);
      break;
    case Op::kLog:
      for (size_t i = 0; i < l; ++i) o[i] = std::log(p[i]);
      break;
    case Op::kSqrt:
      for (size_t i = 0; i < l; ++i) o[i] = std::sqrt(p[i]);
      break;
    case Op::kSquare:
      for (size_t i = 0; i < l; ++i) o[i] = p[i] * p[i];
      break;
    case Op::kRecip:
      for (size_t i = 0; i < l; ++i) o[i] = 1.0 / p[i];
      break;
    case Op::kTanh:
      for (size_t i = 0; i < l; ++i) o[i] = std::tanh(p[i]);
      break;
    case Op::kSigmoid:
      for (size_t i = 0; i < l; ++i) o[i] = sigmoid_val(p[i]);
      break;
    case Op::kSwish:
      for (size_t i = 0; i < l; ++i) o[i] = p[i] * sigmoid_val(p[i]);
      break;
    case Op::kSoftplus:
      for (size_t i = 0; i < l; ++i) o[i] = softplus_val(p[i]);
      break;
    case Op::kTanhGrad:
      for (size_t i = 0; i < l; ++i) {
        double t = std::tanh(p[i]);
        o[i] = 1.0 - t * t;
      }
      break;
    case Op::kSigmoidGrad:
      for (size_t i = 0; i < l; ++i) {
        double s = sigmoid_val(p[i]);
        o[i] = s * (1.0 - s);
      }
      break;
    case Op::kSwishGrad:
      for (size_t i = 0; i < l; ++i) {
        double s = sigmoid_val(p[i]);
        o[i] = s * (1.0 + p[i] * (1.0 - s));
      }
      break;
    case Op::kHingeSq:
      for (size_t i = 0; i < l; ++i) o[i] = p[i] < 0.0 ? p[i] * p[i] : 0.0;
      break;
    default:
      throw std::logic_error("tape: bad unary op");
  }
  return out;
}

Var Tape::neg(Var a) { return unary(Op::kNeg, a); }
Var Tape::exp(Var a) { return unary(Op::kExp, a); }
Var Tape::log(Var a) { return unary(Op::kLog, a); }
Var Tape::sqrt(Var a) { return unary(Op::kSqrt, a); }
Var Tape::square(Var a) { return unary(Op::kSquare, a); }
Var Tape::recip(Var a) { return unary(Op::kRecip, a); }
Var Tape::tanh(Var a) { return unary(Op::kTanh, a); }
Var Tape::sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var Tape::swish(Var a) { return unary(Op::kSwish, a); }
Var Tape::softplus(Var a) { return unary(Op::kSoftplus, a); }
Var Tape::tanh_grad(Var a) { return unary(Op::kTanhGrad, a); }
Var Tape::sigmoid_grad(Var a) { return unary(Op::kSigmoidGrad, a); }
Var Tape::swish_grad(Var a) { return unary(Op::kSwishGrad, a); }
Var Tape::hinge_sq(Var a) { return unary(Op::kHingeSq, a); }

Var Tape::affine(Var src, size_t w_off, size_t b_off, int rows, int cols, Var x) {
  if (nodes_[x.id].len != static_cast<size_t>(cols))
    throw config_error("tape: affine input length != cols");
  if (w_off + static_cast<size_t>(rows) * cols > nodes_[src.id].len)
    throw config_error("tape: affine weights out of range");
  if (b_off != SIZE_MAX && b_off + rows > nodes_[src.id].len)
    throw config_error("tape: affine bias out of range");
  AffineAux aux{src.id, static_cast<uint32_t>(w_off),
                b_off == SIZE_MAX ? UINT32_MAX : static_cast<uint32_t>(b_off), rows, cols};
  Var out = push(Op::kAffine, x.id, UINT32_MAX, rows, req(x) || req(src));
  nodes_[out.id].aux = static_cast<uint32_t>(affines_.size());
  affines_.push_back(aux);
  const double* w = cdata(src.id) + w_off;
  const double* b = aux.b_off == UINT32_MAX ? nullptr : cdata(src.id) + b_off;
  const double* xv = cdata(x.id);
  double* o = data(out.id);
  for (int j = 0; j < rows; ++j) {
    double acc = b ? b[j] : 0.0;
    const double* wr = w + static_cast<size_t>(j) * cols;
    for (int k = 0; k < cols; ++k) acc += wr[k] * xv[k];
    o[j] = acc;
  }
  return out;
}

Var Tape::affine_t(Var src, size_t w_off, int rows, int cols, Var x) {
  if (nodes_[x.id].len != static_cast<size_t>(rows))
    throw config_error("tape: affine_t input length != rows");
  if (w_off + static_cast<size_t>(rows) * cols > nodes_[src.id].len)
    throw config_error("tape: affine_t weights out of range");
  AffineAux aux{src.id, static_cast<uint32_t>(w_off), UINT32_MAX, rows, cols};
  Var out = push(Op::kAffineT, x.id, UINT32_MAX, cols, req(x) || req(src));
  nodes_[out.id].aux = static_cast<uint32_t>(affines_.size());
  affines_.push_back(aux);
  const double* w = cdata(src.id) + w_off;
  const double* xv = cdata(x.id);
  double* o = data(out.id);
  for (int k = 0; k < cols; ++k) o[k] = 0.0;
  for (int j = 0; j < rows; ++j) {
    const double* wr = w + static_cast<size_t>(j) * cols;
    double xj = xv[j];
    for (int k = 0; k < cols; ++k) o[k] += wr[k] * xj;
  }
  return out;
}

Var Tape::dot(Var a, Var b) {
  if (nodes_[a.id].len != nodes_[b.id].len) throw config_error("tape: dot size mismatch");
  Var out = push(Op::kDot, a.id, b.id, 1, req(a) || req(b));
  const double* pa = cdata(a.id);
  const double* pb = cdata(b.id);
  double acc = 0.0;
  for (size_t i = 0; i < nodes_[a.id].len; ++i) acc += pa[i] * pb[i];
  *data(out.id) = acc;
  return out;
}

Var Tape::norm2(Var a) {
  Var out = push(Op::kNorm2, a.id, UINT32_MAX, 1, req(a));
  const double* p = cdata(a.id);
  double acc = 0.0;
  for (size_t i = 0; i < nodes_[a.id].len; ++i) acc += p[i] * p[i];
  *data(out.id) = std::sqrt(acc);
  return out;
}

Var Tape::sum(Var a) {
  Var out = push(Op::kSum, a.id, UINT32_MAX, 1, req(a));
  const double* p = cdata(a.id);
  double acc = 0.0;
  for (size_t i = 0; i < nodes_[a.id].len; ++i) acc += p[i];
  *data(out.id) = acc;
  return out;
}

Var Tape::gather(Var a, std::span<const int> indices) {
  for (int idx : indices)
    if (idx < 0 || static_cast<size_t>(idx) >= nodes_[a.id].len)
      throw config_error("tape: gather index out of range");
  Var out = push(Op::kGather, a.id, UINT32_MAX, indices.size(), req(a));
  nodes_[out.id].aux = static_cast<uint32_t>(ints_.size());
  ints_.insert(ints_.end(), indices.begin(), indices.end());
  const double* p = cdata(a.id);
  double* o = data(out.id);
  for (size_t i = 0; i < indices.size(); ++i) o[i] = p[indices[i]];
  return out;
}

Var Tape::concat(Var a, Var b) {
  size_t la = nodes_[a.id].len, lb = nodes_[b.id].len;
  Var out = push(Op::kConcat, a.id, b.id, la + lb, req(a) || req(b));
  double* o = data(out.id);
  if (la) std::memcpy(o, cdata(a.id), la * sizeof(double));
  if (lb) std::memcpy(o + la, cdata(b.id), lb * sizeof(double));
  return out;
}

Var Tape::wrap_angles(Var a, std::span<const int> dims) {
  size_t l = nodes_[a.id].len;
  for (int d : dims)
    if (d < 0 || static_cast<size_t>(d) >= l) throw config_error("tape: wrap dim out of range");
  Var out = push(Op::kWrap, a.id, UINT32_MAX, l, req(a));
  const double* p = cdata(a.id);
  double* o = data(out.id);
  if (l) std::memcpy(o, p, l * sizeof(double));
  for (int d : dims) o[d] = wrap_pi(p[d]);
  return out;
}

Var Tape::quad_diag(Var a, std::span<const double> weights) {
  if (weights.size() != nodes_[a.id].len) throw config_error("tape: quad_diag size mismatch");
  Var out = push(Op::kQuadDiag, a.id, UINT32_MAX, 1, req(a));
  nodes_[out.id].aux = static_cast<uint32_t>(doubles_.size());
  doubles_.insert(doubles_.end(), weights.begin(), weights.end());
  const double* p = cdata(a.id);
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) acc += weights[i] * p[i] * p[i];
  *data(out.id) = acc;
  return out;
}

double Tape::scalar(Var v) const {
  if (nodes_[v.id].len != 1) throw std::logic_error("tape: scalar() on non-scalar node");
  return *cdata(v.id);
}

void Tape::backward(Var root) {
  const Node& r = nodes_[root.id];
  if (r.len != 1) throw std::logic_error("tape: backward() root must be scalar");
  adj_.assign(buf_.size(), 0.0);
  adj_[r.val] = 1.0;
  for (size_t ni = root.id + 1; ni-- > 0;) {
    const Node& n = nodes_[ni];
    if (!n.requires_grad || n.op == Op::kConst || n.op == Op::kLeaf) continue;
    const double* ad = adj_.data() + n.val;
    const Node* na = n.a == UINT32_MAX ? nullptr : &nodes_[n.a];
    const Node* nb = n.b == UINT32_MAX ? nullptr : &nodes_[n.b];
    double* aa = na ? adj_.data() + na->val : nullptr;
    double* ab = nb ? adj_.data() + nb->val : nullptr;
    const double* va = na ? buf_.data() + na->val : nullptr;
    const double* vb = nb ? buf_.data() + nb->val : nullptr;
    bool ra = na && na->requires_grad;
    bool rb = nb && nb->requires_grad;
    size_t l = n.len;
    switch (n.op) {
      case Op::kAdd: {
        size_t sa = na->len == 1 ? 0 : 1, sb = nb->len == 1 ? 0 : 1;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i * sa] += ad[i];
        if (rb)
          for (size_t i = 0; i < l; ++i) ab[i * sb] += ad[i];
        break;
      }
      case Op::kSub: {
        size_t sa = na->len == 1 ? 0 : 1, sb = nb->len == 1 ? 0 : 1;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i * sa] += ad[i];
        if (rb)
          for (size_t i = 0; i < l; ++i) ab[i * sb] -= ad[i];
        break;
      }
      case Op::kMul: {
        size_t sa = na->len == 1 ? 0 : 1, sb = nb->len == 1 ? 0 : 1;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i * sa] += ad[i] * vb[i * sb];
        if (rb)
          for (size_t i = 0; i < l; ++i) ab[i * sb] += ad[i] * va[i * sa];
        break;
      }
      case Op::kNeg:
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] -= ad[i];
        break;
      case Op::kExp: {
        const double* o = buf_.data() + n.val;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += ad[i] * o[i];
        break;
      }
      case Op::kLog:
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += ad[i] / va[i];
        break;
      case Op::kSqrt: {
        const double* o = buf_.data() + n.val;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += o[i] > 0.0 ? ad[i] * 0.5 / o[i] : 0.0;
        break;
      }
      case Op::kSquare:
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += ad[i] * 2.0 * va[i];
        break;
      case Op::kRecip: {
        const double* o = buf_.data() + n.val;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] -= ad[i] * o[i] * o[i];
        break;
      }
      case Op::kTanh: {
        const double* o = buf_.data() + n.val;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += ad[i] * (1.0 - o[i] * o[i]);
        break;
      }
      case Op::kSigmoid: {
        const double* o = buf_.data() + n.val;
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += ad[i] * o[i] * (1.0 - o[i]);
        break;
      }
      case Op::kSwish:
        if (ra)
          for (size_t i = 0; i < l; ++i) {
            double s = sigmoid_val(va[i]);
            aa[i] += ad[i] * s * (1.0 + va[i] * (1.0 - s));
          }
        break;
      case Op::kSoftplus:
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += ad[i] * sigmoid_val(va[i]);
        break;
      case Op::kTanhGrad:
        if (ra)
          for (size_t i = 0; i < l; ++i) {
            double t = std::tanh(va[i]);
            aa[i] += ad[i] * (-2.0 * t * (1.0 - t * t));
          }
        break;
      case Op::kSigmoidGrad:
        if (ra)
          for (size_t i = 0; i < l; ++i) {
            double s = sigmoid_val(va[i]);
            aa[i] += ad[i] * s * (1.0 - s) * (1.0 - 2.0 * s);
          }
        break;
      case Op::kSwishGrad:
        if (ra)
          for (size_t i = 0; i < l; ++i) {
            double s = sigmoid_val(va[i]);
            double sp = s * (1.0 - s);
            aa[i] += ad[i] * (2.0 * sp + va[i] * sp * (1.0 - 2.0 * s));
          }
        break;
      case Op::kHingeSq:
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += va[i] < 0.0 ? ad[i] * 2.0 * va[i] : 0.0;
        break;
      case Op::kAffine: {
        const AffineAux& x = affines_[n.aux];
        const Node& ns = nodes_[x.src];
        const double* w = buf_.data() + ns.val + x.w_off;
        double* aw = adj_.data() + ns.val + x.w_off;
        bool rs = ns.requires_grad;
        for (int j = 0; j < x.rows; ++j) {
          double g = ad[j];
          if (g == 0.0) continue;
          const double* wr = w + static_cast<size_t>(j) * x.cols;
          if (ra)
            for (int k = 0; k < x.cols; ++k) aa[k] += g * wr[k];
          if (rs) {
            double* awr = aw + static_cast<size_t>(j) * x.cols;
            for (int k = 0; k < x.cols; ++k) awr[k] += g * va[k];
            if (x.b_off != UINT32_MAX) adj_[ns.val + x.b_off + j] += g;
          }
        }
        break;
      }
      case Op::kAffineT: {
        const AffineAux& x = affines_[n.aux];
        const Node& ns = nodes_[x.src];
        const double* w = buf_.data() + ns.val + x.w_off;
        double* aw = adj_.data() + ns.val + x.w_off;
        bool rs = ns.requires_grad;
        for (int j = 0; j < x.rows; ++j) {
          const double* wr = w + static_cast<size_t>(j) * x.cols;
          double accum = 0.0;
          for (int k = 0; k < x.cols; ++k) accum += wr[k] * ad[k];
          if (ra) aa[j] += accum;
          if (rs) {
            double* awr = aw + static_cast<size_t>(j) * x.cols;
            double xj = va[j];
            for (int k = 0; k < x.cols; ++k) awr[k] += xj * ad[k];
          }
        }
        break;
      }
      case Op::kDot: {
        double g = ad[0];
        if (ra)
          for (size_t i = 0; i < na->len; ++i) aa[i] += g * vb[i];
        if (rb)
          for (size_t i = 0; i < na->len; ++i) ab[i] += g * va[i];
        break;
      }
      case Op::kNorm2: {
        double o = buf_[n.val];
        if (ra && o > 0.0) {
          double g = ad[0] / o;
          for (size_t i = 0; i < na->len; ++i) aa[i] += g * va[i];
        }
        break;
      }
      case Op::kSum:
        if (ra)
          for (size_t i = 0; i < na->len; ++i) aa[i] += ad[0];
        break;
      case Op::kGather:
        if (ra) {
          const int* idx = ints_.data() + n.aux;
          for (size_t i = 0; i < l; ++i) aa[idx[i]] += ad[i];
        }
        break;
      case Op::kConcat:
        if (ra)
          for (size_t i = 0; i < na->len; ++i) aa[i] += ad[i];
        if (rb)
          for (size_t i = 0; i < nb->len; ++i) ab[i] += ad[na->len + i];
        break;
      case Op::kWrap:
        if (ra)
          for (size_t i = 0; i < l; ++i) aa[i] += ad[i];
        break;
      case Op::kQuadDiag: {
        if (ra) {
          const double* w = doubles_.data() + n.aux;
          double g = ad[0];
          for (size_t i = 0; i < na->len; ++i) aa[i] += g * 2.0 * w[i] * va[i];
        }
        break;
      }
      case Op::kConst:
      case Op::kLeaf:
        break;
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  buf_.clear();
  adj_.clear();
  affines_.clear();
  ints_.clear();
  doubles_.clear();
}

Vec grad(const std::function<Var(Tape&, Var)>& build, std::span<const double> params) {
  Tape tape;
  Var p = tape.leaf(params);
  Var out = build(tape, p);
  if (tape.size(out) != 1) throw std::logic_error("grad: program output must be scalar");
  tape.backward(out);
  auto a = tape.adjoint(p);
  return Vec(a.begin(), a.end());
}

}  // namespace nsde
