#include "nsf/graph.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <Eigen/Core>

#include "nsf/runtime.hpp"

namespace nsf {

namespace {

template <typename R>
using MatRM = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename R>
using MapRM = Eigen::Map<MatRM<R>>;
template <typename R>
using CMapRM = Eigen::Map<const MatRM<R>>;

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParam: return "param";
    case Op::kAdd: return "add";
    case Op::kSub: return "subtract";
    case Op::kMul: return "multiply";
    case Op::kDiv: return "divide";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kRsubScalar: return "rsub_scalar";
    case Op::kMatmul: return "matmul";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kAbs: return "abs";
    case Op::kPower: return "power";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kGather: return "gather";
    case Op::kGatherRows: return "gather_rows";
    case Op::kLerp: return "lerp";
    case Op::kStopGradient: return "stop_gradient";
    case Op::kConcatCols: return "concat_cols";
  }
  return "?";
}

[[noreturn]] void shape_error(Op op, const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) +
                              " vs " + shape_str(b));
}

Broadcast classify(Op op, const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  if (a == b) return Broadcast::kFull;
  if (a.size() == 2 && b.size() == 1) {
    if (b[0] == a[0]) return Broadcast::kRow;
    if (b[0] == a[1] && op == Op::kAdd) return Broadcast::kBias;
  }
  shape_error(op, a, b);
}

// Deterministic reduction: fixed binary-tree split, independent of worker
// count and batch partitioning.
template <typename R>
R pairwise_sum(const R* x, int64_t n) {
  if (n <= 64) {
    R s = R(0);
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const int64_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

}  // namespace

template <typename R>
typename Graph<R>::Id Graph<R>::push(Node n) {
  eval(n);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename R>
typename Graph<R>::Id Graph<R>::constant(Tensor<R> t) {
  t.validate();
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(t);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename R>
typename Graph<R>::Id Graph<R>::param(Tensor<R> t) {
  t.validate();
  Node n;
  n.op = Op::kParam;
  n.value = std::move(t);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename R>
typename Graph<R>::Id Graph<R>::add(Id a, Id b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.bc = classify(Op::kAdd, value(a).shape, value(b).shape);
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::sub(Id a, Id b) {
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.bc = classify(Op::kSub, value(a).shape, value(b).shape);
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::mul(Id a, Id b) {
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.bc = classify(Op::kMul, value(a).shape, value(b).shape);
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::div(Id a, Id b) {
  Node n;
  n.op = Op::kDiv;
  n.a = a;
  n.b = b;
  n.bc = classify(Op::kDiv, value(a).shape, value(b).shape);
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::add_scalar(Id a, R s) {
  Node n;
  n.op = Op::kAddScalar;
  n.a = a;
  n.scalar = s;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::mul_scalar(Id a, R s) {
  Node n;
  n.op = Op::kMulScalar;
  n.a = a;
  n.scalar = s;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::rsub_scalar(R s, Id a) {
  Node n;
  n.op = Op::kRsubScalar;
  n.a = a;
  n.scalar = s;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::matmul(Id x, Id w) {
  const auto& xs = value(x).shape;
  const auto& ws = value(w).shape;
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) shape_error(Op::kMatmul, xs, ws);
  Node n;
  n.op = Op::kMatmul;
  n.a = x;
  n.b = w;
  n.needs_grad = needs_grad(x) || needs_grad(w);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::relu(Id a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::sigmoid(Id a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::abs(Id a) {
  Node n;
  n.op = Op::kAbs;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::power(Id a, R exponent) {
  Node n;
  n.op = Op::kPower;
  n.a = a;
  n.scalar = exponent;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::sum(Id a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::mean(Id a) {
  Node n;
  n.op = Op::kMean;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::gather(Id src, std::shared_ptr<std::vector<int64_t>> idx,
                                       std::vector<int64_t> out_shape) {
  if (!idx) throw std::invalid_argument("gather: null index array");
  if (static_cast<int64_t>(idx->size()) != shape_numel(out_shape))
    throw std::invalid_argument("gather: index count " + std::to_string(idx->size()) +
                                " does not match output shape " + shape_str(out_shape));
  const int64_t limit = value(src).numel();
  for (int64_t i : *idx)
    if (i < 0 || i >= limit)
      throw std::out_of_range("gather: index " + std::to_string(i) + " outside source of " +
                              std::to_string(limit) + " elements");
  Node n;
  n.op = Op::kGather;
  n.a = src;
  n.idx = std::move(idx);
  n.needs_grad = needs_grad(src);
  n.value = Tensor<R>::zeros(std::move(out_shape));
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::gather_rows(Id table, std::shared_ptr<std::vector<int32_t>> row_idx) {
  if (!row_idx) throw std::invalid_argument("gather_rows: null index array");
  const auto& ts = value(table).shape;
  if (ts.size() != 2) throw std::invalid_argument("gather_rows: table must be 2-D, got " + shape_str(ts));
  for (int32_t r : *row_idx)
    if (r < 0 || r >= ts[0])
      throw std::out_of_range("gather_rows: row " + std::to_string(r) + " outside table of " +
                              std::to_string(ts[0]) + " rows");
  Node n;
  n.op = Op::kGatherRows;
  n.a = table;
  n.rows = std::move(row_idx);
  n.needs_grad = needs_grad(table);
  n.value = Tensor<R>::zeros({static_cast<int64_t>(n.rows->size()), ts[1]});
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::lerp(Id a, Id b, Id w) {
  if (value(a).shape != value(b).shape) shape_error(Op::kLerp, value(a).shape, value(b).shape);
  Node n;
  n.op = Op::kLerp;
  n.a = a;
  n.b = b;
  n.c = w;
  n.bc = classify(Op::kLerp, value(a).shape, value(w).shape);
  if (n.bc == Broadcast::kBias) shape_error(Op::kLerp, value(a).shape, value(w).shape);
  n.needs_grad = needs_grad(a) || needs_grad(b) || needs_grad(w);
  return push(std::move(n));
}

template <typename R>
typename Graph<R>::Id Graph<R>::stop_gradient(Id a) {
  Node n;
  n.op = Op::kStopGradient;
  n.a = a;
  n.needs_grad = false;
  n.value = value(a);  // shares the buffer; forward is the identity
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename R>
typename Graph<R>::Id Graph<R>::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int64_t rows = -1, cols = 0;
  for (Id p : parts) {
    const auto& s = value(p).shape;
    const int64_t r = s[0];
    const int64_t c = s.size() == 1 ? 1 : (s.size() == 2 ? s[1] : -1);
    if (c < 0 || (rows >= 0 && r != rows))
      shape_error(Op::kConcatCols, value(parts[0]).shape, s);
    rows = r;
    cols += c;
  }
  Node n;
  n.op = Op::kConcatCols;
  n.list = parts;
  for (Id p : parts) n.needs_grad = n.needs_grad || needs_grad(p);
  n.value = Tensor<R>::zeros({rows, cols});
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Forward kernels

template <typename R>
void Graph<R>::eval(Node& n) {
  const int nt = runtime::threads();
  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
    case Op::kStopGradient:
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const Tensor<R>& a = value(n.a);
      const Tensor<R>& b = value(n.b);
      if (!n.value.buf) n.value = Tensor<R>::zeros(a.shape);
      R* out = n.value.data();
      const R* pa = a.data();
      const R* pb = b.data();
      const int64_t total = a.numel();
      const int64_t cols = n.bc == Broadcast::kFull ? 1 : a.shape[1];
      const Op op = n.op;
      const Broadcast bc = n.bc;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
      for (int64_t i = 0; i < total; ++i) {
        R rhs;
        switch (bc) {
          case Broadcast::kRow: rhs = pb[i / cols]; break;
          case Broadcast::kBias: rhs = pb[i % cols]; break;
          default: rhs = pb[i];
        }
        switch (op) {
          case Op::kAdd: out[i] = pa[i] + rhs; break;
          case Op::kSub: out[i] = pa[i] - rhs; break;
          case Op::kMul: out[i] = pa[i] * rhs; break;
          default: out[i] = pa[i] / rhs; break;
        }
      }
      return;
    }
    case Op::kAddScalar:
    case Op::kMulScalar:
    case Op::kRsubScalar:
    case Op::kRelu:
    case Op::kSigmoid:
    case Op::kAbs:
    case Op::kPower: {
      const Tensor<R>& a = value(n.a);
      if (!n.value.buf) n.value = Tensor<R>::zeros(a.shape);
      R* out = n.value.data();
      const R* pa = a.data();
      const int64_t total = a.numel();
      const R s = n.scalar;
      const Op op = n.op;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
      for (int64_t i = 0; i < total; ++i) {
        const R x = pa[i];
        switch (op) {
          case Op::kAddScalar: out[i] = x + s; break;
          case Op::kMulScalar: out[i] = x * s; break;
          case Op::kRsubScalar: out[i] = s - x; break;
          case Op::kRelu: out[i] = x > R(0) ? x : R(0); break;
          case Op::kSigmoid: out[i] = R(1) / (R(1) + std::exp(-x)); break;
          case Op::kAbs: out[i] = std::abs(x); break;
          default: out[i] = s == R(2) ? x * x : std::pow(x, s); break;
        }
      }
      return;
    }
    case Op::kMatmul: {
      const Tensor<R>& x = value(n.a);
      const Tensor<R>& w = value(n.b);
      if (!n.value.buf) n.value = Tensor<R>::zeros({x.shape[0], w.shape[1]});
      CMapRM<R> mx(x.data(), x.shape[0], x.shape[1]);
      CMapRM<R> mw(w.data(), w.shape[0], w.shape[1]);
      MapRM<R> my(n.value.data(), x.shape[0], w.shape[1]);
      my.noalias() = mx * mw;
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      const Tensor<R>& a = value(n.a);
      if (!n.value.buf) n.value = Tensor<R>::zeros({1});
      R s = pairwise_sum(a.data(), a.numel());
      if (n.op == Op::kMean) s /= static_cast<R>(a.numel());
      n.value.data()[0] = s;
      return;
    }
    case Op::kGather: {
      const R* src = value(n.a).data();
      R* out = n.value.data();
      const int64_t* idx = n.idx->data();
      const int64_t total = n.value.numel();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
      for (int64_t i = 0; i < total; ++i) out[i] = src[idx[i]];
      return;
    }
    case Op::kGatherRows: {
      const Tensor<R>& t = value(n.a);
      const int64_t cols = t.shape[1];
      const int32_t* rows = n.rows->data();
      const int64_t nrows = static_cast<int64_t>(n.rows->size());
      const R* src = t.data();
      R* out = n.value.data();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && nrows > 8192)
      for (int64_t i = 0; i < nrows; ++i)
        std::memcpy(out + i * cols, src + static_cast<int64_t>(rows[i]) * cols,
                    sizeof(R) * static_cast<size_t>(cols));
      return;
    }
    case Op::kLerp: {
      const Tensor<R>& a = value(n.a);
      const Tensor<R>& b = value(n.b);
      const Tensor<R>& w = value(n.c);
      if (!n.value.buf) n.value = Tensor<R>::zeros(a.shape);
      R* out = n.value.data();
      const R* pa = a.data();
      const R* pb = b.data();
      const R* pw = w.data();
      const int64_t total = a.numel();
      const int64_t cols = n.bc == Broadcast::kFull ? 1 : a.shape[1];
      const bool row = n.bc == Broadcast::kRow;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
      for (int64_t i = 0; i < total; ++i) {
        const R wi = row ? pw[i / cols] : pw[i];
        out[i] = pa[i] + wi * (pb[i] - pa[i]);
      }
      return;
    }
    case Op::kConcatCols: {
      const int64_t rows = n.value.shape[0];
      const int64_t out_cols = n.value.shape[1];
      R* out = n.value.data();
      int64_t col0 = 0;
      for (Id p : n.list) {
        const Tensor<R>& part = value(p);
        const int64_t c = part.ndim() == 1 ? 1 : part.shape[1];
        const R* src = part.data();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && rows > 16384)
        for (int64_t r = 0; r < rows; ++r)
          std::memcpy(out + r * out_cols + col0, src + r * c, sizeof(R) * static_cast<size_t>(c));
        col0 += c;
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Replay / leaves

template <typename R>
void Graph<R>::set_leaf(Id id, const Tensor<R>& t) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.op != Op::kConstant && n.op != Op::kParam)
    throw std::invalid_argument("set_leaf: node is not a leaf");
  if (t.shape != n.value.shape)
    shape_error(n.op, n.value.shape, t.shape);
  n.value = t;
}

template <typename R>
void Graph<R>::replay() {
  for (Node& n : nodes_) eval(n);
  // stop_gradient shares its input buffer only while that buffer is stable;
  // refresh the alias in case a leaf swap replaced the input's storage.
  for (Node& n : nodes_)
    if (n.op == Op::kStopGradient) n.value = nodes_[static_cast<size_t>(n.a)].value;
}

// ---------------------------------------------------------------------------
// Backward

template <typename R>
std::vector<R>& Graph<R>::grad_buf(Id id) {
  auto& g = grads_[static_cast<size_t>(id)];
  if (!has_grad_[static_cast<size_t>(id)]) {
    g.assign(static_cast<size_t>(value(id).numel()), R(0));
    has_grad_[static_cast<size_t>(id)] = 1;
  }
  return g;
}

template <typename R>
const std::vector<R>* Graph<R>::grad(Id id) const {
  if (grads_.empty() || !has_grad_[static_cast<size_t>(id)]) return nullptr;
  return &grads_[static_cast<size_t>(id)];
}

template <typename R>
Tensor<R> Graph<R>::grad_tensor(Id id) const {
  Tensor<R> out = Tensor<R>::zeros(value(id).shape);
  if (const auto* g = grad(id))
    std::memcpy(out.data(), g->data(), sizeof(R) * g->size());
  return out;
}

template <typename R>
void Graph<R>::backward(Id output) {
  if (value(output).numel() != 1)
    throw std::invalid_argument(
        "backward: gradient of a non-scalar output requires an explicit seed");
  backward(output, Tensor<R>::scalar(R(1)));
}

template <typename R>
void Graph<R>::backward(Id output, const Tensor<R>& seed) {
  if (seed.shape != value(output).shape)
    shape_error(Op::kSum, value(output).shape, seed.shape);
  grads_.assign(nodes_.size(), {});
  has_grad_.assign(nodes_.size(), 0);
  grad_buf(output);
  std::memcpy(grads_[static_cast<size_t>(output)].data(), seed.data(),
              sizeof(R) * static_cast<size_t>(seed.numel()));
  for (Id i = output; i >= 0; --i) {
    const Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || !has_grad_[static_cast<size_t>(i)]) continue;
    backprop(i);
  }
}

template <typename R>
void Graph<R>::backprop(Id id) {
  const Node& n = nodes_[static_cast<size_t>(id)];
  const std::vector<R>& gout = grads_[static_cast<size_t>(id)];
  const int nt = runtime::threads();

  auto needs = [&](Id in) { return in >= 0 && nodes_[static_cast<size_t>(in)].needs_grad; };

  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
    case Op::kStopGradient:
      return;

    case Op::kAdd:
    case Op::kSub: {
      const R sign = n.op == Op::kSub ? R(-1) : R(1);
      const int64_t total = static_cast<int64_t>(gout.size());
      if (needs(n.a)) {
        std::vector<R>& ga = grad_buf(n.a);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
        for (int64_t i = 0; i < total; ++i) ga[i] += gout[i];
      }
      if (needs(n.b)) {
        std::vector<R>& gb = grad_buf(n.b);
        const int64_t cols = n.bc == Broadcast::kFull ? 1 : value(n.a).shape[1];
        switch (n.bc) {
          case Broadcast::kRow:
            for (int64_t i = 0; i < total; ++i) gb[i / cols] += sign * gout[i];
            break;
          case Broadcast::kBias:
            for (int64_t i = 0; i < total; ++i) gb[i % cols] += sign * gout[i];
            break;
          default:
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
            for (int64_t i = 0; i < total; ++i) gb[i] += sign * gout[i];
        }
      }
      return;
    }

    case Op::kMul:
    case Op::kDiv: {
      const Tensor<R>& a = value(n.a);
      const Tensor<R>& b = value(n.b);
      const int64_t total = a.numel();
      const int64_t cols = n.bc == Broadcast::kFull ? 1 : a.shape[1];
      auto rhs_at = [&](int64_t i) -> R {
        switch (n.bc) {
          case Broadcast::kRow: return b.data()[i / cols];
          case Broadcast::kBias: return b.data()[i % cols];
          default: return b.data()[i];
        }
      };
      if (needs(n.a)) {
        std::vector<R>& ga = grad_buf(n.a);
        if (n.op == Op::kMul) {
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
          for (int64_t i = 0; i < total; ++i) ga[i] += gout[i] * rhs_at(i);
        } else {
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
          for (int64_t i = 0; i < total; ++i) ga[i] += gout[i] / rhs_at(i);
        }
      }
      if (needs(n.b)) {
        std::vector<R>& gb = grad_buf(n.b);
        // reductions over broadcast dims stay serial for a fixed order
        for (int64_t i = 0; i < total; ++i) {
          const int64_t j = n.bc == Broadcast::kRow   ? i / cols
                            : n.bc == Broadcast::kBias ? i % cols
                                                       : i;
          if (n.op == Op::kMul) {
            gb[j] += gout[i] * a.data()[i];
          } else {
            const R bv = rhs_at(i);
            gb[j] -= gout[i] * a.data()[i] / (bv * bv);
          }
        }
      }
      return;
    }

    case Op::kAddScalar:
    case Op::kMulScalar:
    case Op::kRsubScalar:
    case Op::kRelu:
    case Op::kSigmoid:
    case Op::kAbs:
    case Op::kPower: {
      if (!needs(n.a)) return;
      std::vector<R>& ga = grad_buf(n.a);
      const R* x = value(n.a).data();
      const R* y = n.value.data();
      const int64_t total = static_cast<int64_t>(gout.size());
      const R s = n.scalar;
      const Op op = n.op;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
      for (int64_t i = 0; i < total; ++i) {
        R d;
        switch (op) {
          case Op::kAddScalar: d = R(1); break;
          case Op::kMulScalar: d = s; break;
          case Op::kRsubScalar: d = R(-1); break;
          case Op::kRelu: d = x[i] > R(0) ? R(1) : R(0); break;
          case Op::kSigmoid: d = y[i] * (R(1) - y[i]); break;
          case Op::kAbs: d = x[i] > R(0) ? R(1) : (x[i] < R(0) ? R(-1) : R(0)); break;
          default:
            d = s == R(2) ? R(2) * x[i] : s * std::pow(x[i], s - R(1));
        }
        ga[i] += gout[i] * d;
      }
      return;
    }

    case Op::kMatmul: {
      const Tensor<R>& x = value(n.a);
      const Tensor<R>& w = value(n.b);
      const int64_t N = x.shape[0], I = x.shape[1], O = w.shape[1];
      CMapRM<R> gy(gout.data(), N, O);
      if (needs(n.a)) {
        MapRM<R> gx(grad_buf(n.a).data(), N, I);
        CMapRM<R> mw(w.data(), I, O);
        gx.noalias() += gy * mw.transpose();
      }
      if (needs(n.b)) {
        MapRM<R> gw(grad_buf(n.b).data(), I, O);
        CMapRM<R> mx(x.data(), N, I);
        gw.noalias() += mx.transpose() * gy;
      }
      return;
    }

    case Op::kSum:
    case Op::kMean: {
      if (!needs(n.a)) return;
      std::vector<R>& ga = grad_buf(n.a);
      const int64_t total = static_cast<int64_t>(ga.size());
      const R g = n.op == Op::kMean ? gout[0] / static_cast<R>(total) : gout[0];
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
      for (int64_t i = 0; i < total; ++i) ga[i] += g;
      return;
    }

    case Op::kGather: {
      if (!needs(n.a)) return;
      std::vector<R>& ga = grad_buf(n.a);
      const int64_t* idx = n.idx->data();
      const int64_t total = static_cast<int64_t>(gout.size());
      // scatter-accumulate; serial so repeated indices sum in a fixed order
      for (int64_t i = 0; i < total; ++i) ga[idx[i]] += gout[i];
      return;
    }

    case Op::kGatherRows: {
      if (!needs(n.a)) return;
      std::vector<R>& ga = grad_buf(n.a);
      const int64_t cols = value(n.a).shape[1];
      const int32_t* rows = n.rows->data();
      const int64_t nrows = static_cast<int64_t>(n.rows->size());
      for (int64_t i = 0; i < nrows; ++i) {
        R* dst = ga.data() + static_cast<int64_t>(rows[i]) * cols;
        const R* src = gout.data() + i * cols;
        for (int64_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
      return;
    }

    case Op::kLerp: {
      const Tensor<R>& a = value(n.a);
      const Tensor<R>& b = value(n.b);
      const Tensor<R>& w = value(n.c);
      const int64_t total = a.numel();
      const int64_t cols = n.bc == Broadcast::kFull ? 1 : a.shape[1];
      const bool row = n.bc == Broadcast::kRow;
      auto w_at = [&](int64_t i) { return row ? w.data()[i / cols] : w.data()[i]; };
      if (needs(n.a)) {
        std::vector<R>& ga = grad_buf(n.a);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
        for (int64_t i = 0; i < total; ++i) ga[i] += gout[i] * (R(1) - w_at(i));
      }
      if (needs(n.b)) {
        std::vector<R>& gb = grad_buf(n.b);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && total > 16384)
        for (int64_t i = 0; i < total; ++i) gb[i] += gout[i] * w_at(i);
      }
      if (needs(n.c)) {
        std::vector<R>& gw = grad_buf(n.c);
        for (int64_t i = 0; i < total; ++i) {
          const int64_t j = row ? i / cols : i;
          gw[j] += gout[i] * (b.data()[i] - a.data()[i]);
        }
      }
      return;
    }

    case Op::kConcatCols: {
      const int64_t rows = n.value.shape[0];
      const int64_t out_cols = n.value.shape[1];
      int64_t col0 = 0;
      for (Id p : n.list) {
        const Tensor<R>& part = value(p);
        const int64_t c = part.ndim() == 1 ? 1 : part.shape[1];
        if (needs(p)) {
          std::vector<R>& gp = grad_buf(p);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && rows > 16384)
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t k = 0; k < c; ++k) gp[r * c + k] += gout[r * out_cols + col0 + k];
        }
        col0 += c;
      }
      return;
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace nsf
