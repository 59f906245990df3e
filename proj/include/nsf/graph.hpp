#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "nsf/tensor.hpp"

namespace nsf {

enum class Op : uint8_t {
  kConstant,
  kParam,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAddScalar,
  kMulScalar,
  kRsubScalar,  // scalar - x
  kMatmul,
  kRelu,
  kSigmoid,
  kAbs,
  kPower,
  kSum,
  kMean,
  kGather,      // flat-index read, scatter-add backward
  kGatherRows,  // row read from a [R,C] table, row scatter-add backward
  kLerp,        // a + w*(b-a)
  kStopGradient,
  kConcatCols,
};

// Shape pairing for binary elementwise ops: equal shapes, [N,C] op [N]
// (per-row value), or [N,C] op [C] (bias).
enum class Broadcast : uint8_t { kNone, kFull, kRow, kBias };

// Reverse-mode tape over the fixed primitive set the scene model needs.
// Recording is define-by-run: every op evaluates immediately and appends a
// node, so node order is a topological order by construction and backward()
// walks it in exact reverse. replay() recomputes the recorded program after
// leaf values change (integer gather/choice data stays frozen, which keeps a
// replay valid within the piecewise-smooth region of the recording point).
template <typename R>
class Graph {
 public:
  using Id = int32_t;

  struct Node {
    Op op;
    Broadcast bc = Broadcast::kNone;
    Id a = -1, b = -1, c = -1;
    std::vector<Id> list;  // concat inputs
    R scalar = R(0);
    std::shared_ptr<std::vector<int64_t>> idx;   // kGather
    std::shared_ptr<std::vector<int32_t>> rows;  // kGatherRows
    Tensor<R> value;
    bool needs_grad = false;
  };

  Graph() = default;

  // Leaves. Both share the tensor's buffer; params participate in backward.
  Id constant(Tensor<R> t);
  Id param(Tensor<R> t);

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id div(Id a, Id b);
  Id add_scalar(Id a, R s);
  Id mul_scalar(Id a, R s);
  Id rsub_scalar(R s, Id a);
  Id matmul(Id x, Id w);
  Id relu(Id a);
  Id sigmoid(Id a);
  Id abs(Id a);
  Id power(Id a, R exponent);
  Id sum(Id a);
  Id mean(Id a);
  Id gather(Id src, std::shared_ptr<std::vector<int64_t>> idx, std::vector<int64_t> out_shape);
  Id gather_rows(Id table, std::shared_ptr<std::vector<int32_t>> row_idx);
  Id lerp(Id a, Id b, Id w);
  Id stop_gradient(Id a);
  Id concat_cols(const std::vector<Id>& parts);

  const Tensor<R>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Node& node(Id id) const { return nodes_[static_cast<size_t>(id)]; }
  bool needs_grad(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  size_t size() const { return nodes_.size(); }

  // Swap a leaf's value (shape-checked), then replay() to refresh the tape.
  void set_leaf(Id id, const Tensor<R>& t);
  void replay();

  // Reverse pass seeded with 1 on a scalar output, or an explicit seed.
  void backward(Id output);
  void backward(Id output, const Tensor<R>& seed);

  // Gradient of the seeded output w.r.t. node `id`; nullptr when no gradient
  // flowed there. Valid until the graph is destroyed or backward reruns.
  const std::vector<R>* grad(Id id) const;
  Tensor<R> grad_tensor(Id id) const;  // zeros when no gradient flowed

 private:
  Id push(Node n);
  void eval(Node& n);
  void backprop(Id id);
  std::vector<R>& grad_buf(Id id);

  std::vector<Node> nodes_;
  std::vector<std::vector<R>> grads_;
  std::vector<uint8_t> has_grad_;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace nsf
