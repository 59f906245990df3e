#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nsf/graph.hpp"
#include "nsf/rng.hpp"
#include "nsf/tensor.hpp"

namespace nsf {

// ReLU MLP: hidden layers are affine + ReLU, the final layer is affine only;
// task-specific squashing (sigmoid for color/alpha) is applied by the caller.
template <typename R>
struct MlpWeights {
  std::vector<Tensor<R>> weights;  // [in, out] per layer
  std::vector<Tensor<R>> biases;   // [out] per layer

  int64_t input_dim() const { return weights.front().shape[0]; }
  int64_t output_dim() const { return weights.back().shape[1]; }
  size_t layer_count() const { return weights.size(); }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& w : weights) n += w.numel();
    for (const auto& b : biases) n += b.numel();
    return n;
  }
};

// He-uniform init on hidden layers; the final layer is scaled by 0.1 so
// freshly initialized flow/color heads start near zero.
template <typename R>
MlpWeights<R> mlp_init(const std::vector<int64_t>& dims, uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("mlp_init: need at least input and output dims");
  for (int64_t d : dims)
    if (d < 1) throw std::invalid_argument("mlp_init: dims must be >= 1");
  Rng rng(seed);
  MlpWeights<R> mlp;
  for (size_t layer = 0; layer + 1 < dims.size(); ++layer) {
    const int64_t fan_in = dims[layer];
    const int64_t fan_out = dims[layer + 1];
    const bool last = layer + 2 == dims.size();
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    const double scale = last ? 0.1 : 1.0;
    Tensor<R> w = Tensor<R>::zeros({fan_in, fan_out});
    for (int64_t i = 0; i < w.numel(); ++i)
      w[i] = static_cast<R>(scale * rng.uniform(-limit, limit));
    w.requires_grad = true;
    Tensor<R> b = Tensor<R>::zeros({fan_out});
    b.requires_grad = true;
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(std::move(b));
  }
  return mlp;
}

// Graph ids of one MLP's parameters, in layer order.
template <typename R>
struct MlpIds {
  std::vector<typename Graph<R>::Id> weights;
  std::vector<typename Graph<R>::Id> biases;
};

template <typename R>
MlpIds<R> mlp_params(Graph<R>& g, MlpWeights<R>& mlp) {
  MlpIds<R> ids;
  for (auto& w : mlp.weights) ids.weights.push_back(g.param(w));
  for (auto& b : mlp.biases) ids.biases.push_back(g.param(b));
  return ids;
}

template <typename R>
typename Graph<R>::Id mlp_forward(Graph<R>& g, const MlpIds<R>& ids,
                                  typename Graph<R>::Id features) {
  if (ids.weights.empty()) throw std::invalid_argument("mlp_forward: empty network");
  auto x = features;
  for (size_t layer = 0; layer < ids.weights.size(); ++layer) {
    x = g.add(g.matmul(x, ids.weights[layer]), ids.biases[layer]);
    if (layer + 1 < ids.weights.size()) x = g.relu(x);
  }
  return x;
}

}  // namespace nsf
