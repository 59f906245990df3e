#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsf {

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

// Dense row-major tensor. The buffer is shared so parameter tensors can be
// captured by a Graph without copying; mutating data in place is visible to
// every holder.
template <typename R>
struct Tensor {
  std::vector<int64_t> shape;
  std::shared_ptr<std::vector<R>> buf;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::shared_ptr<std::vector<R>> b, bool rg = false)
      : shape(std::move(s)), buf(std::move(b)), requires_grad(rg) {
    validate();
  }

  static Tensor zeros(std::vector<int64_t> s) {
    auto b = std::make_shared<std::vector<R>>(shape_numel(s), R(0));
    return Tensor(std::move(s), std::move(b));
  }
  static Tensor full(std::vector<int64_t> s, R v) {
    auto b = std::make_shared<std::vector<R>>(shape_numel(s), v);
    return Tensor(std::move(s), std::move(b));
  }
  static Tensor from(std::vector<int64_t> s, std::vector<R> v) {
    auto b = std::make_shared<std::vector<R>>(std::move(v));
    return Tensor(std::move(s), std::move(b));
  }
  static Tensor scalar(R v) { return full({1}, v); }

  void validate() const {
    if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
    for (int64_t d : shape)
      if (d < 1) throw std::invalid_argument("tensor: dims must be >= 1, got " + shape_str(shape));
    if (!buf || static_cast<int64_t>(buf->size()) != shape_numel(shape))
      throw std::invalid_argument("tensor: buffer size does not match shape " + shape_str(shape));
  }

  int64_t numel() const { return shape_numel(shape); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  R* data() { return buf->data(); }
  const R* data() const { return buf->data(); }
  R& operator[](int64_t i) { return (*buf)[static_cast<size_t>(i)]; }
  const R& operator[](int64_t i) const { return (*buf)[static_cast<size_t>(i)]; }

  // Deep copy (fresh buffer).
  Tensor clone() const {
    auto b = std::make_shared<std::vector<R>>(*buf);
    return Tensor(shape, std::move(b), requires_grad);
  }

  template <typename S>
  Tensor<S> cast() const {
    auto b = std::make_shared<std::vector<S>>(buf->size());
    for (size_t i = 0; i < buf->size(); ++i) (*b)[i] = static_cast<S>((*buf)[i]);
    return Tensor<S>(shape, std::move(b), requires_grad);
  }
};

}  // namespace nsf
