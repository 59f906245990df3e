#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "nsf/graph.hpp"

namespace nsf {

template <typename R>
struct GradCheckReport {
  R max_rel_error = R(0);
  int64_t worst_coordinate = -1;
  R worst_analytic = R(0);
  R worst_numeric = R(0);
};

// Compares reverse-mode gradients against central finite differences:
//   max over coordinates of |analytic - fd| / max(|analytic|, |fd|, 1e-8).
// `build` records a scalar output from the given input id; the recorded tape
// is then replayed at perturbed points, so the comparison stays within the
// piecewise-smooth region of the recording point. Run with R = double.
template <typename R, typename BuildFn>
GradCheckReport<R> check_gradients(BuildFn&& build, const Tensor<R>& point, R step) {
  if (step <= R(0)) throw std::invalid_argument("check_gradients: step must be > 0");
  Tensor<R> x = point.clone();
  Graph<R> g;
  const typename Graph<R>::Id in = g.param(x);
  const typename Graph<R>::Id out = build(g, in);
  if (g.value(out).numel() != 1)
    throw std::invalid_argument("check_gradients: function output is not scalar");
  g.backward(out);
  Tensor<R> analytic = g.grad_tensor(in);

  GradCheckReport<R> report;
  const int64_t n = x.numel();
  for (int64_t j = 0; j < n; ++j) {
    const R saved = x[j];
    x[j] = saved + step;
    g.replay();
    const R fp = g.value(out)[0];
    x[j] = saved - step;
    g.replay();
    const R fm = g.value(out)[0];
    x[j] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("check_gradients: non-finite value while probing coordinate " +
                               std::to_string(j));
    const R fd = (fp - fm) / (R(2) * step);
    const R a = analytic[j];
    const R denom = std::max({std::abs(a), std::abs(fd), R(1e-8)});
    const R rel = std::abs(a - fd) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = j;
      report.worst_analytic = a;
      report.worst_numeric = fd;
    }
  }
  g.replay();  // restore values at the original point
  return report;
}

// Variant for pre-built graphs: the leaf shares `storage`'s buffer, so
// probing mutates the tensor in place and replays the tape. Useful when the
// scalar function involves a whole registered model and only one parameter
// tensor is being checked.
template <typename R>
GradCheckReport<R> check_gradients_graph(Graph<R>& g, typename Graph<R>::Id output,
                                         typename Graph<R>::Id param, Tensor<R>& storage, R step) {
  if (step <= R(0)) throw std::invalid_argument("check_gradients: step must be > 0");
  if (g.value(output).numel() != 1)
    throw std::invalid_argument("check_gradients: function output is not scalar");
  if (g.value(param).data() != storage.data())
    throw std::invalid_argument("check_gradients: param node does not share the given storage");
  g.backward(output);
  Tensor<R> analytic = g.grad_tensor(param);

  GradCheckReport<R> report;
  const int64_t n = storage.numel();
  for (int64_t j = 0; j < n; ++j) {
    const R saved = storage[j];
    storage[j] = saved + step;
    g.replay();
    const R fp = g.value(output)[0];
    storage[j] = saved - step;
    g.replay();
    const R fm = g.value(output)[0];
    storage[j] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("check_gradients: non-finite value while probing coordinate " +
                               std::to_string(j));
    const R fd = (fp - fm) / (R(2) * step);
    const R a = analytic[j];
    const R denom = std::max({std::abs(a), std::abs(fd), R(1e-8)});
    const R rel = std::abs(a - fd) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = j;
      report.worst_analytic = a;
      report.worst_numeric = fd;
    }
  }
  g.replay();
  return report;
}

}  // namespace nsf
