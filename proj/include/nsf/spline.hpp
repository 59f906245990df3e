#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "nsf/graph.hpp"
#include "nsf/tensor.hpp"

namespace nsf {

enum class SplineMode { kCubicHermite, kLinear };

// Temporal track of |P| control points with d channels each.
template <typename R>
struct SplineTrack {
  Tensor<R> control_points;  // [K, d]
  SplineMode mode = SplineMode::kCubicHermite;

  int64_t count() const { return control_points.shape[0]; }
  int64_t channels() const { return control_points.shape[1]; }
};

inline void check_spline_args(double t, int64_t count, SplineMode mode) {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("spline_eval: t=" + std::to_string(t) + " outside [0,1]");
  const int64_t min_points = mode == SplineMode::kCubicHermite ? 2 : 1;
  if (count < min_points)
    throw std::invalid_argument("spline_eval: track needs at least " +
                                std::to_string(min_points) + " control points, got " +
                                std::to_string(count));
}

// Per-sample interpolation stencil: up to three control-point rows with
// combined basis coefficients. The cubic Hermite basis
//   h00 = 2t^3 - 3t^2 + 1,  h01 = -2t^3 + 3t^2,
//   h10 = t^3 - 2t^2 + t,   h11 = t^3 - t^2
// weights positions P_i, P_{i+1} and the half-difference tangents
// (P_i - P_{i-1})/2 and (P_{i+1} - P_i)/2. Segments index t_s = t*(|P|-1)
// so t=1 lands exactly on the last control point, and the i-1 tangent
// neighbor clamps to the first point (zero one-sided difference there).
template <typename R>
struct SplineStencil {
  int32_t seg = 0;   // P_seg, P_seg+1, tangent neighbor P_prev
  int32_t prev = 0;
  R w_seg = R(0), w_next = R(0), w_prev = R(0);
};

template <typename R>
SplineStencil<R> spline_stencil(R t, int64_t count, SplineMode mode) {
  SplineStencil<R> s;
  if (count == 1) {  // degenerate constant track (linear mode)
    s.seg = 0;
    s.prev = 0;
    s.w_seg = R(1);
    return s;
  }
  const R ts = t * static_cast<R>(count - 1);
  int64_t i = static_cast<int64_t>(std::floor(ts));
  i = std::clamp<int64_t>(i, 0, count - 2);
  const R tr = ts - static_cast<R>(i);
  s.seg = static_cast<int32_t>(i);
  s.prev = static_cast<int32_t>(std::max<int64_t>(i - 1, 0));
  if (mode == SplineMode::kLinear) {
    s.w_seg = R(1) - tr;
    s.w_next = tr;
    s.w_prev = R(0);
    s.prev = s.seg;
    return s;
  }
  const R tr2 = tr * tr;
  const R tr3 = tr2 * tr;
  const R h00 = R(2) * tr3 - R(3) * tr2 + R(1);
  const R h01 = -R(2) * tr3 + R(3) * tr2;
  const R h10 = tr3 - R(2) * tr2 + tr;
  const R h11 = tr3 - tr2;
  s.w_seg = h00 + h10 / R(2) - h11 / R(2);
  s.w_next = h01 + h11 / R(2);
  s.w_prev = -h10 / R(2);
  return s;
}

// Time derivative of the same stencil (d/dt, including the t_s scaling).
template <typename R>
SplineStencil<R> spline_stencil_dt(R t, int64_t count, SplineMode mode) {
  SplineStencil<R> s;
  if (count == 1) return s;
  const R scale = static_cast<R>(count - 1);
  const R ts = t * scale;
  int64_t i = static_cast<int64_t>(std::floor(ts));
  i = std::clamp<int64_t>(i, 0, count - 2);
  const R tr = ts - static_cast<R>(i);
  s.seg = static_cast<int32_t>(i);
  s.prev = static_cast<int32_t>(std::max<int64_t>(i - 1, 0));
  if (mode == SplineMode::kLinear) {
    s.w_seg = -scale;
    s.w_next = scale;
    s.prev = s.seg;
    return s;
  }
  const R tr2 = tr * tr;
  const R d00 = (R(6) * tr2 - R(6) * tr) * scale;
  const R d01 = (-R(6) * tr2 + R(6) * tr) * scale;
  const R d10 = (R(3) * tr2 - R(4) * tr + R(1)) * scale;
  const R d11 = (R(3) * tr2 - R(2) * tr) * scale;
  s.w_seg = d00 + d10 / R(2) - d11 / R(2);
  s.w_next = d01 + d11 / R(2);
  s.w_prev = -d10 / R(2);
  return s;
}

template <typename R>
std::vector<R> spline_eval(R t, const SplineTrack<R>& track) {
  check_spline_args(static_cast<double>(t), track.count(), track.mode);
  const auto s = spline_stencil(t, track.count(), track.mode);
  const int64_t d = track.channels();
  const R* p = track.control_points.data();
  std::vector<R> out(static_cast<size_t>(d));
  const int64_t next = std::min<int64_t>(s.seg + 1, track.count() - 1);
  for (int64_t c = 0; c < d; ++c)
    out[static_cast<size_t>(c)] = s.w_seg * p[s.seg * d + c] + s.w_next * p[next * d + c] +
                                  s.w_prev * p[s.prev * d + c];
  return out;
}

template <typename R>
std::vector<R> spline_eval_dt(R t, const SplineTrack<R>& track) {
  check_spline_args(static_cast<double>(t), track.count(), track.mode);
  const auto s = spline_stencil_dt(t, track.count(), track.mode);
  const int64_t d = track.channels();
  const R* p = track.control_points.data();
  std::vector<R> out(static_cast<size_t>(d), R(0));
  if (track.count() == 1) return out;
  for (int64_t c = 0; c < d; ++c)
    out[static_cast<size_t>(c)] = s.w_seg * p[s.seg * d + c] + s.w_next * p[(s.seg + 1) * d + c] +
                                  s.w_prev * p[s.prev * d + c];
  return out;
}

// --- batched graph builders -------------------------------------------------

// Shared track: control points are one [K,d] tensor (pose splines).
template <typename R>
typename Graph<R>::Id spline_eval_batch(Graph<R>& g, typename Graph<R>::Id control_points,
                                        std::span<const R> ts, SplineMode mode) {
  const auto& shape = g.value(control_points).shape;
  const int64_t K = shape[0];
  const int64_t d = shape[1];
  const int64_t N = static_cast<int64_t>(ts.size());
  auto idx_seg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * d));
  auto idx_next = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * d));
  auto idx_prev = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * d));
  Tensor<R> w_seg = Tensor<R>::zeros({N});
  Tensor<R> w_next = Tensor<R>::zeros({N});
  Tensor<R> w_prev = Tensor<R>::zeros({N});
  for (int64_t n = 0; n < N; ++n) {
    check_spline_args(static_cast<double>(ts[static_cast<size_t>(n)]), K, mode);
    const auto s = spline_stencil(ts[static_cast<size_t>(n)], K, mode);
    const int64_t next = std::min<int64_t>(s.seg + 1, K - 1);
    for (int64_t c = 0; c < d; ++c) {
      (*idx_seg)[static_cast<size_t>(n * d + c)] = s.seg * d + c;
      (*idx_next)[static_cast<size_t>(n * d + c)] = next * d + c;
      (*idx_prev)[static_cast<size_t>(n * d + c)] = s.prev * d + c;
    }
    w_seg[n] = s.w_seg;
    w_next[n] = s.w_next;
    w_prev[n] = s.w_prev;
  }
  auto gseg = g.gather(control_points, idx_seg, {N, d});
  auto gnext = g.gather(control_points, idx_next, {N, d});
  auto gprev = g.gather(control_points, idx_prev, {N, d});
  auto acc = g.mul(gseg, g.constant(std::move(w_seg)));
  acc = g.add(acc, g.mul(gnext, g.constant(std::move(w_next))));
  acc = g.add(acc, g.mul(gprev, g.constant(std::move(w_prev))));
  return acc;
}

// Per-ray tracks: row n of `control_points` holds K*d values laid out [K][d]
// (the reshaped output of a flow network head).
template <typename R>
typename Graph<R>::Id spline_eval_rows(Graph<R>& g, typename Graph<R>::Id control_points,
                                       int64_t K, int64_t d, std::span<const R> ts,
                                       SplineMode mode) {
  const auto& shape = g.value(control_points).shape;
  const int64_t N = shape[0];
  if (shape.size() != 2 || shape[1] != K * d || N != static_cast<int64_t>(ts.size()))
    throw std::invalid_argument("spline_eval_rows: control point rows " + shape_str(shape) +
                                " do not reshape to " + std::to_string(K) + "x" + std::to_string(d));
  auto idx_seg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * d));
  auto idx_next = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * d));
  auto idx_prev = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * d));
  Tensor<R> w_seg = Tensor<R>::zeros({N});
  Tensor<R> w_next = Tensor<R>::zeros({N});
  Tensor<R> w_prev = Tensor<R>::zeros({N});
  for (int64_t n = 0; n < N; ++n) {
    check_spline_args(static_cast<double>(ts[static_cast<size_t>(n)]), K, mode);
    const auto s = spline_stencil(ts[static_cast<size_t>(n)], K, mode);
    const int64_t next = std::min<int64_t>(s.seg + 1, K - 1);
    const int64_t base = n * K * d;
    for (int64_t c = 0; c < d; ++c) {
      (*idx_seg)[static_cast<size_t>(n * d + c)] = base + s.seg * d + c;
      (*idx_next)[static_cast<size_t>(n * d + c)] = base + next * d + c;
      (*idx_prev)[static_cast<size_t>(n * d + c)] = base + s.prev * d + c;
    }
    w_seg[n] = s.w_seg;
    w_next[n] = s.w_next;
    w_prev[n] = s.w_prev;
  }
  auto gseg = g.gather(control_points, idx_seg, {N, d});
  auto gnext = g.gather(control_points, idx_next, {N, d});
  auto gprev = g.gather(control_points, idx_prev, {N, d});
  auto acc = g.mul(gseg, g.constant(std::move(w_seg)));
  acc = g.add(acc, g.mul(gnext, g.constant(std::move(w_next))));
  acc = g.add(acc, g.mul(gprev, g.constant(std::move(w_prev))));
  return acc;
}

}  // namespace nsf
