#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "nsf/geometry.hpp"
#include "nsf/graph.hpp"
#include "nsf/spline.hpp"
#include "nsf/tensor.hpp"

namespace nsf {

struct Intrinsics {
  Mat3 k = Mat3::identity();

  void validate() const {
    if (k(0, 0) <= 0 || k(1, 1) <= 0)
      throw std::invalid_argument("intrinsics: focal entries must be positive");
    k.inverse();  // throws when singular
  }
};

// Scene plane locked to the z-axis at depth `z`, spanned by orthonormal
// canonical axes (fronto-parallel by default).
struct Plane {
  double z = 1.0;
  Vec3 u_axis{1, 0, 0};
  Vec3 v_axis{0, 1, 0};

  void validate() const {
    if (z <= 0) throw std::invalid_argument("plane: depth must be > 0");
    if (std::abs(u_axis.dot(v_axis)) > 1e-9 || std::abs(u_axis.norm() - 1.0) > 1e-9 ||
        std::abs(v_axis.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("plane: axes must be orthonormal");
  }
};

struct GyroSample {
  double t = 0;
  Vec3 angular_velocity;
};

// Composes incremental exponential-map rotations between gyroscope samples
// (zero-order hold); frame rotations are reported relative to frame 0. An
// empty sample stream yields identities.
inline std::vector<Mat3> integrate_gyro(const std::vector<GyroSample>& samples,
                                        const std::vector<double>& frame_timestamps) {
  std::vector<Mat3> out(frame_timestamps.size(), Mat3::identity());
  if (!std::is_sorted(frame_timestamps.begin(), frame_timestamps.end()))
    throw std::invalid_argument("integrate_gyro: frame timestamps not sorted");
  if (samples.empty()) return out;
  for (size_t i = 1; i < samples.size(); ++i)
    if (samples[i].t < samples[i - 1].t)
      throw std::invalid_argument("integrate_gyro: gyro timestamps not sorted");
  if (samples.front().t > frame_timestamps.front() || samples.back().t < frame_timestamps.back())
    throw std::invalid_argument("integrate_gyro: samples do not cover the frame interval");

  Mat3 r = Mat3::identity();
  double cursor = samples.front().t;
  size_t seg = 0;
  std::vector<Mat3> absolute(frame_timestamps.size());
  size_t next_frame = 0;
  auto advance_to = [&](double target) {
    while (cursor < target) {
      while (seg + 1 < samples.size() && samples[seg + 1].t <= cursor) ++seg;
      const double seg_end = seg + 1 < samples.size() ? samples[seg + 1].t : target;
      const double step_end = std::min(seg_end, target);
      const double dt = step_end - cursor;
      if (dt > 0) r = r * exp_rotation(samples[seg].angular_velocity * dt);
      cursor = step_end;
      if (seg + 1 < samples.size() && cursor >= samples[seg + 1].t) ++seg;
      if (seg >= samples.size() - 1) seg = samples.size() - 1;
    }
  };
  for (; next_frame < frame_timestamps.size(); ++next_frame) {
    advance_to(frame_timestamps[next_frame]);
    absolute[next_frame] = r;
  }
  const Mat3 base_inv = absolute.front().transposed();  // orthonormal
  for (size_t i = 0; i < out.size(); ++i) out[i] = base_inv * absolute[i];
  return out;
}

// Camera pose: translation and small-angle rotation offset splines over the
// burst, plus device rotations (identity when no gyro data is available).
template <typename R>
struct PoseModel {
  SplineTrack<R> translation;  // [K,3], initialized all-zero
  SplineTrack<R> rotation;     // [K,3] small-angle offsets (r^x, r^y, r^z)
  R eta_rotation = R(0.01);
  std::vector<Mat3> device_rotations;    // per frame, relative to frame 0
  std::vector<double> frame_timestamps;  // normalized to [0,1]

  void validate() const {
    for (const Mat3& rd : device_rotations) {
      const Mat3 e = rd * rd.transposed();
      double err = std::abs(rd.det() - 1.0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(e(i, j) - (i == j ? 1.0 : 0.0)));
      if (err > 1e-6) throw std::invalid_argument("pose: device rotation not orthonormal");
    }
  }
};

template <typename R>
PoseModel<R> pose_model_init(int64_t control_points, R eta_rotation,
                             std::vector<Mat3> device_rotations,
                             std::vector<double> frame_timestamps) {
  PoseModel<R> pose;
  pose.translation.control_points = Tensor<R>::zeros({control_points, 3});
  pose.translation.control_points.requires_grad = true;
  pose.rotation.control_points = Tensor<R>::zeros({control_points, 3});
  pose.rotation.control_points.requires_grad = true;
  pose.eta_rotation = eta_rotation;
  pose.device_rotations = std::move(device_rotations);
  pose.frame_timestamps = std::move(frame_timestamps);
  pose.validate();
  return pose;
}

// Device rotation at time t, spherically interpolated between bracketing
// frames (identity when no rotations are stored).
template <typename R>
Mat3 device_rotation_at(const PoseModel<R>& pose, double t) {
  const auto& ts = pose.frame_timestamps;
  if (pose.device_rotations.empty() || ts.empty()) return Mat3::identity();
  if (t <= ts.front()) return pose.device_rotations.front();
  if (t >= ts.back()) return pose.device_rotations.back();
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const size_t hi = static_cast<size_t>(it - ts.begin());
  const size_t lo = hi - 1;
  const double span = ts[hi] - ts[lo];
  const double f = span > 0 ? (t - ts[lo]) / span : 0.0;
  const Quat qa = Quat::from_matrix(pose.device_rotations[lo]);
  const Quat qb = Quat::from_matrix(pose.device_rotations[hi]);
  return slerp(qa, qb, f).to_matrix();
}

// T(t) = S(t, P_T); R(t) = R_D(t) + eta_R * skew(S(t, P_R)).
template <typename R>
std::pair<Vec3, Mat3> eval_pose(double t, const PoseModel<R>& pose) {
  const auto tv = spline_eval(static_cast<R>(t), pose.translation);
  const auto rv = spline_eval(static_cast<R>(t), pose.rotation);
  const Vec3 translation{static_cast<double>(tv[0]), static_cast<double>(tv[1]),
                         static_cast<double>(tv[2])};
  const Mat3 rd = device_rotation_at(pose, t);
  const Mat3 rot = rd + skew_matrix({static_cast<double>(rv[0]), static_cast<double>(rv[1]),
                                     static_cast<double>(rv[2])})
                            .scaled(static_cast<double>(pose.eta_rotation));
  return {translation, rot};
}

struct Ray {
  Vec3 origin;
  Vec3 direction;  // z component normalized to 1
};

// Eq.-7 style pinhole ray: O = T(t), D = R(t) K^-1 (u,v,1)^T / D_z.
template <typename R>
Ray generate_ray(double u, double v, double t, const Intrinsics& intr, const PoseModel<R>& pose) {
  if (u < 0 || u > 1 || v < 0 || v > 1)
    throw std::invalid_argument("generate_ray: (u,v) outside [0,1]^2");
  const auto [translation, rot] = eval_pose(t, pose);
  const Vec3 pixel = intr.k.inverse() * Vec3{u, v, 1.0};
  const Vec3 d = rot * pixel;
  if (std::abs(d.z) < 1e-9) throw std::runtime_error("generate_ray: degenerate ray (|D_z| < 1e-9)");
  return {translation, {d.x / d.z, d.y / d.z, 1.0}};
}

// Ray-plane intersection Q = O + (Pi_z - O_z) D projected to plane
// coordinates, scaled by (Pi_z - O_z) to keep spatial resolution uniform.
inline std::pair<double, double> project_plane(const Vec3& origin, const Vec3& direction,
                                               const Plane& plane) {
  const double denom = plane.z - origin.z;
  if (denom <= 1e-6) throw std::runtime_error("project_plane: camera on or beyond the plane");
  const Vec3 q = origin + direction * denom;
  return {q.dot(plane.u_axis) / denom, q.dot(plane.v_axis) / denom};
}

// --- batched graph builders -------------------------------------------------

// Per-ray pose data that does not carry gradients: the device rotation and
// the back-projected pixel K^-1 (u,v,1).
template <typename R>
struct RayConstants {
  Tensor<R> rd_k;  // [N,3]: device rotation applied to the pixel vector
  Tensor<R> k_pix; // [N,3]: pixel vector itself (for the cross product)
};

template <typename R>
RayConstants<R> ray_constants(const PoseModel<R>& pose, const Intrinsics& intr,
                              std::span<const R> us, std::span<const R> vs,
                              std::span<const R> ts) {
  const int64_t n = static_cast<int64_t>(us.size());
  RayConstants<R> out;
  out.rd_k = Tensor<R>::zeros({n, 3});
  out.k_pix = Tensor<R>::zeros({n, 3});
  const Mat3 kinv = intr.k.inverse();
  for (int64_t i = 0; i < n; ++i) {
    const Vec3 pix = kinv * Vec3{static_cast<double>(us[static_cast<size_t>(i)]),
                                 static_cast<double>(vs[static_cast<size_t>(i)]), 1.0};
    const Mat3 rd = device_rotation_at(pose, static_cast<double>(ts[static_cast<size_t>(i)]));
    const Vec3 rdk = rd * pix;
    out.rd_k[i * 3 + 0] = static_cast<R>(rdk.x);
    out.rd_k[i * 3 + 1] = static_cast<R>(rdk.y);
    out.rd_k[i * 3 + 2] = static_cast<R>(rdk.z);
    out.k_pix[i * 3 + 0] = static_cast<R>(pix.x);
    out.k_pix[i * 3 + 1] = static_cast<R>(pix.y);
    out.k_pix[i * 3 + 2] = static_cast<R>(pix.z);
  }
  return out;
}

template <typename R>
typename Graph<R>::Id take_column(Graph<R>& g, typename Graph<R>::Id m, int64_t col) {
  const auto& shape = g.value(m).shape;
  const int64_t n = shape[0];
  const int64_t c = shape[1];
  auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) (*idx)[static_cast<size_t>(i)] = i * c + col;
  return g.gather(m, idx, {n});
}

template <typename R>
struct RayBatchIds {
  using Id = typename Graph<R>::Id;
  Id ox, oy, oz;  // origin columns [N]
  Id dx, dy;      // direction columns [N]; dz == 1 after normalization
};

// Records the differentiable ray chain for a batch: origin from the
// translation spline, direction from (R_D + eta_R skew(S(t,P_R))) K^-1 p
// normalized by its z component.
template <typename R>
RayBatchIds<R> build_ray_batch(Graph<R>& g, typename Graph<R>::Id translation_cp,
                               typename Graph<R>::Id rotation_cp, const PoseModel<R>& pose,
                               const Intrinsics& intr, std::span<const R> us,
                               std::span<const R> vs, std::span<const R> ts) {
  using Id = typename Graph<R>::Id;
  const RayConstants<R> rc = ray_constants(pose, intr, us, vs, ts);
  const int64_t n = static_cast<int64_t>(us.size());

  const Id origin = spline_eval_batch(g, translation_cp, ts, pose.translation.mode);  // [N,3]
  const Id rvec = spline_eval_batch(g, rotation_cp, ts, pose.rotation.mode);          // [N,3]

  // skew(r) k = r x k
  const Id rx = take_column(g, rvec, 0);
  const Id ry = take_column(g, rvec, 1);
  const Id rz = take_column(g, rvec, 2);
  std::vector<Tensor<R>> kcol;
  for (int64_t c = 0; c < 3; ++c) {
    Tensor<R> col = Tensor<R>::zeros({n});
    for (int64_t i = 0; i < n; ++i) col[i] = rc.k_pix[i * 3 + c];
    kcol.push_back(std::move(col));
  }
  const Id kx = g.constant(kcol[0]);
  const Id ky = g.constant(kcol[1]);
  const Id kz = g.constant(kcol[2]);
  const Id cross_x = g.sub(g.mul(ry, kz), g.mul(rz, ky));
  const Id cross_y = g.sub(g.mul(rz, kx), g.mul(rx, kz));
  const Id cross_z = g.sub(g.mul(rx, ky), g.mul(ry, kx));

  std::vector<Tensor<R>> rdkcol;
  for (int64_t c = 0; c < 3; ++c) {
    Tensor<R> col = Tensor<R>::zeros({n});
    for (int64_t i = 0; i < n; ++i) col[i] = rc.rd_k[i * 3 + c];
    rdkcol.push_back(std::move(col));
  }
  const R eta = pose.eta_rotation;
  const Id dx_un = g.add(g.constant(rdkcol[0]), g.mul_scalar(cross_x, eta));
  const Id dy_un = g.add(g.constant(rdkcol[1]), g.mul_scalar(cross_y, eta));
  const Id dz_un = g.add(g.constant(rdkcol[2]), g.mul_scalar(cross_z, eta));

  const R* dz_vals = g.value(dz_un).data();
  for (int64_t i = 0; i < n; ++i)
    if (std::abs(static_cast<double>(dz_vals[i])) < 1e-9)
      throw std::runtime_error("generate_ray: degenerate ray (|D_z| < 1e-9) in batch");

  RayBatchIds<R> ray;
  ray.ox = take_column(g, origin, 0);
  ray.oy = take_column(g, origin, 1);
  ray.oz = take_column(g, origin, 2);
  ray.dx = g.div(dx_un, dz_un);
  ray.dy = g.div(dy_un, dz_un);
  return ray;
}

template <typename R>
struct PlaneCoordIds {
  typename Graph<R>::Id u, v;
};

template <typename R>
PlaneCoordIds<R> project_plane_batch(Graph<R>& g, const RayBatchIds<R>& ray, const Plane& plane) {
  using Id = typename Graph<R>::Id;
  const Id denom = g.rsub_scalar(static_cast<R>(plane.z), ray.oz);  // Pi_z - O_z
  const R* dv = g.value(denom).data();
  for (int64_t i = 0; i < g.value(denom).numel(); ++i)
    if (static_cast<double>(dv[i]) <= 1e-6)
      throw std::runtime_error("project_plane: camera on or beyond the plane");
  const Id qx = g.add(ray.ox, g.mul(denom, ray.dx));
  const Id qy = g.add(ray.oy, g.mul(denom, ray.dy));
  const Id qz = g.add(ray.oz, denom);  // dz == 1
  auto dot_axis = [&](const Vec3& a) -> Id {
    Id acc = g.mul_scalar(qx, static_cast<R>(a.x));
    if (a.y != 0) acc = g.add(acc, g.mul_scalar(qy, static_cast<R>(a.y)));
    if (a.z != 0) acc = g.add(acc, g.mul_scalar(qz, static_cast<R>(a.z)));
    return acc;
  };
  PlaneCoordIds<R> out;
  out.u = g.div(dot_axis(plane.u_axis), denom);
  out.v = g.div(dot_axis(plane.v_axis), denom);
  return out;
}

}  // namespace nsf
