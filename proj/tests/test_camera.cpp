#include <doctest.h>

#include <cmath>

#include "nsf/camera.hpp"
#include "nsf/gradcheck.hpp"
#include "nsf/rng.hpp"

using namespace nsf;

TEST_SUITE_BEGIN("camera");

namespace {

PoseModel<double> zero_pose(int64_t knots, double eta, int frames) {
  std::vector<Mat3> rd(static_cast<size_t>(frames), Mat3::identity());
  std::vector<double> ts;
  for (int i = 0; i < frames; ++i) ts.push_back(static_cast<double>(i) / (frames - 1));
  return pose_model_init<double>(knots, eta, std::move(rd), std::move(ts));
}

}  // namespace

TEST_CASE("gyro integration") {
  std::vector<double> frame_ts = {0.0, 0.5, 1.0};

  SUBCASE("zero angular velocity gives identities") {
    std::vector<GyroSample> samples;
    for (int i = 0; i <= 10; ++i) samples.push_back({i / 10.0, {0, 0, 0}});
    const auto rots = integrate_gyro(samples, frame_ts);
    for (const Mat3& r : rots)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(r(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
  }

  SUBCASE("constant rate about z matches the axis-angle oracle") {
    const double w = 0.8;
    std::vector<GyroSample> samples;
    for (int i = 0; i <= 100; ++i) samples.push_back({i / 100.0, {0, 0, w}});
    const auto rots = integrate_gyro(samples, frame_ts);
    for (size_t f = 0; f < frame_ts.size(); ++f) {
      const double angle = w * frame_ts[f];
      const Mat3 expect = exp_rotation({0, 0, angle});
      for (int i = 0; i < 9; ++i)
        CHECK(rots[f].m[static_cast<size_t>(i)] ==
              doctest::Approx(expect.m[static_cast<size_t>(i)]).epsilon(1e-9));
    }
  }

  SUBCASE("no gyro stream yields identities") {
    const auto rots = integrate_gyro({}, frame_ts);
    for (const Mat3& r : rots) CHECK(r(0, 0) == 1.0);
  }

  SUBCASE("unsorted timestamps raise") {
    std::vector<GyroSample> samples = {{0.0, {0, 0, 1}}, {0.6, {0, 0, 1}}, {0.4, {0, 0, 1}},
                                       {1.0, {0, 0, 1}}};
    CHECK_THROWS_AS(integrate_gyro(samples, frame_ts), std::invalid_argument);
  }
}

TEST_CASE("eval_pose") {
  SUBCASE("zero tracks give identity pose") {
    PoseModel<double> pose = zero_pose(4, 0.37, 5);
    const auto [t, r] = eval_pose(0.63, pose);
    CHECK(t.x == 0.0);
    CHECK(t.y == 0.0);
    CHECK(t.z == 0.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(r(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
  }

  SUBCASE("eta zero keeps the device rotation exactly") {
    PoseModel<double> pose = zero_pose(4, 0.0, 3);
    const Mat3 rd = exp_rotation({0.05, -0.02, 0.1});
    pose.device_rotations = {Mat3::identity(), rd, rd};
    Rng rng(1);
    for (int64_t i = 0; i < pose.rotation.control_points.numel(); ++i)
      pose.rotation.control_points[i] = rng.uniform(-1, 1);
    const auto [t, r] = eval_pose(0.5, pose);
    for (int i = 0; i < 9; ++i)
      CHECK(r.m[static_cast<size_t>(i)] == doctest::Approx(rd.m[static_cast<size_t>(i)]).epsilon(1e-12));
  }

  SUBCASE("constant rotation track assembles the skew offset") {
    PoseModel<double> pose = zero_pose(4, 0.01, 3);
    const double a = 0.3, b = -0.7, c = 0.2;
    for (int64_t k = 0; k < 4; ++k) {
      pose.rotation.control_points[k * 3 + 0] = a;
      pose.rotation.control_points[k * 3 + 1] = b;
      pose.rotation.control_points[k * 3 + 2] = c;
    }
    const auto [t, r] = eval_pose(0.4, pose);
    const double eta = 0.01;
    CHECK(r(0, 0) == doctest::Approx(1.0));
    CHECK(r(0, 1) == doctest::Approx(-eta * c));
    CHECK(r(0, 2) == doctest::Approx(eta * b));
    CHECK(r(1, 0) == doctest::Approx(eta * c));
    CHECK(r(1, 2) == doctest::Approx(-eta * a));
    CHECK(r(2, 0) == doctest::Approx(-eta * b));
    CHECK(r(2, 1) == doctest::Approx(eta * a));
  }
}

TEST_CASE("generate_ray") {
  PoseModel<double> pose = zero_pose(4, 0.01, 3);
  Intrinsics identity;

  SUBCASE("identity everything") {
    const Ray ray = generate_ray(0.25, 0.75, 0.0, identity, pose);
    CHECK(ray.origin.x == 0.0);
    CHECK(ray.direction.x == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(ray.direction.y == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(ray.direction.z == 1.0);
  }

  SUBCASE("direction z is exactly one") {
    Rng rng(2);
    for (int64_t i = 0; i < pose.rotation.control_points.numel(); ++i)
      pose.rotation.control_points[i] = rng.uniform(-0.5, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
      const Ray ray = generate_ray(rng.uniform(), rng.uniform(), rng.uniform(), identity, pose);
      CHECK(ray.direction.z == 1.0);
    }
  }

  SUBCASE("focal length two halves the direction") {
    Intrinsics k2;
    k2.k.m = {2, 0, 0, 0, 2, 0, 0, 0, 1};
    const Ray ray = generate_ray(0.5, 0.5, 0.0, k2, pose);
    CHECK(ray.direction.x == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(ray.direction.y == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("project_plane") {
  SUBCASE("zero origin reduces to the ray direction") {
    const auto [u, v] = project_plane({0, 0, 0}, {0.25, 0.75, 1.0}, Plane{1.0});
    CHECK(u == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(v == doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("hand-evaluated offset case") {
    const auto [u, v] = project_plane({0.1, 0, 0}, {0.25, 0.75, 1.0}, Plane{2.0});
    // Q = (0.6, 1.5, 2), coords = Q_xy / 2
    CHECK(u == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(v == doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("zero-origin projections are depth invariant") {
    const auto [u1, v1] = project_plane({0, 0, 0}, {0.4, -0.2, 1.0}, Plane{1.0});
    const auto [u2, v2] = project_plane({0, 0, 0}, {0.4, -0.2, 1.0}, Plane{2.0});
    CHECK(u1 == doctest::Approx(u2).epsilon(1e-15));
    CHECK(v1 == doctest::Approx(v2).epsilon(1e-15));
  }
  SUBCASE("camera on the plane raises") {
    CHECK_THROWS_AS(project_plane({0, 0, 1.0}, {0, 0, 1.0}, Plane{1.0}), std::runtime_error);
  }
}

TEST_CASE("identity round trip reproduces image coordinates at the Table-S2 depths") {
  PoseModel<double> pose = zero_pose(4, 0.01, 3);
  Intrinsics identity;
  Rng rng(6);
  for (double depth : {0.5, 1.0, 2.5}) {
    for (int trial = 0; trial < 20; ++trial) {
      const double u = rng.uniform(), v = rng.uniform();
      const Ray ray = generate_ray(u, v, 0.5, identity, pose);
      const auto [pu, pv] = project_plane(ray.origin, ray.direction, Plane{depth});
      CHECK(std::abs(pu - u) <= 1e-12);
      CHECK(std::abs(pv - v) <= 1e-12);
    }
  }
}

TEST_CASE("rotation deviates from orthonormality only at second order") {
  Rng rng(9);
  PoseModel<double> pose = zero_pose(5, 0.01, 3);
  double max_p = 0;
  for (int64_t i = 0; i < pose.rotation.control_points.numel(); ++i) {
    pose.rotation.control_points[i] = rng.uniform(-1.0, 1.0);
    max_p = std::max(max_p, std::abs(pose.rotation.control_points[i]));
  }
  for (double t : {0.0, 0.3, 0.9}) {
    const auto [tv, r] = eval_pose(t, pose);
    const Mat3 e = r.transposed() * r;
    double err = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(e(i, j) - (i == j ? 1.0 : 0.0)));
    CHECK(err <= 3.0 * (0.01 * max_p) * (0.01 * max_p) + 1e-9);
  }
}

TEST_CASE("batched graph chain matches the scalar path and finite differences") {
  PoseModel<double> pose = zero_pose(5, 0.01, 4);
  Rng rng(12);
  for (int64_t i = 0; i < pose.translation.control_points.numel(); ++i)
    pose.translation.control_points[i] = 0.05 * rng.uniform(-1, 1);
  for (int64_t i = 0; i < pose.rotation.control_points.numel(); ++i)
    pose.rotation.control_points[i] = rng.uniform(-1, 1);
  Intrinsics intr;
  intr.k.m = {1.2, 0, 0.1, 0, 1.1, -0.05, 0, 0, 1};
  const Plane plane{1.5};

  std::vector<double> us = {0.2, 0.8, 0.5};
  std::vector<double> vs = {0.7, 0.3, 0.5};
  std::vector<double> ts = {0.0, 0.5, 1.0};

  SUBCASE("values agree with the scalar implementation") {
    GraphD g;
    auto tcp = g.param(pose.translation.control_points);
    auto rcp = g.param(pose.rotation.control_points);
    auto ray = build_ray_batch(g, tcp, rcp, pose, intr, std::span<const double>(us),
                               std::span<const double>(vs), std::span<const double>(ts));
    auto coords = project_plane_batch(g, ray, plane);
    for (size_t i = 0; i < us.size(); ++i) {
      const Ray r = generate_ray(us[i], vs[i], ts[i], intr, pose);
      const auto [pu, pv] = project_plane(r.origin, r.direction, plane);
      CHECK(g.value(coords.u)[static_cast<int64_t>(i)] == doctest::Approx(pu).epsilon(1e-12));
      CHECK(g.value(coords.v)[static_cast<int64_t>(i)] == doctest::Approx(pv).epsilon(1e-12));
    }
  }

  SUBCASE("plane coordinates differentiate w.r.t. both pose splines") {
    auto build_t = [&](GraphD& g, GraphD::Id tcp) {
      auto rcp = g.param(pose.rotation.control_points);
      auto ray = build_ray_batch(g, tcp, rcp, pose, intr, std::span<const double>(us),
                                 std::span<const double>(vs), std::span<const double>(ts));
      auto coords = project_plane_batch(g, ray, plane);
      return g.sum(g.add(g.mul(coords.u, coords.u), g.mul(coords.v, coords.v)));
    };
    CHECK(check_gradients<double>(build_t, pose.translation.control_points.clone(), 1e-6)
              .max_rel_error < 1e-4);
    auto build_r = [&](GraphD& g, GraphD::Id rcp) {
      auto tcp = g.param(pose.translation.control_points);
      auto ray = build_ray_batch(g, tcp, rcp, pose, intr, std::span<const double>(us),
                                 std::span<const double>(vs), std::span<const double>(ts));
      auto coords = project_plane_batch(g, ray, plane);
      return g.sum(g.add(g.mul(coords.u, coords.u), g.mul(coords.v, coords.v)));
    };
    CHECK(check_gradients<double>(build_r, pose.rotation.control_points.clone(), 1e-6)
              .max_rel_error < 1e-4);
  }
}

TEST_CASE("device rotation validation") {
  std::vector<Mat3> bad = {Mat3::identity()};
  bad[0](0, 0) = 1.5;
  CHECK_THROWS_AS(pose_model_init<double>(4, 0.01, bad, {0.0}), std::invalid_argument);
}

TEST_SUITE_END();
