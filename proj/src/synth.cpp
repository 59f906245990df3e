#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "nsf/data.hpp"
#include "nsf/rng.hpp"
#include "nsf/runtime.hpp"
#include "nsf/spline.hpp"

namespace nsf {

using nlohmann::json;

void SynthSpec::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("synth: invalid resolution");
  if (frame_count < 2) throw std::invalid_argument("synth: need at least 2 frames");
  if (tr_depth <= 0 || ob_depth <= 0 || tr_depth == ob_depth)
    throw std::invalid_argument("synth: plane depths must be positive and distinct");
  if (shake_translation < 0 || shake_rotation < 0 || noise_sigma < 0)
    throw std::invalid_argument("synth: amplitudes must be >= 0");
  if (trajectory_knots < 2) throw std::invalid_argument("synth: need at least 2 trajectory knots");
  intrinsics.validate();
}

namespace {

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Seeded value-noise lattice with smooth interpolation.
double value_noise(uint64_t seed, double u, double v, int octaves) {
  double acc = 0.0, amp = 0.5, freq = 4.0, norm = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const double x = u * freq, y = v * freq;
    const int64_t ix = static_cast<int64_t>(std::floor(x));
    const int64_t iy = static_cast<int64_t>(std::floor(y));
    const double fx = x - ix, fy = y - iy;
    auto lattice = [&](int64_t gx, int64_t gy) {
      const uint64_t key = seed ^ hash_u64(0x10000 * static_cast<uint64_t>(o + 1) +
                                           static_cast<uint64_t>(gx + 4096) * 73856093ull +
                                           static_cast<uint64_t>(gy + 4096) * 19349663ull);
      return hash_uniform(key);
    };
    const double sx = fx * fx * (3 - 2 * fx);
    const double sy = fy * fy * (3 - 2 * fy);
    const double a = lattice(ix, iy) + sx * (lattice(ix + 1, iy) - lattice(ix, iy));
    const double b = lattice(ix, iy + 1) + sx * (lattice(ix + 1, iy + 1) - lattice(ix, iy + 1));
    acc += amp * (a + sy * (b - a));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return acc / norm;
}

std::array<float, 3> palette_color(uint64_t seed, int slot) {
  return {static_cast<float>(0.15 + 0.7 * hash_uniform(seed ^ hash_u64(3 * slot + 0))),
          static_cast<float>(0.15 + 0.7 * hash_uniform(seed ^ hash_u64(3 * slot + 1))),
          static_cast<float>(0.15 + 0.7 * hash_uniform(seed ^ hash_u64(3 * slot + 2)))};
}

std::array<float, 3> mix3(const std::array<float, 3>& a, const std::array<float, 3>& b, double t) {
  return {static_cast<float>(a[0] + t * (b[0] - a[0])), static_cast<float>(a[1] + t * (b[1] - a[1])),
          static_cast<float>(a[2] + t * (b[2] - a[2]))};
}

std::array<float, 3> gradient_tex(uint64_t seed, double u, double v) {
  const auto c00 = palette_color(seed, 0);
  const auto c10 = palette_color(seed, 1);
  const auto c01 = palette_color(seed, 2);
  const auto c11 = palette_color(seed, 3);
  const double cu = std::clamp(u, 0.0, 1.0), cv = std::clamp(v, 0.0, 1.0);
  return mix3(mix3(c00, c10, cu), mix3(c01, c11, cu), cv);
}

std::array<float, 3> checker_tex(const TextureSpec& t, double u, double v) {
  const double s = std::sin(3.14159265358979323846 * u * t.scale) *
                   std::sin(3.14159265358979323846 * v * t.scale);
  const double soft = std::max(t.softness, 1e-4);
  const double m = 0.5 + 0.5 * std::tanh(s / soft);
  return mix3(palette_color(t.seed, 4), palette_color(t.seed, 5), m);
}

std::array<float, 3> noise_tex(const TextureSpec& t, double u, double v) {
  const double n = value_noise(t.seed ^ 0xabcdef, u, v, std::max(1, t.octaves));
  return mix3(palette_color(t.seed, 6), palette_color(t.seed, 7), n);
}

}  // namespace

std::array<float, 3> eval_texture(const TextureSpec& tex, double u, double v) {
  if (tex.type == "gradient") return gradient_tex(tex.seed, u, v);
  if (tex.type == "checker") return checker_tex(tex, u, v);
  if (tex.type == "noise") return noise_tex(tex, u, v);
  if (tex.type == "mix") {
    const auto g = gradient_tex(tex.seed, u, v);
    const auto n = noise_tex(tex, u, v);
    const auto c = checker_tex(tex, u, v);
    std::array<float, 3> out;
    for (int i = 0; i < 3; ++i) out[i] = 0.45f * g[i] + 0.35f * n[i] + 0.2f * c[i];
    return out;
  }
  throw std::invalid_argument("synth: unknown texture type '" + tex.type + "'");
}

float eval_alpha_spec(const AlphaSpec& spec, double u, double v) {
  if (spec.type == "none") return 0.0f;
  if (spec.type == "uniform") return static_cast<float>(spec.value);
  const double soft = std::max(spec.softness, 1e-4);
  auto bars = [&](double angle) {
    const double s = u * std::cos(angle) + v * std::sin(angle);
    const double period = 1.0 / std::max(1, spec.count);
    double f = s / period;
    f -= std::floor(f);
    // bar occupies `coverage` of each period, centered, with smooth edges
    const double d = std::abs(f - 0.5) * period;               // distance from bar center
    const double half = 0.5 * spec.coverage * period;
    return spec.value * (1.0 - smoothstep(half - soft, half + soft, d));
  };
  if (spec.type == "bars") return static_cast<float>(bars(spec.angle));
  if (spec.type == "grid")
    return static_cast<float>(std::max(bars(spec.angle), bars(spec.angle + 1.5707963267948966)));
  if (spec.type == "blob") {
    const double sigma = 0.25 * std::sqrt(std::max(spec.coverage, 1e-3));
    double a = 0.0;
    for (int i = 0; i < std::max(1, spec.count); ++i) {
      const double cx = 0.15 + 0.7 * hash_uniform(hash_u64(1000 + 2 * i));
      const double cy = 0.15 + 0.7 * hash_uniform(hash_u64(1001 + 2 * i));
      const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
      a = std::max(a, spec.value * std::exp(-d2 / (2 * sigma * sigma)));
    }
    return static_cast<float>(a);
  }
  throw std::invalid_argument("synth: unknown alpha type '" + spec.type + "'");
}

SynthSpec synth_spec_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  SynthSpec s;
  auto get = [&](const json& src, const char* key, auto def) {
    using T = decltype(def);
    return src.contains(key) ? src[key].get<T>() : def;
  };
  s.width = get(j, "width", s.width);
  s.height = get(j, "height", s.height);
  s.frame_count = get(j, "frame_count", s.frame_count);
  s.tr_depth = get(j, "tr_depth", s.tr_depth);
  s.ob_depth = get(j, "ob_depth", s.ob_depth);
  s.shake_translation = get(j, "shake_translation", s.shake_translation);
  s.shake_rotation = get(j, "shake_rotation", s.shake_rotation);
  s.trajectory_knots = get(j, "trajectory_knots", s.trajectory_knots);
  s.noise_sigma = get(j, "noise_sigma", s.noise_sigma);
  s.seed = get(j, "seed", s.seed);
  auto parse_tex = [&](const json& src, TextureSpec& t) {
    t.type = get(src, "type", t.type);
    t.scale = get(src, "scale", t.scale);
    t.softness = get(src, "softness", t.softness);
    t.octaves = get(src, "octaves", t.octaves);
    t.seed = get(src, "seed", t.seed);
  };
  if (j.contains("transmission")) parse_tex(j["transmission"], s.transmission);
  if (j.contains("obstruction")) {
    const json& ob = j["obstruction"];
    if (ob.contains("texture")) parse_tex(ob["texture"], s.obstruction_texture);
    if (ob.contains("alpha")) {
      const json& a = ob["alpha"];
      s.obstruction_alpha.type = get(a, "type", s.obstruction_alpha.type);
      s.obstruction_alpha.coverage = get(a, "coverage", s.obstruction_alpha.coverage);
      s.obstruction_alpha.count = get(a, "count", s.obstruction_alpha.count);
      s.obstruction_alpha.angle = get(a, "angle", s.obstruction_alpha.angle);
      s.obstruction_alpha.softness = get(a, "softness", s.obstruction_alpha.softness);
      s.obstruction_alpha.value = get(a, "value", s.obstruction_alpha.value);
    }
  }
  if (j.contains("intrinsics")) {
    const auto k = j["intrinsics"].get<std::vector<double>>();
    if (k.size() != 9) throw std::invalid_argument("synth: intrinsics must have 9 reals");
    std::copy(k.begin(), k.end(), s.intrinsics.k.m.begin());
  }
  s.validate();
  return s;
}

Burst synth_burst(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // Smooth shake trajectory through seeded random knots; the first knot is
  // zero so frame 0 sits at the canonical pose.
  const int knots = spec.trajectory_knots;
  SplineTrack<double> translation{Tensor<double>::zeros({knots, 3}), SplineMode::kCubicHermite};
  SplineTrack<double> rotation{Tensor<double>::zeros({knots, 3}), SplineMode::kCubicHermite};
  for (int k = 1; k < knots; ++k)
    for (int c = 0; c < 3; ++c) {
      translation.control_points[k * 3 + c] = spec.shake_translation * rng.uniform(-1.0, 1.0);
      rotation.control_points[k * 3 + c] = spec.shake_rotation * rng.uniform(-1.0, 1.0);
    }

  Burst burst;
  burst.width = spec.width;
  burst.height = spec.height;
  burst.intrinsics = spec.intrinsics;
  const Mat3 kinv = spec.intrinsics.k.inverse();
  const Plane tr_plane{spec.tr_depth, {1, 0, 0}, {0, 1, 0}};
  const Plane ob_plane{spec.ob_depth, {1, 0, 0}, {0, 1, 0}};

  for (int f = 0; f < spec.frame_count; ++f)
    burst.timestamps.push_back(static_cast<double>(f) / (spec.frame_count - 1));

  for (int f = 0; f < spec.frame_count; ++f) {
    const double t = burst.timestamps[static_cast<size_t>(f)];
    const auto rv = spline_eval(t, rotation);
    burst.device_rotations.push_back(exp_rotation({rv[0], rv[1], rv[2]}));
  }

  burst.frames.assign(static_cast<size_t>(spec.frame_count), Image(spec.width, spec.height, 3));
  const int nt = runtime::threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt) if (nt > 1)
  for (int f = 0; f < spec.frame_count; ++f) {
    const double t = burst.timestamps[static_cast<size_t>(f)];
    const auto tv = spline_eval(t, translation);
    const Vec3 origin{tv[0], tv[1], tv[2]};
    const Mat3 rot = burst.device_rotations[static_cast<size_t>(f)];
    Image& img = burst.frames[static_cast<size_t>(f)];
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const double u = (x + 0.5) / spec.width;
        const double v = (y + 0.5) / spec.height;
        const Vec3 d0 = rot * (kinv * Vec3{u, v, 1.0});
        const Vec3 dir{d0.x / d0.z, d0.y / d0.z, 1.0};
        const auto [tu, tvv] = project_plane(origin, dir, tr_plane);
        const auto [ou, ov] = project_plane(origin, dir, ob_plane);
        const auto ct = eval_texture(spec.transmission, tu, tvv);
        const auto co = eval_texture(spec.obstruction_texture, ou, ov);
        const float a = eval_alpha_spec(spec.obstruction_alpha, ou, ov);
        for (int c = 0; c < 3; ++c) {
          double val = (1.0 - a) * ct[static_cast<size_t>(c)] + a * co[static_cast<size_t>(c)];
          if (spec.noise_sigma > 0) {
            // counter-based gaussian so the result is thread-order independent
            const uint64_t key = spec.seed ^ hash_u64((static_cast<uint64_t>(f) << 40) +
                                                      (static_cast<uint64_t>(y) << 20) +
                                                      (static_cast<uint64_t>(x) << 2) +
                                                      static_cast<uint64_t>(c));
            double u1 = hash_uniform(key);
            const double u2 = hash_uniform(hash_u64(key));
            if (u1 <= 1e-12) u1 = 1e-12;
            const double gauss =
                std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
            val += spec.noise_sigma * gauss;
          }
          img.at(x, y, c) = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
  }

  // exact canonicals on the canonical plane-coordinate grid
  GroundTruth gt;
  gt.transmission = Image(spec.width, spec.height, 3);
  gt.obstruction = Image(spec.width, spec.height, 3);
  gt.alpha = Image(spec.width, spec.height, 1);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const double u = (x + 0.5) / spec.width;
      const double v = (y + 0.5) / spec.height;
      const Vec3 p = kinv * Vec3{u, v, 1.0};
      const double cu = p.x / p.z, cv = p.y / p.z;
      const auto ct = eval_texture(spec.transmission, cu, cv);
      const auto co = eval_texture(spec.obstruction_texture, cu, cv);
      for (int c = 0; c < 3; ++c) {
        gt.transmission.at(x, y, c) = ct[static_cast<size_t>(c)];
        gt.obstruction.at(x, y, c) = co[static_cast<size_t>(c)];
      }
      gt.alpha.at(x, y, 0) = eval_alpha_spec(spec.obstruction_alpha, cu, cv);
    }
  gt.pose_points = knots;
  gt.pose_translation.assign(translation.control_points.data(),
                             translation.control_points.data() + knots * 3);
  gt.pose_rotation.assign(rotation.control_points.data(),
                          rotation.control_points.data() + knots * 3);
  burst.ground_truth = std::move(gt);

  burst.validate();
  return burst;
}

}  // namespace nsf
