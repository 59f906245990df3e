#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/camera.hpp"
#include "nsf/encoding.hpp"
#include "nsf/graph.hpp"
#include "nsf/image.hpp"
#include "nsf/mlp.hpp"
#include "nsf/spline.hpp"

namespace nsf {

// Structural description of a scene model; everything needed to rebuild the
// parameter tensors (sizes only, no values).
struct SceneModelConfig {
  bool single_layer = false;
  EncodingParams tr_rgb_enc, tr_flow_enc, ob_rgb_enc, ob_flow_enc, alpha_enc;
  int tr_flow_points = 11;
  int ob_flow_points = 11;
  double tr_depth = 1.0;
  double ob_depth = 0.5;
  double temperature = 10.0;
  double eta_rotation = 0.01;
  int pose_control_points = 14;
  int mlp_hidden = 64;
  int mlp_layers = 5;  // weight matrices (4 hidden activations + linear head)
  double alpha_bias = -2.0;
  SplineMode flow_mode = SplineMode::kCubicHermite;
  SplineMode pose_mode = SplineMode::kCubicHermite;
  uint64_t seed = 1;

  void validate() const {
    if (!single_layer && tr_depth == ob_depth)
      throw std::invalid_argument("scene: transmission and obstruction depths must differ");
    if (temperature <= 0) throw std::invalid_argument("scene: temperature must be > 0");
    if (mlp_layers < 1 || mlp_hidden < 1) throw std::invalid_argument("scene: invalid MLP topology");
  }
};

template <typename R>
struct FieldModel {
  HashGrid<R> grid;
  MlpWeights<R> mlp;
};

template <typename R>
FieldModel<R> field_init(const EncodingParams& enc, int hidden, int layers, int64_t out_dim,
                         uint64_t seed) {
  FieldModel<R> f;
  f.grid = hash_grid_init<R>(enc, seed);
  std::vector<int64_t> dims;
  dims.push_back(enc.feature_dim());
  for (int i = 0; i + 1 < layers; ++i) dims.push_back(hidden);
  dims.push_back(out_dim);
  f.mlp = mlp_init<R>(dims, hash_u64(seed ^ 0x5f3759df));
  return f;
}

template <typename R>
struct LayerModel {
  FieldModel<R> image;  // 3 outputs, sigmoid-squashed at read time
  FieldModel<R> flow;   // 2*|P| outputs reshaped to a per-point 2-channel track
  int flow_points = 11;
  Plane plane;
};

// Two-layer alpha-composited scene: pose splines, transmission/obstruction
// layers with image + flow NSF fields, and an alpha field attached to the
// obstruction plane.
template <typename R>
struct SceneModel {
  SceneModelConfig config;
  Intrinsics intrinsics;
  PoseModel<R> pose;
  LayerModel<R> transmission;
  std::optional<LayerModel<R>> obstruction;
  std::optional<FieldModel<R>> alpha;
  R temperature = R(10);

  void visit_params(const std::function<void(const std::string&, Tensor<R>&)>& fn) {
    fn("pose.translation", pose.translation.control_points);
    fn("pose.rotation", pose.rotation.control_points);
    auto visit_field = [&](const std::string& prefix, FieldModel<R>& f) {
      for (size_t l = 0; l < f.grid.tables.size(); ++l)
        fn(prefix + ".table" + std::to_string(l), f.grid.tables[l]);
      for (size_t i = 0; i < f.mlp.weights.size(); ++i) {
        fn(prefix + ".w" + std::to_string(i), f.mlp.weights[i]);
        fn(prefix + ".b" + std::to_string(i), f.mlp.biases[i]);
      }
    };
    visit_field("tr.rgb", transmission.image);
    visit_field("tr.flow", transmission.flow);
    if (obstruction) {
      visit_field("ob.rgb", obstruction->image);
      visit_field("ob.flow", obstruction->flow);
    }
    if (alpha) visit_field("alpha", *alpha);
  }
};

template <typename R>
SceneModel<R> scene_model_init(const SceneModelConfig& config, const Intrinsics& intrinsics,
                               std::vector<Mat3> device_rotations,
                               std::vector<double> frame_timestamps) {
  config.validate();
  intrinsics.validate();
  SceneModel<R> scene;
  scene.config = config;
  scene.intrinsics = intrinsics;
  scene.temperature = static_cast<R>(config.temperature);
  scene.pose = pose_model_init<R>(config.pose_control_points,
                                  static_cast<R>(config.eta_rotation),
                                  std::move(device_rotations), std::move(frame_timestamps));
  scene.pose.translation.mode = config.pose_mode;
  scene.pose.rotation.mode = config.pose_mode;

  const uint64_t s = config.seed;
  scene.transmission.image =
      field_init<R>(config.tr_rgb_enc, config.mlp_hidden, config.mlp_layers, 3, hash_u64(s + 1));
  scene.transmission.flow = field_init<R>(config.tr_flow_enc, config.mlp_hidden, config.mlp_layers,
                                          2 * config.tr_flow_points, hash_u64(s + 2));
  scene.transmission.flow_points = config.tr_flow_points;
  scene.transmission.plane = Plane{config.tr_depth, {1, 0, 0}, {0, 1, 0}};
  if (!config.single_layer) {
    LayerModel<R> ob;
    ob.image = field_init<R>(config.ob_rgb_enc, config.mlp_hidden, config.mlp_layers, 3, hash_u64(s + 3));
    ob.flow = field_init<R>(config.ob_flow_enc, config.mlp_hidden, config.mlp_layers,
                            2 * config.ob_flow_points, hash_u64(s + 4));
    ob.flow_points = config.ob_flow_points;
    ob.plane = Plane{config.ob_depth, {1, 0, 0}, {0, 1, 0}};
    scene.obstruction = std::move(ob);
    FieldModel<R> alpha =
        field_init<R>(config.alpha_enc, config.mlp_hidden, config.mlp_layers, 1, hash_u64(s + 5));
    // the obstruction starts nearly transparent so the transmission layer
    // initially explains the scene
    alpha.mlp.biases.back()[0] = static_cast<R>(config.alpha_bias);
    scene.alpha = std::move(alpha);
  }
  return scene;
}

// Graph parameter ids for a registered scene.
template <typename R>
struct FieldIds {
  std::vector<typename Graph<R>::Id> tables;
  MlpIds<R> mlp;
};

template <typename R>
struct SceneIds {
  typename Graph<R>::Id translation = -1, rotation = -1;
  FieldIds<R> tr_rgb, tr_flow, ob_rgb, ob_flow, alpha;
};

template <typename R>
FieldIds<R> register_field(Graph<R>& g, FieldModel<R>& f) {
  FieldIds<R> ids;
  for (auto& t : f.grid.tables) ids.tables.push_back(g.param(t));
  ids.mlp = mlp_params(g, f.mlp);
  return ids;
}

template <typename R>
SceneIds<R> register_scene(Graph<R>& g, SceneModel<R>& scene) {
  SceneIds<R> ids;
  ids.translation = g.param(scene.pose.translation.control_points);
  ids.rotation = g.param(scene.pose.rotation.control_points);
  ids.tr_rgb = register_field(g, scene.transmission.image);
  ids.tr_flow = register_field(g, scene.transmission.flow);
  if (scene.obstruction) {
    ids.ob_rgb = register_field(g, scene.obstruction->image);
    ids.ob_flow = register_field(g, scene.obstruction->flow);
  }
  if (scene.alpha) ids.alpha = register_field(g, *scene.alpha);
  return ids;
}

// Active encoding levels per field (coarse-to-fine mask state).
struct ActiveLevels {
  int tr_rgb = 0, tr_flow = 0, ob_rgb = 0, ob_flow = 0, alpha = 0;
};

inline ActiveLevels all_levels(const SceneModelConfig& c) {
  return {c.tr_rgb_enc.levels, c.tr_flow_enc.levels, c.ob_rgb_enc.levels, c.ob_flow_enc.levels,
          c.alpha_enc.levels};
}

inline ActiveLevels masked_levels(const SceneModelConfig& c, int64_t epoch, int64_t max_epoch) {
  return {coarse_mask(epoch, max_epoch, c.tr_rgb_enc.levels),
          coarse_mask(epoch, max_epoch, c.tr_flow_enc.levels),
          coarse_mask(epoch, max_epoch, c.ob_rgb_enc.levels),
          coarse_mask(epoch, max_epoch, c.ob_flow_enc.levels),
          coarse_mask(epoch, max_epoch, c.alpha_enc.levels)};
}

template <typename R>
struct CompositeIds {
  using Id = typename Graph<R>::Id;
  Id rgb = -1;    // [N,3] composite color
  Id alpha = -1;  // [N]
  Id tr_u = -1, tr_v = -1, ob_u = -1, ob_v = -1;          // plane coordinates
  Id tr_flow = -1, ob_flow = -1;                          // [N,2] flow offsets
  Id tr_rgb = -1, ob_rgb = -1;                            // per-layer colors
};

// Flow lookup for one layer: encode plane coordinates, run the NSF head to
// per-ray spline control points, evaluate the spline at each ray's time.
template <typename R>
typename Graph<R>::Id layer_flow(Graph<R>& g, const FieldIds<R>& flow_ids,
                                 const EncodingParams& enc, int flow_points, SplineMode mode,
                                 typename Graph<R>::Id u, typename Graph<R>::Id v,
                                 int active_levels, std::span<const R> ts) {
  auto feats = hash_encode(g, enc, flow_ids.tables, u, v, active_levels);
  auto cp = mlp_forward(g, flow_ids.mlp, feats);  // [N, |P|*2]
  return spline_eval_rows(g, cp, flow_points, 2, ts, mode);
}

template <typename R>
typename Graph<R>::Id field_rgb(Graph<R>& g, const FieldIds<R>& ids, const EncodingParams& enc,
                                typename Graph<R>::Id u, typename Graph<R>::Id v,
                                int active_levels) {
  auto feats = hash_encode(g, enc, ids.tables, u, v, active_levels);
  return g.sigmoid(mlp_forward(g, ids.mlp, feats));
}

// Records the full per-ray composite of a batch: ray generation, plane
// intersections, NSF flows, layer colors, alpha, and the final blend
//   c_hat = (1 - alpha) c_T + alpha c_O.
template <typename R>
CompositeIds<R> build_composite(Graph<R>& g, SceneModel<R>& scene, const SceneIds<R>& ids,
                                std::span<const R> us, std::span<const R> vs,
                                std::span<const R> ts, const ActiveLevels& active,
                                std::optional<double> alpha_override = std::nullopt) {
  using Id = typename Graph<R>::Id;
  const int64_t n = static_cast<int64_t>(us.size());
  const SceneModelConfig& cfg = scene.config;

  const RayBatchIds<R> ray = build_ray_batch(g, ids.translation, ids.rotation, scene.pose,
                                             scene.intrinsics, us, vs, ts);

  CompositeIds<R> out;
  const PlaneCoordIds<R> tr = project_plane_batch(g, ray, scene.transmission.plane);
  out.tr_u = tr.u;
  out.tr_v = tr.v;
  out.tr_flow = layer_flow(g, ids.tr_flow, cfg.tr_flow_enc, scene.transmission.flow_points,
                           cfg.flow_mode, tr.u, tr.v, active.tr_flow, ts);
  const Id tr_su = g.add(tr.u, take_column(g, out.tr_flow, 0));
  const Id tr_sv = g.add(tr.v, take_column(g, out.tr_flow, 1));
  out.tr_rgb = field_rgb(g, ids.tr_rgb, cfg.tr_rgb_enc, tr_su, tr_sv, active.tr_rgb);

  if (!scene.obstruction) {
    out.rgb = out.tr_rgb;
    out.alpha = g.constant(Tensor<R>::zeros({n}));
    return out;
  }

  const PlaneCoordIds<R> ob = project_plane_batch(g, ray, scene.obstruction->plane);
  out.ob_u = ob.u;
  out.ob_v = ob.v;
  out.ob_flow = layer_flow(g, ids.ob_flow, cfg.ob_flow_enc, scene.obstruction->flow_points,
                           cfg.flow_mode, ob.u, ob.v, active.ob_flow, ts);
  const Id ob_su = g.add(ob.u, take_column(g, out.ob_flow, 0));
  const Id ob_sv = g.add(ob.v, take_column(g, out.ob_flow, 1));
  out.ob_rgb = field_rgb(g, ids.ob_rgb, cfg.ob_rgb_enc, ob_su, ob_sv, active.ob_rgb);

  if (alpha_override) {
    out.alpha = g.constant(Tensor<R>::full({n}, static_cast<R>(*alpha_override)));
  } else {
    auto feats = hash_encode(g, cfg.alpha_enc, ids.alpha.tables, ob_su, ob_sv, active.alpha);
    const Id logit = take_column(g, mlp_forward(g, ids.alpha.mlp, feats), 0);
    out.alpha = g.sigmoid(g.mul_scalar(logit, scene.temperature));
  }
  out.rgb = g.lerp(out.tr_rgb, out.ob_rgb, out.alpha);
  return out;
}

// Single-ray convenience wrapper.
template <typename R>
struct CompositeSample {
  R rgb[3] = {R(0), R(0), R(0)};
  R alpha = R(0);
  R tr_coords[2] = {R(0), R(0)};
  R ob_coords[2] = {R(0), R(0)};
  R tr_flow[2] = {R(0), R(0)};
  R ob_flow[2] = {R(0), R(0)};
};

template <typename R>
CompositeSample<R> composite_ray(SceneModel<R>& scene, R u, R v, R t, const ActiveLevels& active,
                                 std::optional<double> alpha_override = std::nullopt) {
  Graph<R> g;
  SceneIds<R> ids = register_scene(g, scene);
  const R us[1] = {u}, vs[1] = {v}, ts[1] = {t};
  const CompositeIds<R> c =
      build_composite(g, scene, ids, std::span<const R>(us, 1), std::span<const R>(vs, 1),
                      std::span<const R>(ts, 1), active, alpha_override);
  CompositeSample<R> s;
  for (int i = 0; i < 3; ++i) s.rgb[i] = g.value(c.rgb)[i];
  s.alpha = g.value(c.alpha)[0];
  s.tr_coords[0] = g.value(c.tr_u)[0];
  s.tr_coords[1] = g.value(c.tr_v)[0];
  s.tr_flow[0] = g.value(c.tr_flow)[0];
  s.tr_flow[1] = g.value(c.tr_flow)[1];
  if (scene.obstruction) {
    s.ob_coords[0] = g.value(c.ob_u)[0];
    s.ob_coords[1] = g.value(c.ob_v)[0];
    s.ob_flow[0] = g.value(c.ob_flow)[0];
    s.ob_flow[1] = g.value(c.ob_flow)[1];
  }
  return s;
}

enum class RenderLayer { kTransmission, kObstruction, kAlpha, kComposite };

inline RenderLayer parse_render_layer(const std::string& name) {
  if (name == "transmission") return RenderLayer::kTransmission;
  if (name == "obstruction") return RenderLayer::kObstruction;
  if (name == "alpha") return RenderLayer::kAlpha;
  if (name == "composite") return RenderLayer::kComposite;
  throw std::invalid_argument("render: unknown layer '" + name +
                              "' (transmission|obstruction|alpha|composite)");
}

// Canonical plane-coordinate grid: plane coordinates of identity-pose rays
// through pixel centers (depth-invariant because the origin is zero).
template <typename R>
void canonical_grid(const Intrinsics& intr, int width, int height, std::vector<R>& us,
                    std::vector<R>& vs) {
  const Mat3 kinv = intr.k.inverse();
  us.resize(static_cast<size_t>(width) * height);
  vs.resize(static_cast<size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = (y + 0.5) / height;
      const Vec3 p = kinv * Vec3{u, v, 1.0};
      us[static_cast<size_t>(y) * width + x] = static_cast<R>(p.x / p.z);
      vs[static_cast<size_t>(y) * width + x] = static_cast<R>(p.y / p.z);
    }
}

// Rasterizes a canonical field (no camera offset, no flow warp) or replays
// the full composite per pixel at time t.
template <typename R>
Image render_layer(SceneModel<R>& scene, RenderLayer which, int width, int height, double t,
                   std::optional<double> alpha_override = std::nullopt) {
  if (width < 1 || height < 1) throw std::invalid_argument("render: resolution must be >= 1x1");
  const bool canonical = which != RenderLayer::kComposite;
  if ((which == RenderLayer::kObstruction || which == RenderLayer::kAlpha) && !scene.obstruction)
    throw std::invalid_argument("render: single-layer model has no obstruction outputs");

  const int channels = which == RenderLayer::kAlpha ? 1 : 3;
  Image img(width, height, channels);
  std::vector<R> us, vs;
  const int64_t total = static_cast<int64_t>(width) * height;
  const int64_t chunk = 16384;

  if (canonical) {
    canonical_grid(scene.intrinsics, width, height, us, vs);
    for (int64_t base = 0; base < total; base += chunk) {
      const int64_t nchunk = std::min(chunk, total - base);
      Graph<R> g;
      Tensor<R> tu = Tensor<R>::zeros({nchunk});
      Tensor<R> tv = Tensor<R>::zeros({nchunk});
      for (int64_t i = 0; i < nchunk; ++i) {
        tu[i] = us[static_cast<size_t>(base + i)];
        tv[i] = vs[static_cast<size_t>(base + i)];
      }
      auto uid = g.constant(std::move(tu));
      auto vid = g.constant(std::move(tv));
      typename Graph<R>::Id out;
      if (which == RenderLayer::kTransmission) {
        FieldIds<R> ids = register_field(g, scene.transmission.image);
        out = field_rgb(g, ids, scene.config.tr_rgb_enc, uid, vid, scene.config.tr_rgb_enc.levels);
      } else if (which == RenderLayer::kObstruction) {
        FieldIds<R> ids = register_field(g, scene.obstruction->image);
        out = field_rgb(g, ids, scene.config.ob_rgb_enc, uid, vid, scene.config.ob_rgb_enc.levels);
      } else {
        FieldIds<R> ids = register_field(g, *scene.alpha);
        auto feats = hash_encode(g, scene.config.alpha_enc, ids.tables, uid, vid,
                                 scene.config.alpha_enc.levels);
        auto logit = take_column(g, mlp_forward(g, ids.mlp, feats), 0);
        out = g.sigmoid(g.mul_scalar(logit, scene.temperature));
      }
      const Tensor<R>& val = g.value(out);
      for (int64_t i = 0; i < nchunk; ++i)
        for (int c = 0; c < channels; ++c)
          img.pixels[static_cast<size_t>((base + i) * channels + c)] =
              static_cast<float>(val[i * channels + c]);
    }
    return img;
  }

  // composite replay
  for (int64_t base = 0; base < total; base += chunk) {
    const int64_t nchunk = std::min(chunk, total - base);
    std::vector<R> cu(static_cast<size_t>(nchunk)), cv(static_cast<size_t>(nchunk)),
        ct(static_cast<size_t>(nchunk), static_cast<R>(t));
    for (int64_t i = 0; i < nchunk; ++i) {
      const int64_t pix = base + i;
      const int x = static_cast<int>(pix % width);
      const int y = static_cast<int>(pix / width);
      cu[static_cast<size_t>(i)] = static_cast<R>((x + 0.5) / width);
      cv[static_cast<size_t>(i)] = static_cast<R>((y + 0.5) / height);
    }
    Graph<R> g;
    SceneIds<R> ids = register_scene(g, scene);
    const CompositeIds<R> comp =
        build_composite(g, scene, ids, std::span<const R>(cu), std::span<const R>(cv),
                        std::span<const R>(ct), all_levels(scene.config), alpha_override);
    const Tensor<R>& val = g.value(comp.rgb);
    for (int64_t i = 0; i < nchunk; ++i)
      for (int c = 0; c < 3; ++c)
        img.pixels[static_cast<size_t>((base + i) * 3 + c)] = static_cast<float>(val[i * 3 + c]);
  }
  return img;
}

// Mean flow magnitude (in canonical units) of a layer's NSF over a coarse
// grid and a set of sample times; diagnostic for flow-nullity checks.
template <typename R>
double mean_flow_magnitude(SceneModel<R>& scene, bool obstruction_layer, int grid = 24,
                           int time_samples = 7) {
  LayerModel<R>& layer = obstruction_layer ? *scene.obstruction : scene.transmission;
  const EncodingParams& enc =
      obstruction_layer ? scene.config.ob_flow_enc : scene.config.tr_flow_enc;
  double acc = 0;
  int64_t count = 0;
  std::vector<R> us, vs;
  canonical_grid(scene.intrinsics, grid, grid, us, vs);
  for (int k = 0; k < time_samples; ++k) {
    const R t = static_cast<R>(time_samples == 1 ? 0.0 : double(k) / (time_samples - 1));
    std::vector<R> ts(us.size(), t);
    Graph<R> g;
    FieldIds<R> ids = register_field(g, layer.flow);
    auto uid = g.constant(Tensor<R>::from({static_cast<int64_t>(us.size())}, std::vector<R>(us)));
    auto vid = g.constant(Tensor<R>::from({static_cast<int64_t>(vs.size())}, std::vector<R>(vs)));
    auto flow = layer_flow(g, ids, enc, layer.flow_points, scene.config.flow_mode, uid, vid,
                           enc.levels, ts);
    const Tensor<R>& val = g.value(flow);
    for (int64_t i = 0; i < val.shape[0]; ++i) {
      const double fx = static_cast<double>(val[i * 2]);
      const double fy = static_cast<double>(val[i * 2 + 1]);
      acc += std::sqrt(fx * fx + fy * fy);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace nsf
