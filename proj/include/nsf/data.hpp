#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nsf/camera.hpp"
#include "nsf/geometry.hpp"
#include "nsf/image.hpp"

namespace nsf {

// Exact canonical layers and pose trajectory of a synthetic burst.
struct GroundTruth {
  Image transmission;  // W x H x 3
  Image obstruction;   // W x H x 3
  Image alpha;         // W x H x 1
  std::vector<double> pose_translation;  // K*3 spline knots
  std::vector<double> pose_rotation;     // K*3 rotation-vector knots
  int pose_points = 0;
};

struct Burst {
  int width = 0, height = 0;
  std::vector<Image> frames;  // linear RGB in [0,1]
  std::vector<double> timestamps;
  Intrinsics intrinsics;
  std::vector<Mat3> device_rotations;
  std::optional<GroundTruth> ground_truth;

  int frame_count() const { return static_cast<int>(frames.size()); }
  void validate() const;
};

// Bundle layout: directory with meta.json plus frames/frame_NNNN.f32
// (W*H*3 float32 LE, row-major, channel-interleaved).
Burst load_bundle(const std::string& path);
void save_bundle(const Burst& burst, const std::string& path);

struct TextureSpec {
  std::string type = "checker";  // gradient | checker | noise | mix
  double scale = 6.0;
  double softness = 0.05;
  int octaves = 3;
  uint64_t seed = 0;
};

struct AlphaSpec {
  std::string type = "bars";  // bars | grid | blob | uniform | none
  double coverage = 0.25;
  int count = 4;
  double angle = 0.3;       // radians
  double softness = 0.01;
  double value = 1.0;       // peak opacity
};

struct SynthSpec {
  int width = 192, height = 144;
  int frame_count = 42;
  TextureSpec transmission;
  TextureSpec obstruction_texture;
  AlphaSpec obstruction_alpha;
  double tr_depth = 1.0;
  double ob_depth = 0.5;
  double shake_translation = 0.02;  // world units
  double shake_rotation = 0.002;    // radians
  int trajectory_knots = 7;
  double noise_sigma = 0.0;
  uint64_t seed = 1;
  Intrinsics intrinsics;

  void validate() const;
};

SynthSpec synth_spec_from_json(const std::string& json_text);

// Renders a burst from procedural planar textures under a smooth random
// shake trajectory using the forward two-plane model, and stores the exact
// canonicals plus the true pose.
Burst synth_burst(const SynthSpec& spec);

// Evaluate the spec's procedural textures/alpha at plane coordinates
// (exposed for oracle tests).
std::array<float, 3> eval_texture(const TextureSpec& tex, double u, double v);
float eval_alpha_spec(const AlphaSpec& spec, double u, double v);

// Display tonemap: clamp to [0,1], then per-channel power 1/gamma.
Image tonemap(const Image& img, double gamma = 2.2);

}  // namespace nsf
