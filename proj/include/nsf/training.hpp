#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/data.hpp"
#include "nsf/graph.hpp"
#include "nsf/layers.hpp"
#include "nsf/rng.hpp"

namespace nsf {

enum class AlphaMode { kMagnitude, kSegmentation };

struct GradientLossConfig {
  bool enabled = false;
  double weight = 0.1;
  double radius_start_px = 2.0;
  double radius_end_px = 0.25;
  double decay_fraction = 0.4;  // of total steps, then held
};

struct FitConfig {
  std::string preset = "occlusion";
  int64_t steps = 6000;
  int64_t rays_per_step = int64_t(1) << 18;
  double lr_initial = 3e-3;
  double lr_final = 3e-4;
  double pose_lr_scale = 0.1;
  double eta_alpha = 0.02;
  AlphaMode alpha_mode = AlphaMode::kMagnitude;
  double eps = 1e-3;  // relative-loss denominator floor
  uint64_t seed = 1;
  bool deterministic = false;
  bool coarse_to_fine = true;
  bool anchor_first_pose = true;  // gauge-fix pose splines at t = 0
  bool track_grad_norms = false;
  GradientLossConfig gradient_loss;
  int64_t chunk_rays = 16384;
  int64_t record_every = 50;
  SceneModelConfig model;

  void validate() const {
    if (steps < 1 || rays_per_step < 1) throw std::invalid_argument("fit: steps and rays must be >= 1");
    if (eps <= 0) throw std::invalid_argument("fit: eps must be > 0");
  }
};

// --- losses (graph builders; usable in both precisions) ---------------------

// Relative photometric loss: mean |(c - c_hat) / (sg(c) + eps)|.
template <typename R>
typename Graph<R>::Id photometric_loss(Graph<R>& g, typename Graph<R>::Id observed,
                                       typename Graph<R>::Id predicted, R eps) {
  if (g.value(observed).shape != g.value(predicted).shape)
    throw std::invalid_argument("photometric_loss: shape mismatch " +
                                shape_str(g.value(observed).shape) + " vs " +
                                shape_str(g.value(predicted).shape));
  auto denom = g.add_scalar(g.stop_gradient(observed), eps);
  return g.mean(g.abs(g.div(g.sub(observed, predicted), denom)));
}

// R_alpha: mean |alpha| (magnitude) or mean alpha(1-alpha) (segmentation).
template <typename R>
typename Graph<R>::Id alpha_regularizer(Graph<R>& g, typename Graph<R>::Id alpha, AlphaMode mode) {
  if (mode == AlphaMode::kMagnitude) return g.mean(g.abs(alpha));
  return g.mean(g.mul(alpha, g.rsub_scalar(R(1), alpha)));
}

// Paired-perturbation gradient loss: mean |(dc - dc_hat)/(sg(dc)+eps)|^2.
template <typename R>
typename Graph<R>::Id gradient_loss(Graph<R>& g, typename Graph<R>::Id observed_delta,
                                    typename Graph<R>::Id predicted,
                                    typename Graph<R>::Id predicted_perturbed, R eps) {
  auto delta_hat = g.sub(predicted, predicted_perturbed);
  auto denom = g.add_scalar(g.stop_gradient(observed_delta), eps);
  return g.mean(g.power(g.abs(g.div(g.sub(observed_delta, delta_hat), denom)), R(2)));
}

// --- ray sampling ------------------------------------------------------------

struct RayBatch {
  std::vector<float> us, vs, ts;
  std::vector<int32_t> frame;
  Tensor<float> colors;  // [N,3] bilinear reads

  int64_t size() const { return static_cast<int64_t>(us.size()); }
};

// Uniform frames, uniform continuous pixel positions, bilinear color reads.
RayBatch sample_batch(const Burst& burst, int64_t n, Rng& rng);

// --- Adam --------------------------------------------------------------------

struct AdamState {
  std::vector<float> m, v;
  int64_t step = 0;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.99;
  static constexpr double kEps = 1e-15;
};

// Standard bias-corrected Adam; throws (naming the tensor) on non-finite
// gradients.
void adam_step(const std::string& name, Tensor<float>& param, const float* grad, AdamState& state,
               double lr);

// --- fit ---------------------------------------------------------------------

struct TraceRow {
  int64_t step = 0;
  double loss = 0, photometric = 0, alpha_reg = 0;
};

std::string trace_to_csv(const std::vector<TraceRow>& trace);

struct FitAbort : std::runtime_error {
  int64_t step;
  explicit FitAbort(int64_t s)
      : std::runtime_error("fit: non-finite loss at step " + std::to_string(s)), step(s) {}
};

struct FitResult {
  SceneModel<float> scene;
  std::vector<TraceRow> trace;
  std::map<std::string, double> grad_abs_sum;  // filled when track_grad_norms
};

double cosine_lr(double initial, double final_value, int64_t step, int64_t total);

// Full coarse-to-fine fit of a scene model to a burst.
FitResult fit(const Burst& burst, const FitConfig& config);

}  // namespace nsf
