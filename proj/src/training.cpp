#include "nsf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <optional>
#include <span>

#include "nsf/runtime.hpp"

namespace nsf {

RayBatch sample_batch(const Burst& burst, int64_t n, Rng& rng) {
  if (burst.frames.empty()) throw std::invalid_argument("sample_batch: empty burst");
  if (n < 1) throw std::invalid_argument("sample_batch: n must be >= 1");
  RayBatch batch;
  batch.us.resize(static_cast<size_t>(n));
  batch.vs.resize(static_cast<size_t>(n));
  batch.ts.resize(static_cast<size_t>(n));
  batch.frame.resize(static_cast<size_t>(n));
  batch.colors = Tensor<float>::zeros({n, 3});
  const int frames = burst.frame_count();
  for (int64_t i = 0; i < n; ++i) {
    const int f = static_cast<int>(rng.below(static_cast<uint64_t>(frames)));
    const double u = rng.uniform();
    const double v = rng.uniform();
    batch.frame[static_cast<size_t>(i)] = f;
    batch.us[static_cast<size_t>(i)] = static_cast<float>(u);
    batch.vs[static_cast<size_t>(i)] = static_cast<float>(v);
    batch.ts[static_cast<size_t>(i)] = static_cast<float>(burst.timestamps[static_cast<size_t>(f)]);
    const Image& img = burst.frames[static_cast<size_t>(f)];
    for (int c = 0; c < 3; ++c) batch.colors[i * 3 + c] = img.sample_bilinear(u, v, c);
  }
  return batch;
}

void adam_step(const std::string& name, Tensor<float>& param, const float* grad, AdamState& state,
               double lr) {
  const size_t n = static_cast<size_t>(param.numel());
  if (state.m.empty()) {
    state.m.assign(n, 0.0f);
    state.v.assign(n, 0.0f);
  }
  if (state.m.size() != n)
    throw std::invalid_argument("adam_step: state size mismatch for " + name);
  ++state.step;
  const double b1 = AdamState::kBeta1, b2 = AdamState::kBeta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  float* p = param.data();
  float* m = state.m.data();
  float* v = state.v.data();
  bool finite = true;
  const int nt = runtime::threads();
#pragma omp parallel for schedule(static) num_threads(nt) reduction(&& : finite) \
    if (nt > 1 && n > 65536)
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
    const double gi = grad ? static_cast<double>(grad[i]) : 0.0;
    finite = finite && std::isfinite(gi);
    const double mi = b1 * m[i] + (1.0 - b1) * gi;
    const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + AdamState::kEps));
  }
  if (!finite) throw std::runtime_error("adam_step: non-finite gradient for tensor " + name);
}

double cosine_lr(double initial, double final_value, int64_t step, int64_t total) {
  if (total <= 1) return initial;
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  return final_value + 0.5 * (initial - final_value) * (1.0 + std::cos(3.14159265358979323846 * t));
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::string out = "step,loss,photometric,alpha_reg\n";
  char buf[160];
  for (const TraceRow& row : trace) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(row.step),
                  row.loss, row.photometric, row.alpha_reg);
    out += buf;
  }
  return out;
}

namespace {

struct ParamSlot {
  std::string name;
  Tensor<float>* tensor = nullptr;
  double lr_scale = 1.0;
  bool is_pose = false;
  AdamState adam;
  bool started = false;           // first gradient seen
  std::vector<float> accum;       // multi-chunk / pose accumulation
  bool has_accum = false;
  const float* gptr = nullptr;    // borrowed single-chunk gradient
};

}  // namespace

FitResult fit(const Burst& burst, const FitConfig& config_in) {
  burst.validate();
  FitConfig config = config_in;
  config.validate();

  const bool was_deterministic = runtime::deterministic();
  if (config.deterministic) runtime::set_deterministic(true);

  // pose spline density follows the burst length: one knot per three frames
  config.model.seed = config.seed;
  if (config.model.pose_control_points <= 0)
    config.model.pose_control_points = std::max(4, burst.frame_count() / 3);

  FitResult result{scene_model_init<float>(config.model, burst.intrinsics,
                                           burst.device_rotations, burst.timestamps),
                   {},
                   {}};
  SceneModel<float>& scene = result.scene;

  std::vector<ParamSlot> slots;
  scene.visit_params([&](const std::string& name, Tensor<float>& t) {
    ParamSlot slot;
    slot.name = name;
    slot.tensor = &t;
    slot.is_pose = name.rfind("pose.", 0) == 0;
    slot.lr_scale = slot.is_pose ? config.pose_lr_scale : 1.0;
    slots.push_back(std::move(slot));
  });

  Rng rng(hash_u64(config.seed ^ 0x5b1ce5ull));
  const int64_t total_steps = config.steps;

  try {
    for (int64_t step = 0; step < total_steps; ++step) {
      const double lr = cosine_lr(config.lr_initial, config.lr_final, step, total_steps);
      const ActiveLevels active = config.coarse_to_fine
                                      ? masked_levels(scene.config, step, total_steps - 1)
                                      : all_levels(scene.config);

      RayBatch batch = sample_batch(burst, config.rays_per_step, rng);

      // optional paired perturbed rays for the gradient loss
      double radius_px = 0.0;
      std::vector<float> pus, pvs;
      Tensor<float> pcolors;
      if (config.gradient_loss.enabled) {
        const auto& gl = config.gradient_loss;
        const double decay_steps = std::max<double>(1.0, gl.decay_fraction * total_steps);
        const double f = std::min(1.0, static_cast<double>(step) / decay_steps);
        radius_px = gl.radius_start_px + f * (gl.radius_end_px - gl.radius_start_px);
        const int64_t n = batch.size();
        pus.resize(static_cast<size_t>(n));
        pvs.resize(static_cast<size_t>(n));
        pcolors = Tensor<float>::zeros({n, 3});
        for (int64_t i = 0; i < n; ++i) {
          const double phi = rng.uniform(0.0, 6.283185307179586);
          const double du = radius_px * std::cos(phi) / burst.width;
          const double dv = radius_px * std::sin(phi) / burst.height;
          const double u = std::clamp(batch.us[static_cast<size_t>(i)] + du, 0.0, 1.0);
          const double v = std::clamp(batch.vs[static_cast<size_t>(i)] + dv, 0.0, 1.0);
          pus[static_cast<size_t>(i)] = static_cast<float>(u);
          pvs[static_cast<size_t>(i)] = static_cast<float>(v);
          const Image& img = burst.frames[static_cast<size_t>(batch.frame[static_cast<size_t>(i)])];
          for (int c = 0; c < 3; ++c) pcolors[i * 3 + c] = img.sample_bilinear(u, v, c);
        }
      }

      const int64_t total_rays = batch.size();
      const int64_t chunk = std::min(config.chunk_rays, total_rays);
      double loss_acc = 0, lp_acc = 0, ra_acc = 0;

      for (ParamSlot& slot : slots) {
        slot.has_accum = false;
        slot.gptr = nullptr;
      }
      const bool multi_chunk = chunk < total_rays;
      std::optional<Graph<float>> live;  // last chunk's tape, kept until Adam runs

      for (int64_t base = 0; base < total_rays; base += chunk) {
        const int64_t n = std::min(chunk, total_rays - base);
        const double weight = static_cast<double>(n) / static_cast<double>(total_rays);

        live.emplace();
        Graph<float>& g = *live;
        SceneIds<float> ids = register_scene(g, scene);
        const std::span<const float> us(batch.us.data() + base, static_cast<size_t>(n));
        const std::span<const float> vs(batch.vs.data() + base, static_cast<size_t>(n));
        const std::span<const float> ts(batch.ts.data() + base, static_cast<size_t>(n));
        CompositeIds<float> comp = build_composite(g, scene, ids, us, vs, ts, active);

        Tensor<float> obs = Tensor<float>::zeros({n, 3});
        std::memcpy(obs.data(), batch.colors.data() + base * 3, sizeof(float) * static_cast<size_t>(n) * 3);
        auto observed = g.constant(std::move(obs));
        auto lp = photometric_loss(g, observed, comp.rgb, static_cast<float>(config.eps));
        auto total_loss = lp;
        typename Graph<float>::Id ra = -1;
        if (scene.obstruction) {
          ra = alpha_regularizer(g, comp.alpha, config.alpha_mode);
          total_loss = g.add(lp, g.mul_scalar(ra, static_cast<float>(config.eta_alpha)));
        }
        if (config.gradient_loss.enabled) {
          const std::span<const float> pu(pus.data() + base, static_cast<size_t>(n));
          const std::span<const float> pv(pvs.data() + base, static_cast<size_t>(n));
          CompositeIds<float> pert = build_composite(g, scene, ids, pu, pv, ts, active);
          Tensor<float> delta = Tensor<float>::zeros({n, 3});
          for (int64_t i = 0; i < n * 3; ++i)
            delta[i] = batch.colors[(base * 3) + i] - pcolors[(base * 3) + i];
          auto dobs = g.constant(std::move(delta));
          auto gl = gradient_loss(g, dobs, comp.rgb, pert.rgb, static_cast<float>(config.eps));
          total_loss = g.add(total_loss, g.mul_scalar(gl, static_cast<float>(config.gradient_loss.weight)));
        }

        const double loss_val = g.value(total_loss)[0];
        if (!std::isfinite(loss_val)) throw FitAbort(step);
        loss_acc += weight * loss_val;
        lp_acc += weight * g.value(lp)[0];
        if (ra >= 0) ra_acc += weight * g.value(ra)[0];

        g.backward(total_loss);

        // collect gradients slot by slot (graph param order == slot order)
        size_t slot_idx = 0;
        auto pull = [&](typename Graph<float>::Id id) {
          ParamSlot& slot = slots[slot_idx++];
          const std::vector<float>* grad = g.grad(id);
          if (!grad) return;
          slot.started = true;
          if (!multi_chunk && !slot.is_pose) {
            slot.gptr = grad->data();  // borrowed from `live`
            return;
          }
          if (!slot.has_accum) {
            slot.accum.assign(grad->size(), 0.0f);
            slot.has_accum = true;
          }
          for (size_t i = 0; i < grad->size(); ++i)
            slot.accum[i] += static_cast<float>(weight * (*grad)[i]);
        };
        auto pull_field = [&](const FieldIds<float>& f) {
          for (auto id : f.tables) pull(id);
          for (size_t i = 0; i < f.mlp.weights.size(); ++i) {
            pull(f.mlp.weights[i]);
            pull(f.mlp.biases[i]);
          }
        };
        pull(ids.translation);
        pull(ids.rotation);
        pull_field(ids.tr_rgb);
        pull_field(ids.tr_flow);
        if (scene.obstruction) {
          pull_field(ids.ob_rgb);
          pull_field(ids.ob_flow);
        }
        if (scene.alpha) pull_field(ids.alpha);
      }

      for (ParamSlot& slot : slots) {
        if (!slot.started) continue;  // untouched so far: update is exactly zero
        const float* grad = slot.has_accum ? slot.accum.data() : slot.gptr;
        if (config.anchor_first_pose && slot.is_pose && slot.has_accum)
          for (int c = 0; c < 3 && c < static_cast<int>(slot.accum.size()); ++c)
            slot.accum[static_cast<size_t>(c)] = 0.0f;
        if (config.track_grad_norms && grad) {
          double s = 0;
          for (int64_t i = 0; i < slot.tensor->numel(); ++i)
            s += std::abs(static_cast<double>(grad[i]));
          result.grad_abs_sum[slot.name] += s;
        }
        adam_step(slot.name, *slot.tensor, grad, slot.adam, lr * slot.lr_scale);
      }
      live.reset();

      if (step % config.record_every == 0 || step + 1 == total_steps)
        result.trace.push_back({step, loss_acc, lp_acc, ra_acc});
    }
  } catch (...) {
    runtime::set_deterministic(was_deterministic);
    throw;
  }
  runtime::set_deterministic(was_deterministic);
  return result;
}

}  // namespace nsf
