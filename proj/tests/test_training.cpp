#include <doctest.h>

#include <cmath>

#include "nsf/data.hpp"
#include "nsf/gradcheck.hpp"
#include "nsf/presets.hpp"
#include "nsf/training.hpp"

using namespace nsf;

TEST_SUITE_BEGIN("training");

namespace {

SynthSpec tiny_scene_spec() {
  SynthSpec spec;
  spec.width = 32;
  spec.height = 24;
  spec.frame_count = 5;
  spec.shake_translation = 0.004;
  spec.shake_rotation = 0.0;
  spec.seed = 17;
  spec.transmission.type = "gradient";
  spec.obstruction_alpha.type = "none";
  return spec;
}

FitConfig tiny_fit_config() {
  FitConfig c;
  c.steps = 40;
  c.rays_per_step = 512;
  c.seed = 5;
  c.record_every = 10;
  const EncodingParams enc{4, 1.61, 2, 2, 6};
  c.model.tr_rgb_enc = c.model.tr_flow_enc = c.model.ob_rgb_enc = c.model.ob_flow_enc =
      c.model.alpha_enc = enc;
  c.model.tr_flow_points = 3;
  c.model.ob_flow_points = 3;
  c.model.mlp_hidden = 8;
  c.model.mlp_layers = 2;
  c.model.temperature = 2.0;
  c.model.pose_control_points = 4;
  return c;
}

}  // namespace

TEST_CASE("photometric loss values and gradient") {
  SUBCASE("zero for a perfect prediction") {
    GraphD g;
    auto c = g.constant(Tensor<double>::from({2, 3}, {.1, .2, .3, .4, .5, .6}));
    auto loss = photometric_loss(g, c, c, 1e-3);
    CHECK(g.value(loss)[0] == 0.0);
  }
  SUBCASE("relative error with the eps floor") {
    GraphD g;
    auto c = g.constant(Tensor<double>::from({1, 1}, {1.0}));
    auto chat = g.param(Tensor<double>::from({1, 1}, {0.5}));
    auto loss = photometric_loss(g, c, chat, 1e-3);
    CHECK(g.value(loss)[0] == doctest::Approx(0.5 / 1.001).epsilon(1e-12));
    g.backward(loss);
    CHECK((*g.grad(chat))[0] == doctest::Approx(-1.0 / 1.001).epsilon(1e-12));
  }
  SUBCASE("gradient flows only through the prediction") {
    Tensor<double> chat = Tensor<double>::from({2, 3}, {.2, .4, .6, .1, .3, .5});
    auto build = [&](GraphD& g, GraphD::Id x) {
      auto c = g.constant(Tensor<double>::from({2, 3}, {.5, .1, .9, .3, .7, .2}));
      return photometric_loss(g, c, x, 1e-3);
    };
    CHECK(check_gradients<double>(build, chat, 1e-7).max_rel_error < 1e-6);
  }
}

TEST_CASE("alpha regularizer") {
  GraphD g;
  auto zeros = g.constant(Tensor<double>::zeros({4}));
  CHECK(g.value(alpha_regularizer(g, zeros, AlphaMode::kMagnitude))[0] == 0.0);
  CHECK(g.value(alpha_regularizer(g, zeros, AlphaMode::kSegmentation))[0] == 0.0);
  auto half = g.constant(Tensor<double>::full({4}, 0.5));
  CHECK(g.value(alpha_regularizer(g, half, AlphaMode::kMagnitude))[0] == doctest::Approx(0.5));
  CHECK(g.value(alpha_regularizer(g, half, AlphaMode::kSegmentation))[0] == doctest::Approx(0.25));
}

TEST_CASE("gradient loss") {
  SUBCASE("zero when predictions reproduce observations") {
    GraphD g;
    auto dc = g.constant(Tensor<double>::from({2, 3}, {.1, 0, -.1, .2, .1, 0}));
    auto pred = g.constant(Tensor<double>::from({2, 3}, {.5, .5, .5, .6, .6, .6}));
    // perturbed prediction chosen so pred - pert == dc
    auto pert = g.constant(Tensor<double>::from({2, 3}, {.4, .5, .6, .4, .5, .6}));
    auto loss = gradient_loss(g, dc, pred, pert, 1e-3);
    CHECK(g.value(loss)[0] == doctest::Approx(0.0));
  }
  SUBCASE("degenerate radius: identical partner gives zero loss") {
    GraphD g;
    auto dc = g.constant(Tensor<double>::zeros({2, 3}));
    auto pred = g.constant(Tensor<double>::from({2, 3}, {.5, .5, .5, .6, .6, .6}));
    auto loss = gradient_loss(g, dc, pred, pred, 1e-3);
    CHECK(g.value(loss)[0] == 0.0);
  }
  SUBCASE("constant images measure |delta_hat/eps|^2") {
    GraphD g;
    const double eps = 1e-3;
    auto dc = g.constant(Tensor<double>::zeros({1, 3}));
    auto pred = g.constant(Tensor<double>::from({1, 3}, {.5, .5, .5}));
    auto pert = g.constant(Tensor<double>::from({1, 3}, {.5 - 2e-3, .5, .5}));
    auto loss = gradient_loss(g, dc, pred, pert, eps);
    CHECK(g.value(loss)[0] == doctest::Approx((2e-3 / eps) * (2e-3 / eps) / 3.0).epsilon(1e-9));
  }
}

TEST_CASE("sample_batch") {
  const Burst burst = synth_burst(tiny_scene_spec());

  SUBCASE("deterministic for a fixed seed") {
    Rng r1(7), r2(7);
    const RayBatch a = sample_batch(burst, 64, r1);
    const RayBatch b = sample_batch(burst, 64, r2);
    CHECK(a.us == b.us);
    CHECK(a.frame == b.frame);
    CHECK(*a.colors.buf == *b.colors.buf);
  }
  SUBCASE("pixel centers reproduce stored pixels") {
    Rng rng(9);
    const Image& img = burst.frames[2];
    const double u = (5 + 0.5) / burst.width;
    const double v = (7 + 0.5) / burst.height;
    for (int c = 0; c < 3; ++c)
      CHECK(img.sample_bilinear(u, v, c) == doctest::Approx(img.at(5, 7, c)).epsilon(1e-7));
  }
  SUBCASE("frames receive balanced sample counts (chi-square bound)") {
    Rng rng(11);
    const int64_t per_frame = 400;
    const int64_t n = per_frame * burst.frame_count();
    const RayBatch batch = sample_batch(burst, n, rng);
    std::vector<int64_t> counts(static_cast<size_t>(burst.frame_count()), 0);
    for (int32_t f : batch.frame) ++counts[static_cast<size_t>(f)];
    double chi2 = 0;
    for (int64_t c : counts) {
      const double d = static_cast<double>(c) - per_frame;
      chi2 += d * d / per_frame;
    }
    // 4 dof, p ~ 1e-4 cutoff
    CHECK(chi2 < 23.5);
  }
  SUBCASE("empty burst raises") {
    Burst empty;
    Rng rng(1);
    CHECK_THROWS_AS(sample_batch(empty, 8, rng), std::invalid_argument);
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor<float> p = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f});
    std::vector<float> grad = {0, 0, 0};
    AdamState state;
    adam_step("p", p, grad.data(), state, 1e-2);
    CHECK(p[0] == 1.0f);
    CHECK(p[1] == -2.0f);
    CHECK(p[2] == 0.5f);
  }
  SUBCASE("first step moves by about lr in the sign direction") {
    Tensor<float> p = Tensor<float>::zeros({2});
    std::vector<float> grad = {0.3f, -1.7f};
    AdamState state;
    adam_step("p", p, grad.data(), state, 1e-2);
    CHECK(p[0] == doctest::Approx(-1e-2).epsilon(1e-5));
    CHECK(p[1] == doctest::Approx(1e-2).epsilon(1e-5));
  }
  SUBCASE("constant gradient moves monotonically") {
    Tensor<float> p = Tensor<float>::zeros({1});
    std::vector<float> grad = {0.5f};
    AdamState state;
    adam_step("p", p, grad.data(), state, 1e-3);
    const float after_one = p[0];
    adam_step("p", p, grad.data(), state, 1e-3);
    CHECK(after_one < 0.0f);
    CHECK(p[0] < after_one);
  }
  SUBCASE("non-finite gradient names the tensor") {
    Tensor<float> p = Tensor<float>::zeros({2});
    std::vector<float> grad = {0.1f, std::numeric_limits<float>::quiet_NaN()};
    AdamState state;
    CHECK_THROWS_WITH_AS(adam_step("tr.rgb.table3", p, grad.data(), state, 1e-3),
                         doctest::Contains("tr.rgb.table3"), std::runtime_error);
  }
}

TEST_CASE("cosine learning rate endpoints") {
  CHECK(cosine_lr(3e-3, 3e-4, 0, 100) == doctest::Approx(3e-3));
  CHECK(cosine_lr(3e-3, 3e-4, 99, 100) == doctest::Approx(3e-4));
  CHECK(cosine_lr(3e-3, 3e-4, 50, 100) > 3e-4);
  CHECK(cosine_lr(3e-3, 3e-4, 50, 100) < 3e-3);
}

TEST_CASE("fit on a tiny single-plane burst") {
  const Burst burst = synth_burst(tiny_scene_spec());
  FitConfig config = tiny_fit_config();
  config.deterministic = true;
  config.track_grad_norms = true;

  FitResult result = fit(burst, config);

  SUBCASE("loss decreases") {
    REQUIRE(result.trace.size() >= 2);
    CHECK(result.trace.back().loss < result.trace.front().loss);
  }
  SUBCASE("every parameter group receives gradient") {
    for (const auto& [name, sum] : result.grad_abs_sum) CHECK_MESSAGE(sum > 0.0, name);
    CHECK(result.grad_abs_sum.count("pose.translation") == 1);
    CHECK(result.grad_abs_sum.count("tr.rgb.table0") == 1);
    CHECK(result.grad_abs_sum.count("alpha.b1") == 1);
  }
  SUBCASE("deterministic refit reproduces the trace bitwise") {
    FitResult again = fit(burst, config);
    REQUIRE(again.trace.size() == result.trace.size());
    const std::string csv_a = trace_to_csv(result.trace);
    const std::string csv_b = trace_to_csv(again.trace);
    CHECK(csv_a == csv_b);
  }
}

TEST_CASE("fit trace records every 50 steps by default") {
  const Burst burst = synth_burst(tiny_scene_spec());
  FitConfig config = tiny_fit_config();
  config.steps = 120;
  config.record_every = 50;
  const FitResult result = fit(burst, config);
  REQUIRE(result.trace.size() == 4);  // steps 0, 50, 100, and final 119
  CHECK(result.trace[0].step == 0);
  CHECK(result.trace[1].step == 50);
  CHECK(result.trace[2].step == 100);
  CHECK(result.trace[3].step == 119);
}

TEST_CASE("preset table matches the application configurations") {
  const FitConfig occ = preset_config("occlusion");
  CHECK(occ.model.tr_depth == 1.0);
  CHECK(occ.model.ob_depth == 0.5);
  CHECK(occ.eta_alpha == 0.02);
  CHECK(occ.model.tr_rgb_enc.levels == 16);   // Large
  CHECK(occ.model.ob_rgb_enc.levels == 12);   // Medium
  CHECK(occ.model.tr_flow_enc.levels == 6);   // Tiny
  CHECK(occ.model.tr_flow_points == 11);
  CHECK(occ.model.temperature == 10.0);
  CHECK(occ.steps == 6000);
  CHECK(occ.rays_per_step == (int64_t(1) << 18));

  const FitConfig refl = preset_config("reflection");
  CHECK(refl.model.ob_depth == 2.5);
  CHECK(refl.eta_alpha == 0.0);
  CHECK(refl.model.alpha_enc.levels == 16);  // Large alpha encoding

  const FitConfig seg = preset_config("segmentation");
  CHECK(seg.model.tr_flow_points == 15);
  CHECK(seg.alpha_mode == AlphaMode::kSegmentation);
  CHECK(seg.eta_alpha == 0.005);
  CHECK(seg.model.tr_flow_enc.levels == 8);  // Small

  const FitConfig dehaze = preset_config("dehaze");
  CHECK(dehaze.eta_alpha == -0.01);
  CHECK(dehaze.model.ob_depth == 0.5);
  CHECK(dehaze.model.alpha_enc.levels == 8);  // Small

  const FitConfig shadow = preset_config("shadow");
  CHECK(shadow.model.ob_depth == 2.0);
  CHECK(shadow.model.ob_rgb_enc.levels == 6);  // Tiny color

  const FitConfig fusion = preset_config("fusion");
  CHECK(fusion.model.single_layer);
  CHECK(fusion.model.tr_flow_points == 31);

  CHECK_THROWS_WITH_AS(preset_config("bogus"), doctest::Contains("occlusion"),
                       std::invalid_argument);
}

TEST_SUITE_END();
