#include "nsf/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsf/checkpoint.hpp"
#include "nsf/data.hpp"
#include "nsf/metrics.hpp"
#include "nsf/png_io.hpp"
#include "nsf/presets.hpp"
#include "nsf/runtime.hpp"
#include "nsf/training.hpp"

namespace nsf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_echo(const FitConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["steps"] = c.steps;
  j["rays_per_step"] = c.rays_per_step;
  j["lr_initial"] = c.lr_initial;
  j["lr_final"] = c.lr_final;
  j["pose_lr_scale"] = c.pose_lr_scale;
  j["eta_alpha"] = c.eta_alpha;
  j["alpha_mode"] = c.alpha_mode == AlphaMode::kSegmentation ? "segmentation" : "magnitude";
  j["eps"] = c.eps;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["coarse_to_fine"] = c.coarse_to_fine;
  j["eta_rotation"] = c.model.eta_rotation;
  j["temperature"] = c.model.temperature;
  j["tr_depth"] = c.model.tr_depth;
  j["ob_depth"] = c.model.ob_depth;
  j["single_layer"] = c.model.single_layer;
  j["tr_flow_points"] = c.model.tr_flow_points;
  j["ob_flow_points"] = c.model.ob_flow_points;
  j["gradient_loss"] = c.gradient_loss.enabled;
  return j;
}

int run_fit(const std::string& input, const std::string& preset, const std::string& out_dir,
            std::optional<int64_t> steps, std::optional<int64_t> rays,
            std::optional<uint64_t> seed, std::optional<double> lr,
            std::optional<double> eta_alpha, bool deterministic, bool no_coarse_to_fine,
            bool enable_gradient_loss) {
  FitConfig config = preset_config(preset);
  if (steps) config.steps = *steps;
  if (rays) config.rays_per_step = *rays;
  if (seed) config.seed = *seed;
  if (lr) {
    config.lr_initial = *lr;
    config.lr_final = *lr / 10.0;
  }
  if (eta_alpha) config.eta_alpha = *eta_alpha;
  config.deterministic = deterministic;
  if (no_coarse_to_fine) config.coarse_to_fine = false;
  config.gradient_loss.enabled = enable_gradient_loss;

  const Burst burst = load_bundle(input);
  fs::create_directories(out_dir);
  {
    std::ofstream cf(fs::path(out_dir) / "config.json");
    cf << config_echo(config).dump(2) << "\n";
  }

  FitResult result = fit(burst, config);

  {
    std::ofstream lf(fs::path(out_dir) / "loss.csv");
    lf << trace_to_csv(result.trace);
  }
  save_checkpoint(result.scene, burst.width, burst.height,
                  (fs::path(out_dir) / "checkpoint.nsfc").string());

  const double t_mid = 0.0;
  Image tr = render_layer(result.scene, RenderLayer::kTransmission, burst.width, burst.height, t_mid);
  save_png16(tonemap(tr), (fs::path(out_dir) / "transmission.png").string());
  Image comp = render_layer(result.scene, RenderLayer::kComposite, burst.width, burst.height, t_mid);
  save_png16(tonemap(comp), (fs::path(out_dir) / "composite.png").string());
  if (result.scene.obstruction) {
    Image ob = render_layer(result.scene, RenderLayer::kObstruction, burst.width, burst.height, t_mid);
    save_png16(tonemap(ob), (fs::path(out_dir) / "obstruction.png").string());
    Image al = render_layer(result.scene, RenderLayer::kAlpha, burst.width, burst.height, t_mid);
    save_png16(tonemap(al, 1.0), (fs::path(out_dir) / "alpha.png").string());
  }
  std::cout << "fit complete: " << out_dir << " (final loss "
            << (result.trace.empty() ? 0.0 : result.trace.back().loss) << ")\n";
  return 0;
}

int run_render(const std::string& model, const std::string& layer, double t,
               const std::string& out, std::optional<int> width, std::optional<int> height,
               std::optional<double> alpha_override) {
  LoadedCheckpoint ckpt = load_checkpoint(model);
  const int w = width.value_or(ckpt.source_width);
  const int h = height.value_or(ckpt.source_height);
  const RenderLayer which = parse_render_layer(layer);
  Image img = render_layer(ckpt.scene, which, w, h, t, alpha_override);
  save_png16(tonemap(img, which == RenderLayer::kAlpha ? 1.0 : 2.2), out);
  std::cout << "rendered " << layer << " to " << out << "\n";
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out) {
  std::ifstream sf(spec_path);
  if (!sf) throw std::runtime_error("cannot open spec: " + spec_path);
  std::stringstream ss;
  ss << sf.rdbuf();
  const SynthSpec spec = synth_spec_from_json(ss.str());
  const Burst burst = synth_burst(spec);
  save_bundle(burst, out);
  std::cout << "wrote bundle: " << out << " (" << burst.frame_count() << " frames "
            << burst.width << "x" << burst.height << ")\n";
  return 0;
}

int run_eval(const std::string& pred, const std::string& ref, const std::string& mask_pred,
             const std::string& mask_ref) {
  const Image a = load_png(pred);
  const Image b = load_png(ref);
  MetricReport report;
  report.psnr_db = psnr(a, b);
  report.ssim = ssim(a, b);
  if (!mask_pred.empty() && !mask_ref.empty())
    report.iou = mask_iou(load_png(mask_pred), load_png(mask_ref));

  json j;
  if (std::isinf(report.psnr_db))
    j["psnr_db"] = "inf";
  else
    j["psnr_db"] = report.psnr_db;
  j["ssim"] = report.ssim;
  if (report.iou) j["iou"] = *report.iou;
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
  CLI::App app{"neural spline field burst fusion and layer separation"};
  app.require_subcommand(1);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit the scene model to a burst bundle");
  std::string fit_input, fit_preset = "occlusion", fit_out;
  std::optional<int64_t> fit_steps, fit_rays;
  std::optional<uint64_t> fit_seed;
  std::optional<double> fit_lr, fit_eta_alpha;
  bool fit_det = false, fit_no_c2f = false, fit_grad_loss = false;
  fit_cmd->add_option("--input", fit_input, "bundle directory")->required();
  fit_cmd->add_option("--preset", fit_preset, "application preset");
  fit_cmd->add_option("--out", fit_out, "output directory")->required();
  fit_cmd->add_option("--steps", fit_steps, "optimization steps (default 6000)");
  fit_cmd->add_option("--rays", fit_rays, "rays per step (default 2^18)");
  fit_cmd->add_option("--seed", fit_seed, "rng seed");
  fit_cmd->add_option("--lr", fit_lr, "initial learning rate (final = lr/10)");
  fit_cmd->add_option("--eta-alpha", fit_eta_alpha, "alpha regularization weight");
  fit_cmd->add_flag("--deterministic", fit_det, "serial-deterministic mode");
  fit_cmd->add_flag("--no-coarse-to-fine", fit_no_c2f, "disable level masking");
  fit_cmd->add_flag("--gradient-loss", fit_grad_loss, "enable the paired-perturbation loss");

  // render
  auto* render_cmd = app.add_subcommand("render", "render a layer from a checkpoint");
  std::string r_model, r_layer = "composite", r_out;
  double r_time = 0.0;
  std::optional<int> r_width, r_height;
  std::optional<double> r_alpha;
  render_cmd->add_option("--model", r_model, "checkpoint file")->required();
  render_cmd->add_option("--layer", r_layer, "transmission|obstruction|alpha|composite");
  render_cmd->add_option("--time", r_time, "timestamp in [0,1]");
  render_cmd->add_option("--out", r_out, "output png")->required();
  render_cmd->add_option("--width", r_width, "render width");
  render_cmd->add_option("--height", r_height, "render height");
  render_cmd->add_option("--alpha-override", r_alpha, "fixed alpha for composite");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic burst bundle");
  std::string s_spec, s_out;
  synth_cmd->add_option("--spec", s_spec, "synth spec json")->required();
  synth_cmd->add_option("--out", s_out, "bundle directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "psnr/ssim (and optional mask IoU)");
  std::string e_pred, e_ref, e_mask_pred, e_mask_ref;
  eval_cmd->add_option("--pred", e_pred, "predicted image png")->required();
  eval_cmd->add_option("--ref", e_ref, "reference image png")->required();
  eval_cmd->add_option("--mask-pred", e_mask_pred, "predicted mask png");
  eval_cmd->add_option("--mask-ref", e_mask_ref, "reference mask png");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*fit_cmd)
      return run_fit(fit_input, fit_preset, fit_out, fit_steps, fit_rays, fit_seed, fit_lr,
                     fit_eta_alpha, fit_det, fit_no_c2f, fit_grad_loss);
    if (*render_cmd)
      return run_render(r_model, r_layer, r_time, r_out, r_width, r_height, r_alpha);
    if (*synth_cmd) return run_synth(s_spec, s_out);
    if (*eval_cmd) return run_eval(e_pred, e_ref, e_mask_pred, e_mask_ref);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FitAbort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace nsf
