#include "nsf/presets.hpp"

#include <stdexcept>

namespace nsf {

EncodingParams encoding_tiny() { return {4, 1.61, 6, 4, 12}; }
EncodingParams encoding_small() { return {4, 1.61, 8, 4, 14}; }
EncodingParams encoding_medium() { return {4, 1.61, 12, 4, 16}; }
EncodingParams encoding_large() { return {4, 1.61, 16, 4, 18}; }

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"occlusion", "reflection", "shadow",
                                                 "dehaze",    "segmentation", "fusion"};
  return names;
}

FitConfig preset_config(const std::string& name) {
  FitConfig c;
  c.preset = name;
  SceneModelConfig& m = c.model;
  m.tr_rgb_enc = encoding_large();
  m.tr_flow_enc = encoding_tiny();
  m.ob_flow_enc = encoding_tiny();
  m.tr_flow_points = 11;
  m.ob_flow_points = 11;
  m.tr_depth = 1.0;

  if (name == "occlusion") {
    m.ob_rgb_enc = encoding_medium();
    m.alpha_enc = encoding_medium();
    m.ob_depth = 0.5;
    m.temperature = 10.0;
    c.eta_alpha = 0.02;
  } else if (name == "reflection") {
    m.ob_rgb_enc = encoding_tiny();
    m.alpha_enc = encoding_large();
    m.ob_depth = 2.5;
    m.temperature = 1.0;
    c.eta_alpha = 0.0;
  } else if (name == "shadow") {
    m.ob_rgb_enc = encoding_tiny();
    m.alpha_enc = encoding_medium();
    m.ob_depth = 2.0;
    m.temperature = 1.0;
    c.eta_alpha = 0.0;
  } else if (name == "dehaze") {
    m.ob_rgb_enc = encoding_tiny();
    m.alpha_enc = encoding_small();
    m.ob_depth = 0.5;
    m.temperature = 1.0;
    c.eta_alpha = -0.01;  // reward: the haze layer is encouraged, then removed
  } else if (name == "segmentation") {
    m.tr_flow_enc = encoding_small();
    m.ob_flow_enc = encoding_small();
    m.tr_flow_points = 15;
    m.ob_flow_points = 15;
    m.ob_rgb_enc = encoding_large();
    m.alpha_enc = encoding_medium();
    m.ob_depth = 2.0;
    m.temperature = 1.0;
    c.eta_alpha = 0.005;
    c.alpha_mode = AlphaMode::kSegmentation;
  } else if (name == "fusion") {
    m.single_layer = true;
    m.tr_flow_enc = encoding_small();
    m.tr_flow_points = 31;
    m.temperature = 1.0;
    c.eta_alpha = 0.0;
  } else {
    std::string msg = "unknown preset '" + name + "'; valid presets:";
    for (const auto& p : preset_names()) msg += " " + p;
    throw std::invalid_argument(msg);
  }
  return c;
}

}  // namespace nsf
