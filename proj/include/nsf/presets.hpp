#pragma once

#include <string>
#include <vector>

#include "nsf/training.hpp"

namespace nsf {

// Application presets: per-layer encoding sizes, flow spline counts, plane
// depths, alpha regularization, and sigmoid temperature.
// Names: occlusion, reflection, shadow, dehaze, segmentation, fusion.
FitConfig preset_config(const std::string& name);

const std::vector<std::string>& preset_names();

// Encoding size rows (Tiny/Small/Medium/Large).
EncodingParams encoding_tiny();
EncodingParams encoding_small();
EncodingParams encoding_medium();
EncodingParams encoding_large();

}  // namespace nsf
