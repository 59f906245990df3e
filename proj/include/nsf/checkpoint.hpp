#pragma once

#include <string>

#include "nsf/layers.hpp"

namespace nsf {

// Single-file checkpoint: magic + version, a JSON structural header (model
// config, intrinsics, frame timestamps, device rotations, source resolution),
// then named float32 parameter tensors. Tensors are indexed by name so a
// renderer can load selectively.
void save_checkpoint(SceneModel<float>& scene, int source_width, int source_height,
                     const std::string& path);

struct LoadedCheckpoint {
  SceneModel<float> scene;
  int source_width = 0, source_height = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace nsf
