#pragma once

#include <string>

#include "nsf/image.hpp"

namespace nsf {

// 16-bit PNG (grayscale for 1-channel images, RGB otherwise); values are
// clamped to [0,1] before quantization.
void save_png16(const Image& img, const std::string& path);

// Reads 8- or 16-bit gray/RGB/RGBA PNGs to floats in [0,1] (alpha dropped).
Image load_png(const std::string& path);

}  // namespace nsf
