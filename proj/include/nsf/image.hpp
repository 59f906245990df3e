#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace nsf {

// Row-major, channel-interleaved float image.
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c)
      : width(w), height(h), channels(c),
        pixels(static_cast<size_t>(w) * h * c, 0.0f) {
    if (w < 1 || h < 1 || c < 1) throw std::invalid_argument("image: invalid dimensions");
  }

  float& at(int x, int y, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  size_t size() const { return pixels.size(); }

  // Bilinear sample at normalized coordinates (u,v) in [0,1], pixel centers
  // at (x+0.5)/W; edges clamp.
  float sample_bilinear(double u, double v, int c) const {
    const double px = u * width - 0.5;
    const double py = v * height - 0.5;
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const double fx = px - x0;
    const double fy = py - y0;
    auto clamped = [&](int x, int y) {
      x = std::clamp(x, 0, width - 1);
      y = std::clamp(y, 0, height - 1);
      return static_cast<double>(at(x, y, c));
    };
    const double a = clamped(x0, y0) + fx * (clamped(x0 + 1, y0) - clamped(x0, y0));
    const double b = clamped(x0, y0 + 1) + fx * (clamped(x0 + 1, y0 + 1) - clamped(x0, y0 + 1));
    return static_cast<float>(a + fy * (b - a));
  }
};

// Luminance (Rec. 709 weights); single-channel images pass through.
inline Image luminance(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw std::invalid_argument("luminance: expected 1 or 3 channels");
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y, 0) = 0.2126f * img.at(x, y, 0) + 0.7152f * img.at(x, y, 1) +
                        0.0722f * img.at(x, y, 2);
  return out;
}

}  // namespace nsf
