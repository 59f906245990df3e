#pragma once

#include <optional>

#include "nsf/image.hpp"

namespace nsf {

struct MetricReport {
  double psnr_db = 0.0;  // +infinity for identical inputs
  double ssim = 0.0;
  std::optional<double> iou;
};

// 10 log10(peak^2 / MSE); identical images report +infinity.
double psnr(const Image& a, const Image& b, double peak = 1.0);

// Mean local SSIM on luminance with an 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Image& a, const Image& b);

// |a AND b| / |a OR b| after thresholding at 0.5; empty union counts as 1.
double mask_iou(const Image& a, const Image& b);

}  // namespace nsf
