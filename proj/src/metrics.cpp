#include "nsf/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace nsf {

namespace {

void check_shapes(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak) {
  check_shapes(a, b, "psnr");
  double mse = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b) {
  check_shapes(a, b, "ssim");
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  if (a.width < kWindow || a.height < kWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  const Image ya = luminance(a);
  const Image yb = luminance(b);

  double kernel[kWindow];
  double ksum = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    kernel[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  // separable windowed moments, valid region only
  const int w = a.width, h = a.height;
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  auto blur = [&](const std::vector<double>& src) {
    std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0;
        for (int k = 0; k < kWindow; ++k) s += kernel[k] * src[static_cast<size_t>(y) * w + x + k];
        tmp[static_cast<size_t>(y) * ow + x] = s;
      }
    std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0;
        for (int k = 0; k < kWindow; ++k) s += kernel[k] * tmp[static_cast<size_t>(y + k) * ow + x];
        out[static_cast<size_t>(y) * ow + x] = s;
      }
    return out;
  };

  const size_t n = static_cast<size_t>(w) * h;
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  for (size_t i = 0; i < n; ++i) {
    pa[i] = ya.pixels[i];
    pb[i] = yb.pixels[i];
    paa[i] = pa[i] * pa[i];
    pbb[i] = pb[i] * pb[i];
    pab[i] = pa[i] * pb[i];
  }
  const auto mu_a = blur(pa);
  const auto mu_b = blur(pb);
  const auto m_aa = blur(paa);
  const auto m_bb = blur(pbb);
  const auto m_ab = blur(pab);

  double acc = 0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2 * mu_a[i] * mu_b[i] + kC1) * (2 * cov + kC2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_a.size());
}

double mask_iou(const Image& a, const Image& b) {
  check_shapes(a, b, "mask_iou");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const bool pa = a.pixels[i] >= 0.5f;
    const bool pb = b.pixels[i] >= 0.5f;
    inter += pa && pb;
    uni += pa || pb;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace nsf
