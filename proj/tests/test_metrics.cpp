#include <doctest.h>

#include <cmath>
#include <limits>

#include "nsf/metrics.hpp"
#include "nsf/rng.hpp"

using namespace nsf;

TEST_SUITE_BEGIN("metrics");

namespace {

Image constant_image(int w, int h, int c, float v) {
  Image img(w, h, c);
  for (auto& p : img.pixels) p = v;
  return img;
}

Image random_image(int w, int h, int c, uint64_t seed) {
  Image img(w, h, c);
  Rng rng(seed);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

Image hflip(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

// Independent direct windowed-statistics SSIM (no separable optimization, no
// shared code with the implementation under test).
double ssim_oracle(const Image& a3, const Image& b3) {
  const Image a = luminance(a3);
  const Image b = luminance(b3);
  const int win = 11;
  const double sigma = 1.5;
  double kernel[11][11];
  double ksum = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - 5.0, dx = j - 5.0;
      kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      ksum += kernel[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) kernel[i][j] /= ksum;

  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0;
  int count = 0;
  for (int y = 0; y + win <= a.height; ++y)
    for (int x = 0; x + win <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double pa = a.at(x + j, y + i, 0);
          const double pb = b.at(x + j, y + i, 0);
          ma += kernel[i][j] * pa;
          mb += kernel[i][j] * pb;
          saa += kernel[i][j] * pa * pa;
          sbb += kernel[i][j] * pb * pb;
          sab += kernel[i][j] * pa * pb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace

TEST_CASE("psnr") {
  const Image a = random_image(16, 12, 3, 1);

  SUBCASE("identical images report infinity") {
    CHECK(std::isinf(psnr(a, a)));
  }
  SUBCASE("all-zero vs all-one is 0 dB") {
    CHECK(psnr(constant_image(8, 8, 3, 0.0f), constant_image(8, 8, 3, 1.0f)) ==
          doctest::Approx(0.0));
  }
  SUBCASE("mse 0.01 gives 20 dB") {
    const Image b = constant_image(8, 8, 1, 0.5f);
    const Image c = constant_image(8, 8, 1, 0.6f);
    CHECK(psnr(b, c) == doctest::Approx(20.0).epsilon(1e-6));
  }
  SUBCASE("symmetric and flip invariant") {
    const Image b = random_image(16, 12, 3, 2);
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));
    CHECK(psnr(hflip(a), hflip(b)) == doctest::Approx(psnr(a, b)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch raises") {
    CHECK_THROWS_AS(psnr(a, constant_image(8, 8, 3, 0.f)), std::invalid_argument);
  }
}

TEST_CASE("ssim") {
  SUBCASE("self similarity is one") {
    const Image a = random_image(20, 16, 3, 3);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant shift matches the direct windowed oracle") {
    const Image a = constant_image(16, 16, 3, 0.5f);
    const Image b = constant_image(16, 16, 3, 0.6f);
    CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-6));
  }
  SUBCASE("random pair matches the oracle") {
    const Image a = random_image(20, 14, 3, 5);
    const Image b = random_image(20, 14, 3, 6);
    CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-6));
  }
  SUBCASE("anti-correlated checker scores negative") {
    Image a(16, 16, 1);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) a.at(x, y, 0) = ((x / 2 + y / 2) % 2) ? 1.0f : 0.0f;
    Image b = a;
    for (auto& p : b.pixels) p = 1.0f - p;
    CHECK(ssim(a, b) < 0.0);
  }
  SUBCASE("flip invariance") {
    const Image a = random_image(18, 14, 3, 7);
    const Image b = random_image(18, 14, 3, 8);
    CHECK(ssim(hflip(a), hflip(b)) == doctest::Approx(ssim(a, b)).epsilon(1e-12));
  }
  SUBCASE("window larger than the image raises") {
    CHECK_THROWS_AS(ssim(constant_image(8, 8, 1, 0.f), constant_image(8, 8, 1, 0.f)),
                    std::invalid_argument);
  }
}

TEST_CASE("mask iou") {
  Image a(4, 2, 1), b(4, 2, 1);

  SUBCASE("identical masks give one") {
    for (auto& p : a.pixels) p = 1.0f;
    CHECK(mask_iou(a, a) == 1.0);
  }
  SUBCASE("disjoint non-empty masks give zero") {
    a.at(0, 0, 0) = 1.0f;
    b.at(3, 1, 0) = 1.0f;
    CHECK(mask_iou(a, b) == 0.0);
  }
  SUBCASE("half-overlapping equal-area masks give one third") {
    // a covers columns 0..1, b covers columns 1..2
    for (int y = 0; y < 2; ++y) {
      a.at(0, y, 0) = a.at(1, y, 0) = 1.0f;
      b.at(1, y, 0) = b.at(2, y, 0) = 1.0f;
    }
    CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("empty union counts as one") { CHECK(mask_iou(a, b) == 1.0); }
  SUBCASE("real-valued masks threshold at 0.5") {
    a.at(0, 0, 0) = 0.51f;
    b.at(0, 0, 0) = 0.49f;
    CHECK(mask_iou(a, b) == 0.0);
  }
  SUBCASE("iou in range and flip invariant") {
    const Image ra = random_image(9, 7, 1, 11);
    const Image rb = random_image(9, 7, 1, 12);
    const double v = mask_iou(ra, rb);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(mask_iou(hflip(ra), hflip(rb)) == doctest::Approx(v));
  }
}

TEST_SUITE_END();
