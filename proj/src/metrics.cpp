// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#include "hashmoe/metrics.hpp"

#include <sys/resource.h>

#include <cmath>

namespace hashmoe {

namespace {

void check_same_shape(const ImageF& a, const ImageF& b) {
  check_data(a.width == b.width && a.height == b.height &&
                 a.rgb.size() == b.rgb.size(),
             "metrics: image shape mismatch");
  check_data(a.width > 0 && a.height > 0, "metrics: empty image");
}

std::vector<double> luma709(const ImageF& img) {
  std::vector<double> y(img.pixels());
  for (size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.2126 * img.rgb[i * 3] + 0.7152 * img.rgb[i * 3 + 1] +
           0.0722 * img.rgb[i * 3 + 2];
  }
  return y;
}

// 11-tap Gaussian, sigma 1.5, normalized.
const std::vector<double>& gauss11() {
  static const std::vector<double> k = [] {
    std::vector<double> v(11);
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += v[i];
    }
    for (auto& x : v) x /= sum;
    return v;
  }();
  return k;
}

// Separable Gaussian blur with edge clamping.
std::vector<double> blur(const std::vector<double>& in, int w, int h) {
  const auto& k = gauss11();
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int t = -5; t <= 5; ++t) {
        const int xx = std::clamp(x + t, 0, w - 1);
        s += k[size_t(t + 5)] * in[size_t(y) * w + xx];
      }
      tmp[size_t(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int t = -5; t <= 5; ++t) {
        const int yy = std::clamp(y + t, 0, h - 1);
        s += k[size_t(t + 5)] * tmp[size_t(yy) * w + x];
      }
      out[size_t(y) * w + x] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const ImageF& a, const ImageF& b) {
  check_same_shape(a, b);
  double mse = 0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = double(a.rgb[i]) - double(b.rgb[i]);
    mse += d * d;
  }
  mse /= double(a.rgb.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageF& a, const ImageF& b) {
  check_same_shape(a, b);
  const int w = a.width, h = a.height;
  const auto ya = luma709(a), yb = luma709(b);
  const auto mu_a = blur(ya, w, h), mu_b = blur(yb, w, h);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto s_aa = blur(aa, w, h), s_bb = blur(bb, w, h), s_ab = blur(ab, w, h);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0;
  for (size_t i = 0; i < ya.size(); ++i) {
    const double va = s_aa[i] - mu_a[i] * mu_a[i];
    const double vb = s_bb[i] - mu_b[i] * mu_b[i];
    const double cov = s_ab[i] - mu_a[i] * mu_b[i];
    sum += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return sum / double(ya.size());
}

double peak_rss_mb() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return double(ru.ru_maxrss) / 1024.0;  // ru_maxrss is KiB on Linux
}

}  // namespace hashmoe
