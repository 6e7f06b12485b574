// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hashmoe/image_io.hpp"

namespace hashmoe {

// PSNR = 10 log10(1 / MSE) over all RGB values in [0,1]; identical
// images report the 99 dB cap.
double psnr(const ImageF& a, const ImageF& b);

// SSIM on Rec. 709 luma with an 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const ImageF& a, const ImageF& b);

struct MetricsReport {
  std::vector<double> per_image_psnr;
  std::vector<double> per_image_ssim;
  double mean_psnr = 0, mean_ssim = 0;
  double runtime_seconds = 0;
  double peak_rss_mb = 0;
};

// Resident-set high-water mark of the current process, in MiB.
double peak_rss_mb();

}  // namespace hashmoe
