// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hashmoe/common.hpp"

namespace hashmoe {

// 8-bit RGB image, row-major, tightly packed.
struct Image8 {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // width*height*3

  size_t pixels() const { return size_t(width) * height; }
};

// Float RGB image in [0,1].
struct ImageF {
  int width = 0, height = 0;
  std::vector<float> rgb;

  size_t pixels() const { return size_t(width) * height; }
};

Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

ImageF to_float(const Image8& img);
Image8 quantize(const ImageF& img);

// Exact float dumps for bitwise comparisons: magic "HMRW", u32 width,
// u32 height, then width*height*3 little-endian f32.
void write_raw_image(const std::string& path, const ImageF& img);
ImageF read_raw_image(const std::string& path);

}  // namespace hashmoe
