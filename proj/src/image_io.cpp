// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#include "hashmoe/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace hashmoe {

namespace {

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

Image8 read_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  check_data(f != nullptr, "png: cannot open " + path);
  FileCloser closer{f};
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_data(png != nullptr, "png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: decode failed for " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  // Normalize everything to 8-bit RGB.
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  // Composite alpha onto black so transparent sources match our
  // default background.
  if (type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  Image8 img;
  img.width = int(w);
  img.height = int(h);
  img.rgb.resize(size_t(w) * h * 3);
  check_data(png_get_rowbytes(png, info) == size_t(w) * 3,
             "png: unexpected row layout in " + path);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = img.rgb.data() + size_t(y) * w * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image8& img) {
  check_data(img.width > 0 && img.height > 0 &&
                 img.rgb.size() == img.pixels() * 3,
             "png: malformed image buffer");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  check_data(f != nullptr, "png: cannot open for writing " + path);
  FileCloser closer{f};
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_data(png != nullptr, "png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: encode failed for " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(
                           img.rgb.data() + size_t(y) * img.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF to_float(const Image8& img) {
  ImageF out;
  out.width = img.width;
  out.height = img.height;
  out.rgb.resize(img.rgb.size());
  for (size_t i = 0; i < img.rgb.size(); ++i) {
    out.rgb[i] = float(img.rgb[i]) / 255.0f;
  }
  return out;
}

Image8 quantize(const ImageF& img) {
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.rgb.resize(img.rgb.size());
  for (size_t i = 0; i < img.rgb.size(); ++i) {
    const float v = std::clamp(img.rgb[i], 0.0f, 1.0f);
    out.rgb[i] = uint8_t(std::lround(v * 255.0f));
  }
  return out;
}

void write_raw_image(const std::string& path, const ImageF& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check_data(bool(f), "raw: cannot open for writing " + path);
  f.write("HMRW", 4);
  const uint32_t w = uint32_t(img.width), h = uint32_t(img.height);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          std::streamsize(img.rgb.size() * sizeof(float)));
  check_data(bool(f), "raw: write failed " + path);
}

ImageF read_raw_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_data(bool(f), "raw: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  check_data(f && std::memcmp(magic, "HMRW", 4) == 0, "raw: bad magic");
  uint32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  check_data(bool(f) && w > 0 && h > 0, "raw: bad header");
  ImageF img;
  img.width = int(w);
  img.height = int(h);
  img.rgb.resize(size_t(w) * h * 3);
  f.read(reinterpret_cast<char*>(img.rgb.data()),
         std::streamsize(img.rgb.size() * sizeof(float)));
  check_data(bool(f), "raw: truncated " + path);
  return img;
}

}  // namespace hashmoe
