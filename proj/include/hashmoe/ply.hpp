// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hashmoe/common.hpp"

namespace hashmoe {

// Decomposition export vertex: position, color, opacity of the sample
// (alpha = 1 - exp(-sigma delta)) and the expert that owned it.
struct PlyPoint {
  float x = 0, y = 0, z = 0;
  uint8_t r = 0, g = 0, b = 0;
  float alpha = 0;
  int32_t expert = 0;
};

// Binary little-endian PLY with per-vertex x/y/z, red/green/blue,
// alpha, expert_id.
void write_ply(const std::string& path, const std::vector<PlyPoint>& points);

// Minimal reader for the format written above (round-trip checks).
std::vector<PlyPoint> read_ply(const std::string& path);

}  // namespace hashmoe
