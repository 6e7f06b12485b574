// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hashmoe/image_io.hpp"
#include "hashmoe/render.hpp"

namespace hashmoe {

enum class DatasetFormat { kAuto, kTransformsJson, kMegaNerfLayout };

struct Dataset {
  std::vector<Image8> images;
  std::vector<Camera> cameras;
  std::vector<int> train_idx, val_idx;  // disjoint indices into images
  Vec3d scene_origin{0, 0, 0};
  double scene_radius = 1.0;

  size_t count() const { return images.size(); }
  void validate() const;
};

// Scene origin = least-squares focus point of the camera viewing axes
// (falls back to the position centroid when the axes are near-parallel);
// radius = max camera distance from it * 1.1.
void compute_scene_bound(Dataset& ds);

// Native format: transforms.json next to an images/ directory
// (camera_angle_x or fl_x/fl_y/cx/cy, frames with file_path and a 4x4
// transform_matrix). A transforms_val.json, when present, defines the
// validation split; otherwise every 8th frame is held out.
//
// MegaNerfLayout (read-only) is a pinned plain-file analogue of
// Mega-NeRF exports: <root>/{train,val}/rgbs/NNNNNN.png paired with
// <root>/{train,val}/metadata/NNNNNN.json holding {"W","H",
// "intrinsics":[fx,fy,cx,cy],"c2w":[12 row-major values]}. Anything
// else fails loudly with the offending file named.
Dataset load_dataset(const std::string& path, DatasetFormat format);

// Writes dataset images plus transforms.json/transforms_val.json under
// dir (used by the synthetic generator; round-trips through
// load_dataset).
void save_transforms_dataset(const Dataset& ds, const std::string& dir);

}  // namespace hashmoe
