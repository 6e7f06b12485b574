// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "hashmoe/dataset.hpp"

namespace hashmoe {

// Procedural scene used for fixtures and end-to-end fits. All content
// lives inside the unit ball; cameras orbit outside it.
struct SyntheticConfig {
  uint64_t seed = 0;     // rotates the orbit start angle
  int n_views = 8;
  int resolution = 64;   // square images
  int n_samples = 128;   // oracle samples per ray
  double orbit_radius = 3.0;
  double bg_color[3] = {1.0, 1.0, 1.0};
  bool empty = false;    // force sigma to zero everywhere

  void validate() const {
    check_config(n_views > 0, "synthetic: n_views must be positive");
    check_config(resolution > 0 && resolution <= 256,
                 "synthetic: resolution must be in (0, 256]");
    check_config(n_samples > 0, "synthetic: n_samples must be positive");
    check_config(orbit_radius > 1.0,
                 "synthetic: orbit must stay outside the unit ball");
  }
};

// Analytic density and color at p. Mixes a smooth low-frequency ground
// slab with a high-frequency patterned sphere and small clutter bumps,
// so experts at different resolutions have distinct work to do.
void synthetic_field(const Vec3d& p, bool empty, double* sigma, double* rgb);

// Camera for orbit slot `view`, looking at the origin.
Camera synthetic_camera(const SyntheticConfig& cfg, int view);

// Deterministic reference render of one view: uniform midpoint samples
// along the ray's unit-sphere span, composited over bg_color.
ImageF render_synthetic_view(const SyntheticConfig& cfg, const Camera& cam);

// Full dataset: n_views orbit cameras, every 8th view held out for
// validation. Byte-for-byte deterministic for a given config.
Dataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace hashmoe
