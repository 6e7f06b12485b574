// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#include "hashmoe/synthetic.hpp"

#include <cmath>
#include <vector>

namespace hashmoe {

namespace {

// Smooth shell indicator: ~1 inside radius r around c, sigmoid falloff
// of width w. Keeps the oracle integral well behaved under refinement.
double soft_ball(const Vec3d& p, const Vec3d& c, double r, double w) {
  const double d = (p - c).norm();
  return 1.0 / (1.0 + std::exp((d - r) / w));
}

}  // namespace

void synthetic_field(const Vec3d& p, bool empty, double* sigma, double* rgb) {
  double s = 0.0;
  double col[3] = {0.0, 0.0, 0.0};
  auto add = [&](double dens, double cr, double cg, double cb) {
    s += dens;
    col[0] += dens * cr;
    col[1] += dens * cg;
    col[2] += dens * cb;
  };

  // Low-frequency regime: a ground slab below y = -0.25 with a gentle
  // horizontal color gradient.
  {
    const double dens = 12.0 / (1.0 + std::exp((p.y + 0.25) / 0.03));
    const double t = 0.5 + 0.5 * std::sin(1.5 * p.x);
    add(dens, 0.2 + 0.5 * t, 0.35, 0.6 - 0.4 * t);
  }

  // High-frequency regime: a central sphere carrying a fine sinusoidal
  // weave, plus three clutter bumps with their own fast patterns.
  {
    const double dens = 25.0 * soft_ball(p, {0.0, 0.12, 0.0}, 0.35, 0.015);
    const double w = std::sin(14.0 * p.x) * std::sin(14.0 * p.y) *
                     std::sin(14.0 * p.z);
    const double t = 0.5 + 0.5 * w;
    add(dens, 0.85 * t + 0.1, 0.2 + 0.6 * (1.0 - t), 0.25);
  }
  const Vec3d bumps[3] = {
      {0.55, -0.05, 0.1}, {-0.5, 0.05, -0.25}, {0.1, 0.05, 0.55}};
  for (int i = 0; i < 3; ++i) {
    const double dens = 30.0 * soft_ball(p, bumps[i], 0.12, 0.012);
    const double t = 0.5 + 0.5 * std::sin(20.0 * (p.x + p.y + p.z) + 2.0 * i);
    add(dens, 0.3 + 0.1 * i, 0.8 * t + 0.1, 0.9 - 0.25 * i);
  }

  if (s > 1e-12) {
    for (int c = 0; c < 3; ++c) rgb[c] = col[c] / s;
  } else {
    rgb[0] = rgb[1] = rgb[2] = 0.0;
  }
  *sigma = empty ? 0.0 : s;
}

Camera synthetic_camera(const SyntheticConfig& cfg, int view) {
  cfg.validate();
  check_config(view >= 0 && view < cfg.n_views, "synthetic: view out of range");
  const double two_pi = 6.283185307179586;
  const double a0 = two_pi * double(cfg.seed % 360) / 360.0;
  const double az = a0 + two_pi * double(view) / double(cfg.n_views);
  const double el = 0.25 + 0.2 * std::sin(3.0 * az);  // stay off the poles
  const Vec3d pos{cfg.orbit_radius * std::cos(el) * std::cos(az),
                  cfg.orbit_radius * std::sin(el),
                  cfg.orbit_radius * std::cos(el) * std::sin(az)};
  // Look-at frame: camera z points away from the origin (OpenGL back).
  const Vec3d zc = pos.normalized();
  Vec3d xc{-zc.z, 0.0, zc.x};
  xc = xc.normalized();
  const Vec3d yc{zc.y * xc.z - zc.z * xc.y, zc.z * xc.x - zc.x * xc.z,
                 zc.x * xc.y - zc.y * xc.x};
  Camera cam;
  cam.width = cam.height = cfg.resolution;
  cam.fx = cam.fy = 1.2 * cfg.resolution;
  cam.cx = cam.cy = cfg.resolution / 2.0;
  const Vec3d cols[3] = {xc, yc, zc};
  for (int r = 0; r < 3; ++r) {
    cam.c2w[r * 4 + 0] = (r == 0 ? cols[0].x : r == 1 ? cols[0].y : cols[0].z);
    cam.c2w[r * 4 + 1] = (r == 0 ? cols[1].x : r == 1 ? cols[1].y : cols[1].z);
    cam.c2w[r * 4 + 2] = (r == 0 ? cols[2].x : r == 1 ? cols[2].y : cols[2].z);
  }
  cam.c2w[3] = pos.x;
  cam.c2w[7] = pos.y;
  cam.c2w[11] = pos.z;
  cam.validate();
  return cam;
}

ImageF render_synthetic_view(const SyntheticConfig& cfg, const Camera& cam) {
  cfg.validate();
  ImageF img;
  img.width = cam.width;
  img.height = cam.height;
  img.rgb.assign(size_t(cam.width) * cam.height * 3, 0.0f);
  const int n = cfg.n_samples;
  std::vector<double> sigma(n), rgb(size_t(n) * 3), ts(n), deltas(n);
  std::vector<double> weights(n);
  const double bg[3] = {cfg.bg_color[0], cfg.bg_color[1], cfg.bg_color[2]};
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      float* out = &img.rgb[(size_t(py) * cam.width + px) * 3];
      Vec3d o, d;
      cam.pixel_ray(px, py, &o, &d);
      double te, tx;
      if (!sphere_span(o, d, 1.0, &te, &tx)) {
        for (int c = 0; c < 3; ++c) out[c] = float(bg[c]);
        continue;
      }
      const double dt = (tx - te) / n;
      for (int i = 0; i < n; ++i) {
        ts[i] = te + (i + 0.5) * dt;
        deltas[i] = dt;
        const Vec3d p = o + d * ts[i];
        synthetic_field(p, cfg.empty, &sigma[i], &rgb[size_t(i) * 3]);
      }
      double color[3], opacity, depth;
      composite_ray<double>(sigma.data(), rgb.data(), deltas.data(), ts.data(),
                            n, bg, color, &opacity, &depth, weights.data());
      for (int c = 0; c < 3; ++c) out[c] = float(color[c]);
    }
  }
  return img;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset ds;
  for (int v = 0; v < cfg.n_views; ++v) {
    const Camera cam = synthetic_camera(cfg, v);
    ds.images.push_back(quantize(render_synthetic_view(cfg, cam)));
    ds.cameras.push_back(cam);
    (v % 8 == 7 ? ds.val_idx : ds.train_idx).push_back(v);
  }
  compute_scene_bound(ds);
  ds.validate();
  return ds;
}

}  // namespace hashmoe
