// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ray generation, scene contraction, coarse-to-fine sampling, volume
// rendering with exact gradients, and the training losses.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hashmoe/model.hpp"

namespace hashmoe {

// ---------------------------------------------------------------------------
// Contraction

// Radial contraction into the radius-2 ball: identity inside the unit
// sphere, radius 2 - 1/||x|| along the same direction outside.
template <typename T>
Vec3<T> contract(Vec3<T> x) {
  const T n = x.norm();
  if (n <= T{1}) return x;
  const T s = (T{2} - T{1} / n) / n;
  return {x.x * s, x.y * s, x.z * s};
}

// Affine pack of the radius-2 ball into [0,1]^3 for grid lookup.
template <typename T>
Vec3<T> pack_unit(Vec3<T> p) {
  return {(p.x + T{2}) / T{4}, (p.y + T{2}) / T{4}, (p.z + T{2}) / T{4}};
}

// ---------------------------------------------------------------------------
// Cameras and rays

struct Camera {
  int width = 0, height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  // Camera-to-world, row-major 3x4; OpenGL axes (x right, y up, z back).
  double c2w[12] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

  Vec3d position() const { return {c2w[3], c2w[7], c2w[11]}; }

  void validate() const {
    check_data(width > 0 && height > 0, "camera: empty image size");
    check_data(fx > 0 && fy > 0, "camera: nonpositive focal length");
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double dot = 0;
        for (int r = 0; r < 3; ++r) dot += c2w[r * 4 + a] * c2w[r * 4 + b];
        const double want = a == b ? 1.0 : 0.0;
        check_data(std::abs(dot - want) < 1e-6,
                   "camera: rotation not orthonormal");
      }
    }
  }

  // Ray through the center of pixel (px, py).
  template <typename T>
  void pixel_ray(double px, double py, Vec3<T>* origin, Vec3<T>* dir) const {
    const double u = (px + 0.5 - cx) / fx;
    const double v = -(py + 0.5 - cy) / fy;
    const Vec3d dc{u, v, -1.0};
    Vec3d dw{c2w[0] * dc.x + c2w[1] * dc.y + c2w[2] * dc.z,
             c2w[4] * dc.x + c2w[5] * dc.y + c2w[6] * dc.z,
             c2w[8] * dc.x + c2w[9] * dc.y + c2w[10] * dc.z};
    dw = dw.normalized();
    *origin = {T(c2w[3]), T(c2w[7]), T(c2w[11])};
    *dir = {T(dw.x), T(dw.y), T(dw.z)};
  }
};

template <typename T>
struct RayBatch {
  std::vector<Vec3<T>> origins;
  std::vector<Vec3<T>> dirs;           // unit length
  std::vector<uint32_t> image_ids;     // appearance embedding per ray
  size_t count() const { return origins.size(); }
};

template <typename T>
void sample_rays(const Camera& cam, const uint32_t* pixels, size_t n,
                 uint32_t image_id, RayBatch<T>& out) {
  for (size_t i = 0; i < n; ++i) {
    const uint32_t px = pixels[i] % uint32_t(cam.width);
    const uint32_t py = pixels[i] / uint32_t(cam.width);
    check_data(py < uint32_t(cam.height), "sample_rays: pixel out of image");
    Vec3<T> o, d;
    cam.pixel_ray(double(px), double(py), &o, &d);
    out.origins.push_back(o);
    out.dirs.push_back(d);
    out.image_ids.push_back(image_id);
  }
}

// ---------------------------------------------------------------------------
// Sampling along rays

// Stratified t-values on [near, far]; bin midpoints when jitter is off.
template <typename T>
void stratified_coarse(T near, T far, int count, bool jitter, Rng& rng,
                       std::vector<T>& ts) {
  check_data(near < far, "stratified_coarse: near >= far");
  ts.resize(count);
  const T span = far - near;
  for (int i = 0; i < count; ++i) {
    const T u = jitter ? T(rng.uniform()) : T{0.5};
    ts[i] = near + span * (T(i) + u) / T(count);
  }
}

// Inverse-CDF draws over the coarse bins. Bin i spans the midpoints
// around coarse sample i (first/last bins reach near/far) and carries
// weight w[i]. Stratified u, midpoints when jitter is off.
template <typename T>
void importance_fine(const T* coarse_ts, const T* w, int n_coarse, T near,
                     T far, int count, bool jitter, Rng& rng,
                     std::vector<T>& ts) {
  check_data(near < far, "importance_fine: near >= far");
  std::vector<T> edges(n_coarse + 1);
  edges[0] = near;
  for (int i = 1; i < n_coarse; ++i) {
    edges[i] = (coarse_ts[i - 1] + coarse_ts[i]) / T{2};
  }
  edges[n_coarse] = far;
  std::vector<T> cdf(n_coarse + 1, T{0});
  T total = 0;
  for (int i = 0; i < n_coarse; ++i) total += std::max(w[i], T{0});
  if (total < T{1e-8}) {
    // Degenerate weights: fall back to uniform.
    stratified_coarse(near, far, count, jitter, rng, ts);
    std::sort(ts.begin(), ts.end());
    return;
  }
  for (int i = 0; i < n_coarse; ++i) {
    cdf[i + 1] = cdf[i] + std::max(w[i], T{0}) / total;
  }
  cdf[n_coarse] = T{1};
  ts.resize(count);
  for (int s = 0; s < count; ++s) {
    const T uj = jitter ? T(rng.uniform()) : T{0.5};
    const T u = (T(s) + uj) / T(count);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int bin = int(it - cdf.begin()) - 1;
    bin = std::clamp(bin, 0, n_coarse - 1);
    const T lo = cdf[bin], hi = cdf[bin + 1];
    const T frac = hi > lo ? (u - lo) / (hi - lo) : T{0.5};
    ts[s] = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
  }
  std::sort(ts.begin(), ts.end());
}

// ---------------------------------------------------------------------------
// Compositing

template <typename T>
struct RenderResult {
  size_t n_rays = 0;
  std::vector<T> color;    // n_rays * 3
  std::vector<T> opacity;  // n_rays: sum of weights
  std::vector<T> depth;    // n_rays: weight-averaged t
  std::vector<T> weights;  // per sample

  void resize(size_t rays, size_t samples) {
    n_rays = rays;
    color.assign(rays * 3, T{0});
    opacity.assign(rays, T{0});
    depth.assign(rays, T{0});
    weights.assign(samples, T{0});
  }
};

// Alpha compositing of one ray's samples [begin, end); accumulates the
// residual transmittance onto a constant background color.
template <typename T>
void composite_ray(const T* sigma, const T* rgb, const T* deltas, const T* ts,
                   size_t count, const T bg_color[3], T* color, T* opacity,
                   T* depth, T* weights) {
  T trans = 1;
  color[0] = color[1] = color[2] = T{0};
  *opacity = 0;
  *depth = 0;
  for (size_t i = 0; i < count; ++i) {
    const T alpha = T{1} - std::exp(-sigma[i] * deltas[i]);
    const T w = trans * alpha;
    weights[i] = w;
    for (int c = 0; c < 3; ++c) color[c] += w * rgb[i * 3 + c];
    *opacity += w;
    *depth += w * ts[i];
    trans *= T{1} - alpha;
  }
  for (int c = 0; c < 3; ++c) color[c] += trans * bg_color[c];
}

// Gradient of composite_ray's color output. dsigma/drgb are written.
// dC/dsigma_i = delta_i * ((1-alpha_i) T_i c_i - suffix_i) where
// suffix_i = sum_{j>i} w_j c_j + T_final bg (everything downstream of
// sample i scales by exp(-sigma_i delta_i)).
template <typename T>
void composite_ray_backward(const T* sigma, const T* rgb, const T* deltas,
                            size_t count, const T bg_color[3],
                            const T* weights, const T dcolor[3], T* dsigma,
                            T* drgb) {
  // Recover transmittance before each sample from the stored weights:
  // T_0 = 1, T_{i+1} = T_i - w_i.
  T trans_final = 1;
  for (size_t i = 0; i < count; ++i) trans_final -= weights[i];
  T suffix[3] = {trans_final * bg_color[0], trans_final * bg_color[1],
                 trans_final * bg_color[2]};
  // Walk backwards keeping T_i and the suffix sum.
  std::vector<T> trans(count + 1);
  trans[0] = 1;
  for (size_t i = 0; i < count; ++i) trans[i + 1] = trans[i] - weights[i];
  for (size_t ii = count; ii-- > 0;) {
    const T ti = trans[ii];
    const T one_m_alpha = ti > T{0} ? trans[ii + 1] / ti
                                    : std::exp(-sigma[ii] * deltas[ii]);
    const T w = weights[ii];
    T ds = 0;
    for (int c = 0; c < 3; ++c) {
      drgb[ii * 3 + c] = w * dcolor[c];
      ds += dcolor[c] *
            (one_m_alpha * ti * rgb[ii * 3 + c] - suffix[c]);
      suffix[c] += w * rgb[ii * 3 + c];
    }
    dsigma[ii] = deltas[ii] * ds;
  }
}

// ---------------------------------------------------------------------------
// Losses

// L_r: mean over rays of the channel-summed squared error. The mean
// keeps lambda independent of the ray batch size.
template <typename T>
T render_loss(const T* pred, const T* gt, size_t n_rays) {
  check_contract(n_rays > 0, "render_loss: empty batch");
  T s = 0;
  for (size_t i = 0; i < n_rays * 3; ++i) {
    const T d = pred[i] - gt[i];
    s += d * d;
  }
  return s / T(n_rays);
}

// dL_r/dpred, matching the reduction above.
template <typename T>
void render_loss_backward(const T* pred, const T* gt, size_t n_rays,
                          T* dpred) {
  for (size_t i = 0; i < n_rays * 3; ++i) {
    dpred[i] = T{2} * (pred[i] - gt[i]) / T(n_rays);
  }
}

// ---------------------------------------------------------------------------
// Full render pass: sampling + field evaluation + compositing, with the
// state needed for an exact backward sweep.

template <typename T>
struct RenderConfig {
  int n_coarse = 64;       // foreground stratified samples
  int n_fine = 64;         // foreground importance samples (0 disables)
  int n_bg = 32;           // background samples per ray
  T near = T{0.05};
  T far = T{16};
  T scene_bound = T{1};    // world radius of the unit sphere
  bool jitter = true;
  T bg_color[3] = {0, 0, 0};
  DispatchStrategy dispatch = DispatchStrategy::kFusedHash;

  void validate() const {
    check_config(n_coarse >= 1, "render: n_coarse must be >= 1");
    check_config(n_fine >= 0 && n_bg >= 0, "render: negative sample count");
    check_config(near > 0 && near < far, "render: need 0 < near < far");
    check_config(scene_bound > 0, "render: scene_bound must be > 0");
  }
};

template <typename T>
struct RenderPass {
  size_t n_rays = 0;
  std::vector<uint32_t> offsets;   // n_rays+1, into the sample arrays
  std::vector<T> ts, deltas;       // per sample, world units
  std::vector<uint8_t> is_bg;      // per sample
  std::vector<uint32_t> slot;      // per sample: index into fg or bg batch
  MoeBatch<T> fg;
  BgBatch<T> bg;
  std::vector<T> sigma, rgb;       // per sample, gathered
  RenderResult<T> result;
};

// Ray parameter span over which the normalized point lies inside the
// unit sphere; returns false when the ray misses it entirely.
template <typename T>
bool sphere_span(Vec3<T> o, Vec3<T> d, T bound, T* t_enter, T* t_exit) {
  // ||o + t d|| = bound with d unit length.
  const T b = o.dot(d);
  const T c = o.dot(o) - bound * bound;
  const T disc = b * b - c;
  if (disc <= T{0}) return false;
  const T root = std::sqrt(disc);
  const T t0 = -b - root;
  const T t1 = -b + root;
  if (t1 <= T{0}) return false;
  *t_enter = std::max(t0, T{0});
  *t_exit = t1;
  return true;
}

namespace detail {

// Evaluate the field on a fixed sample layout already stored in `pass`
// (ts/is_bg/offsets), filling sigma/rgb and compositing.
template <typename T>
void render_eval(const Model<T>& m, const RayBatch<T>& rays,
                 const RenderConfig<T>& rc, RenderPass<T>& pass,
                 const char* step_context) {
  const size_t total = pass.ts.size();
  pass.deltas.resize(total);
  pass.slot.resize(total);
  pass.fg.xs.clear();
  pass.fg.sh.clear();
  pass.fg.image_ids.clear();
  pass.bg.xs.clear();
  pass.bg.sh.clear();
  pass.bg.image_ids.clear();
  std::vector<T> shv(size_t(m.head.sh_d));
  for (size_t r = 0; r < pass.n_rays; ++r) {
    sh_encode(rays.dirs[r], m.cfg.sh_degree, shv.data());
    for (uint32_t i = pass.offsets[r]; i < pass.offsets[r + 1]; ++i) {
      const T t = pass.ts[i];
      pass.deltas[i] = (i + 1 < pass.offsets[r + 1] ? pass.ts[i + 1] : rc.far)
                       - t;
      const Vec3<T> p{rays.origins[r].x + t * rays.dirs[r].x,
                      rays.origins[r].y + t * rays.dirs[r].y,
                      rays.origins[r].z + t * rays.dirs[r].z};
      const Vec3<T> pn{p.x / rc.scene_bound, p.y / rc.scene_bound,
                       p.z / rc.scene_bound};
      const Vec3<T> packed = pack_unit(contract(pn));
      if (pass.is_bg[i]) {
        pass.slot[i] = uint32_t(pass.bg.xs.size());
        pass.bg.xs.push_back(packed);
        pass.bg.sh.insert(pass.bg.sh.end(), shv.begin(), shv.end());
        pass.bg.image_ids.push_back(rays.image_ids[r]);
      } else {
        pass.slot[i] = uint32_t(pass.fg.xs.size());
        pass.fg.xs.push_back(packed);
        pass.fg.sh.insert(pass.fg.sh.end(), shv.begin(), shv.end());
        pass.fg.image_ids.push_back(rays.image_ids[r]);
      }
    }
  }

  if (!pass.fg.xs.empty()) {
    moe_forward(m, pass.fg, rc.dispatch, step_context);
  } else {
    pass.fg.count = 0;
  }
  if (m.cfg.use_background && !pass.bg.xs.empty()) {
    bg_forward(m, pass.bg);
  } else {
    pass.bg.count = 0;
  }

  pass.sigma.resize(total);
  pass.rgb.resize(total * 3);
  for (size_t i = 0; i < total; ++i) {
    if (pass.is_bg[i]) {
      pass.sigma[i] = pass.bg.sigma[pass.slot[i]];
      for (int c = 0; c < 3; ++c) {
        pass.rgb[i * 3 + c] = pass.bg.rgb[pass.slot[i] * 3 + c];
      }
    } else {
      pass.sigma[i] = pass.fg.sigma[pass.slot[i]];
      for (int c = 0; c < 3; ++c) {
        pass.rgb[i * 3 + c] = pass.fg.rgb[pass.slot[i] * 3 + c];
      }
    }
  }

  pass.result.resize(pass.n_rays, total);
  for (size_t r = 0; r < pass.n_rays; ++r) {
    const uint32_t b = pass.offsets[r], e = pass.offsets[r + 1];
    composite_ray(pass.sigma.data() + b, pass.rgb.data() + b * 3,
                  pass.deltas.data() + b, pass.ts.data() + b, e - b,
                  rc.bg_color, pass.result.color.data() + r * 3,
                  &pass.result.opacity[r], &pass.result.depth[r],
                  pass.result.weights.data() + b);
  }
}

}  // namespace detail

// Forward render of a ray batch. With n_fine > 0 a coarse pass first
// produces importance weights; the final pass evaluates the merged
// sample set (gradients flow only through the final pass, the coarse
// weights act as a frozen proposal).
template <typename T>
void render_forward(const Model<T>& m, const RayBatch<T>& rays,
                    const RenderConfig<T>& rc, Rng& rng, RenderPass<T>& pass,
                    const char* step_context = "") {
  rc.validate();
  pass.n_rays = rays.count();
  pass.offsets.assign(pass.n_rays + 1, 0);

  // Per-ray foreground span [t_enter, t_exit] through the scene sphere
  // and background beyond, sampled uniformly in inverse distance. The
  // stretch in front of the sphere (cameras outside it) is treated as
  // empty space.
  std::vector<std::vector<T>> fg_ts(pass.n_rays), bg_ts(pass.n_rays);
  std::vector<T> enter_t(pass.n_rays), exit_t(pass.n_rays);
  for (size_t r = 0; r < pass.n_rays; ++r) {
    T t0 = rc.near, te = rc.near;
    if (sphere_span(rays.origins[r], rays.dirs[r], rc.scene_bound, &t0, &te)) {
      t0 = std::clamp(t0, rc.near, rc.far);
      te = std::clamp(te, rc.near, rc.far);
    }
    enter_t[r] = t0;
    exit_t[r] = te;
    if (te > t0) {
      stratified_coarse(t0, te, rc.n_coarse, rc.jitter, rng, fg_ts[r]);
    }
    if (rc.n_bg > 0 && m.cfg.use_background && te < rc.far) {
      bg_ts[r].resize(rc.n_bg);
      const T u_max = T{1} - te / rc.far;
      for (int i = 0; i < rc.n_bg; ++i) {
        const T uj = rc.jitter ? T(rng.uniform()) : T{0.5};
        const T u = u_max * (T(i) + uj) / T(rc.n_bg);
        bg_ts[r][i] = te / (T{1} - u);
      }
    }
  }

  auto assemble = [&](const std::vector<std::vector<T>>& fg) {
    pass.ts.clear();
    pass.is_bg.clear();
    for (size_t r = 0; r < pass.n_rays; ++r) {
      pass.offsets[r] = uint32_t(pass.ts.size());
      for (T t : fg[r]) {
        pass.ts.push_back(t);
        pass.is_bg.push_back(0);
      }
      for (T t : bg_ts[r]) {
        pass.ts.push_back(t);
        pass.is_bg.push_back(1);
      }
    }
    pass.offsets[pass.n_rays] = uint32_t(pass.ts.size());
  };

  assemble(fg_ts);
  detail::render_eval(m, rays, rc, pass, step_context);
  if (rc.n_fine <= 0) return;

  // Importance pass over the foreground spans.
  std::vector<std::vector<T>> merged(pass.n_rays);
  std::vector<T> fine;
  for (size_t r = 0; r < pass.n_rays; ++r) {
    if (fg_ts[r].empty()) continue;
    const uint32_t b = pass.offsets[r];
    importance_fine(fg_ts[r].data(), pass.result.weights.data() + b,
                    int(fg_ts[r].size()), enter_t[r], exit_t[r], rc.n_fine,
                    rc.jitter, rng, fine);
    merged[r].resize(fg_ts[r].size() + fine.size());
    std::merge(fg_ts[r].begin(), fg_ts[r].end(), fine.begin(), fine.end(),
               merged[r].begin());
  }
  assemble(merged);
  detail::render_eval(m, rays, rc, pass, step_context);
}

// Backward from per-ray color cotangents into all parameter gradients.
template <typename T>
void render_backward(const Model<T>& m, const RenderConfig<T>& rc,
                     RenderPass<T>& pass, const T* dcolor, T balance_scale,
                     T* grads) {
  const size_t total = pass.ts.size();
  std::vector<T> dsigma(total), drgb(total * 3);
  for (size_t r = 0; r < pass.n_rays; ++r) {
    const uint32_t b = pass.offsets[r], e = pass.offsets[r + 1];
    composite_ray_backward(pass.sigma.data() + b, pass.rgb.data() + b * 3,
                           pass.deltas.data() + b, e - b, rc.bg_color,
                           pass.result.weights.data() + b, dcolor + r * 3,
                           dsigma.data() + b, drgb.data() + b * 3);
  }
  // Scatter sample cotangents back to the field batches.
  std::vector<T> fg_ds(pass.fg.count), fg_dc(pass.fg.count * 3);
  std::vector<T> bg_ds(pass.bg.count), bg_dc(pass.bg.count * 3);
  for (size_t i = 0; i < total; ++i) {
    if (pass.is_bg[i]) {
      bg_ds[pass.slot[i]] = dsigma[i];
      for (int c = 0; c < 3; ++c) bg_dc[pass.slot[i] * 3 + c] = drgb[i * 3 + c];
    } else {
      fg_ds[pass.slot[i]] = dsigma[i];
      for (int c = 0; c < 3; ++c) fg_dc[pass.slot[i] * 3 + c] = drgb[i * 3 + c];
    }
  }
  if (pass.fg.count > 0) {
    moe_backward(m, pass.fg, fg_ds.data(), fg_dc.data(), balance_scale, grads);
  }
  if (pass.bg.count > 0) {
    bg_backward(m, pass.bg, bg_ds.data(), bg_dc.data(), grads);
  }
}

}  // namespace hashmoe
