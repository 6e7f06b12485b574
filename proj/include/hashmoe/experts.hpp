// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Heterogeneous mixture of hash experts and the unified prediction head:
// per-point features from the routed expert(s), gate-value scaling, and
// density/color prediction.
#pragma once

#include <cmath>
#include <vector>

#include "hashmoe/field_math.hpp"
#include "hashmoe/gating.hpp"
#include "hashmoe/hash_grid.hpp"

namespace hashmoe {

// round(lo * (hi/lo)^(i/(n-1))) with the endpoints pinned exactly.
inline int geomspace_round(int lo, int hi, int n, int i) {
  if (i == 0 || n == 1) return lo;
  if (i == n - 1) return hi;
  return static_cast<int>(std::lround(
      lo * std::pow(double(hi) / double(lo), double(i) / double(n - 1))));
}

struct PyramidConfig {
  int n_experts = 8;
  int levels = 16;
  int feats = 2;
  int log2_table = 19;
  bool heterogeneous = true;
  int base_min = 16, base_max = 512;
  int desired_min = 2048, desired_max = 16384;

  GridConfig expert_grid(int i) const {
    GridConfig g;
    g.levels = levels;
    g.feats = feats;
    g.log2_table = log2_table;
    if (heterogeneous) {
      g.base_resolution = geomspace_round(base_min, base_max, n_experts, i);
      g.max_resolution =
          geomspace_round(desired_min, desired_max, n_experts, i);
    } else {
      g.base_resolution = base_min;
      g.max_resolution = desired_min;
    }
    return g;
  }

  int feat_dim() const { return levels * feats; }

  void validate() const {
    check_config(n_experts >= 1, "pyramid: n_experts must be >= 1");
    GridConfig prev;
    for (int i = 0; i < n_experts; ++i) {
      const GridConfig g = expert_grid(i);
      g.validate();
      if (i > 0) {
        check_config(g.base_resolution >= prev.base_resolution &&
                         g.max_resolution >= prev.max_resolution,
                     "pyramid: resolutions must be non-decreasing");
      }
      prev = g;
    }
  }
};

template <typename T>
struct ExpertPyramid {
  PyramidConfig cfg;
  std::vector<HashGrid<T>> grids;  // contiguous ranges in the store

  int feat_dim() const { return cfg.feat_dim(); }
  int cache_rows() const { return grids[0].cache_rows(); }
  int cache_fracs() const { return grids[0].cache_fracs(); }

  static ExpertPyramid create(ParamStore<T>& store, const std::string& name,
                              const PyramidConfig& cfg) {
    cfg.validate();
    ExpertPyramid p;
    p.cfg = cfg;
    for (int i = 0; i < cfg.n_experts; ++i) {
      p.grids.push_back(
          HashGrid<T>::create(store, name + ".e" + std::to_string(i),
                              cfg.expert_grid(i)));
    }
    return p;
  }

  void init(T* params, Rng& rng) const {
    for (const auto& g : grids) g.init(params, rng);
  }

  // Fused dispatch: the expert index folds into the table offset, so a
  // routed point needs no gather/scatter, only a different base row.
  size_t fused_row(int expert, int level, uint32_t cx, uint32_t cy,
                   uint32_t cz) const {
    const HashGrid<T>& g = grids[expert];
    const uint32_t dim = static_cast<uint32_t>(g.cfg.resolution(level)) + 1;
    const uint32_t h =
        spatial_hash(cx, cy, cz, dim, g.cfg.level_entries(level));
    return g.store_off + g.level_off[level] +
           size_t{h} * static_cast<size_t>(g.cfg.feats);
  }
};

// Per-training-image appearance embeddings.
template <typename T>
struct AppearanceTable {
  size_t store_off = 0;
  int n_images = 0;
  int dim = 0;

  static AppearanceTable create(ParamStore<T>& store, const std::string& name,
                                int n_images, int dim) {
    AppearanceTable t;
    t.n_images = n_images;
    t.dim = dim;
    t.store_off = store.alloc(name, size_t(n_images) * dim,
                              ParamKind::kEmbedding);
    return t;
  }

  void init(T* params, Rng& rng) const {
    for (size_t i = 0; i < size_t(n_images) * dim; ++i) {
      params[store_off + i] = static_cast<T>(rng.uniform(-0.05, 0.05));
    }
  }

  const T* row(const T* params, uint32_t image_id) const {
    check_data(int(image_id) < n_images, "appearance: image id out of range");
    return params + store_off + size_t(image_id) * dim;
  }
};

// Single shared prediction head: a density MLP mapping the gated expert
// feature to (sigma_raw, geometry feature) and a color MLP over
// (geometry feature, SH(d), AE).
template <typename T>
struct UnifiedHead {
  DenseMlp<T> density;
  DenseMlp<T> color;
  int feat_dim = 0, geo_dim = 0, sh_d = 0, ae_dim = 0;

  int color_in() const { return geo_dim + sh_d + ae_dim; }

  static UnifiedHead create(ParamStore<T>& store, const std::string& name,
                            int feat_dim, int hidden, int geo_dim,
                            int sh_degree, int ae_dim) {
    check_config(sh_degree >= 1 && sh_degree <= 4,
                 "head: sh_degree must be in [1,4]");
    UnifiedHead h;
    h.feat_dim = feat_dim;
    h.geo_dim = geo_dim;
    h.sh_d = sh_dim(sh_degree);
    h.ae_dim = ae_dim;
    h.density = DenseMlp<T>::create(store, name + ".density",
                                    {feat_dim, hidden, 1 + geo_dim},
                                    {Act::kRelu, Act::kNone});
    h.color = DenseMlp<T>::create(
        store, name + ".color",
        {h.color_in(), hidden, hidden, 3},
        {Act::kRelu, Act::kRelu, Act::kNone});
    return h;
  }

  void init(T* params, Rng& rng) const {
    density.init(params, rng);
    color.init(params, rng);
  }
};

// Per-point head caches; sized by the owner.
template <typename T>
struct HeadCache {
  size_t density_stride = 0, color_stride = 0;
  std::vector<T> density;  // B * density_stride
  std::vector<T> color;    // B * color_stride

  void resize(const UnifiedHead<T>& head, size_t b) {
    density_stride = head.density.cache_size();
    color_stride = head.color.cache_size();
    density.resize(b * density_stride);
    color.resize(b * color_stride);
  }
};

// sigma = softplus(sigma_raw); rgb = sigmoid(color_raw). The color MLP
// sees the density head's hidden geometry feature, not Ehat directly.
template <typename T>
void head_forward(const UnifiedHead<T>& head, const T* params, const T* ehat,
                  const T* sh, const T* ae, T* sigma, T* rgb, T* dcache,
                  T* ccache, T* scratch) {
  T* dout = scratch;  // 1 + geo_dim
  head.density.forward(params, ehat, dout, dcache);
  *sigma = softplus(dout[0]);

  T* cin = scratch + 1 + head.geo_dim;
  std::copy(dout + 1, dout + 1 + head.geo_dim, cin);
  std::copy(sh, sh + head.sh_d, cin + head.geo_dim);
  std::copy(ae, ae + head.ae_dim, cin + head.geo_dim + head.sh_d);
  T craw[3];
  head.color.forward(params, cin, craw, ccache);
  for (int c = 0; c < 3; ++c) rgb[c] = sigmoid(craw[c]);
}

// scratch needs head_scratch_size(head) elements.
template <typename T>
size_t head_scratch_size(const UnifiedHead<T>& head) {
  return size_t(1 + head.geo_dim) + head.color_in() +
         2 * std::max(head.density.max_width(), head.color.max_width()) +
         (1 + head.geo_dim);
}

// dehat: cotangent of the gated feature (written, not accumulated).
// dae accumulates into grads at the appearance row.
template <typename T>
void head_backward(const UnifiedHead<T>& head, const T* params,
                   const T* dcache, const T* ccache, const T* rgb, T dsigma,
                   const T* drgb, T* grads, T* dehat, T* dae_row, T* scratch) {
  // Recover sigma_raw and the geometry feature from the density cache
  // tail (last layer has no activation, so the cached output is raw).
  const T* dout = dcache + head.density.cache_size() - (1 + head.geo_dim);

  T dcraw[3];
  for (int c = 0; c < 3; ++c) {
    dcraw[c] = drgb[c] * sigmoid_grad_from_value(rgb[c]);
  }
  T* dcin = scratch;  // color_in()
  T* mlp_scratch = scratch + head.color_in();
  head.color.backward(params, ccache, dcraw, grads, dcin, mlp_scratch);

  T* ddout = mlp_scratch + 2 * std::max(head.density.max_width(),
                                        head.color.max_width());
  ddout[0] = dsigma * softplus_grad(dout[0]);
  for (int g = 0; g < head.geo_dim; ++g) ddout[1 + g] = dcin[g];
  if (dae_row != nullptr) {
    const T* dae = dcin + head.geo_dim + head.sh_d;
    for (int a = 0; a < head.ae_dim; ++a) dae_row[a] += dae[a];
  }
  head.density.backward(params, dcache, ddout, grads, dehat, mlp_scratch);
}

}  // namespace hashmoe
