// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-resolution hash encoding: per-level trainable feature tables,
// spatial hashing with dense indexing at levels that fit, trilinear
// interpolation, and gradients into the tables.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hashmoe/common.hpp"
#include "hashmoe/param_store.hpp"

namespace hashmoe {

struct GridConfig {
  int levels = 16;          // L
  int feats = 2;            // F, features per level
  int log2_table = 19;      // T = 2^log2_table
  int base_resolution = 16;     // N_min
  int max_resolution = 2048;    // N_max

  size_t table_entries_cap() const { return size_t{1} << log2_table; }
  int feat_dim() const { return levels * feats; }

  // b = exp((ln N_max - ln N_min) / (L - 1)); unused when L == 1.
  double growth() const {
    if (levels <= 1) return 1.0;
    return std::exp((std::log(double(max_resolution)) -
                     std::log(double(base_resolution))) /
                    (levels - 1));
  }

  // N_l = floor(N_min * b^l). Level L-1 lands on N_max up to floor rounding.
  int resolution(int level) const {
    if (levels <= 1) return base_resolution;
    return static_cast<int>(
        std::floor(base_resolution * std::pow(growth(), level)));
  }

  // min(T, (N_l + 1)^3): dense lattice when it fits, hashed otherwise.
  size_t level_entries(int level) const {
    const size_t dim = static_cast<size_t>(resolution(level)) + 1;
    return std::min(table_entries_cap(), dim * dim * dim);
  }

  size_t param_count() const {
    size_t n = 0;
    for (int l = 0; l < levels; ++l) n += level_entries(l) * feats;
    return n;
  }

  void validate() const {
    check_config(levels >= 1, "grid: levels must be >= 1");
    check_config(feats >= 1, "grid: feats must be >= 1");
    check_config(log2_table >= 1 && log2_table <= 24,
                 "grid: log2_table out of range [1,24]");
    check_config(base_resolution >= 1, "grid: base_resolution must be >= 1");
    check_config(max_resolution >= base_resolution,
                 "grid: max_resolution must be >= base_resolution");
  }
};

// Spatial hash of a lattice corner. Dense row-major (x fastest) when the
// full lattice fits in `entries`; otherwise XOR of per-axis prime
// products masked by entries-1 (entries is a power of two then).
inline uint32_t spatial_hash(uint32_t x, uint32_t y, uint32_t z, uint32_t dim,
                             size_t entries) {
  const uint64_t dense = uint64_t{dim} * dim * dim;
  if (dense <= entries) {
    return x + dim * y + dim * dim * z;
  }
  return (x ^ (y * 2654435761u) ^ (z * 805459861u)) &
         static_cast<uint32_t>(entries - 1);
}

// Trainable grid whose tables live in a ParamStore. Per point, the
// encode cache stores 8 row element-offsets (relative to this grid's
// range) and 3 fractional coordinates per level.
template <typename T>
struct HashGrid {
  GridConfig cfg;
  size_t store_off = 0;
  std::vector<size_t> level_off;  // element offset of each level's table

  static constexpr int cache_rows_per_point(const GridConfig& c) {
    return c.levels * 8;
  }
  static constexpr int cache_fracs_per_point(const GridConfig& c) {
    return c.levels * 3;
  }
  int cache_rows() const { return cache_rows_per_point(cfg); }
  int cache_fracs() const { return cache_fracs_per_point(cfg); }

  static HashGrid create(ParamStore<T>& store, const std::string& name,
                         const GridConfig& cfg) {
    cfg.validate();
    HashGrid g;
    g.cfg = cfg;
    g.level_off.resize(cfg.levels);
    size_t off = 0;
    for (int l = 0; l < cfg.levels; ++l) {
      g.level_off[l] = off;
      off += cfg.level_entries(l) * cfg.feats;
    }
    g.store_off = store.alloc(name, off, ParamKind::kHashTable);
    return g;
  }

  // Uniform in +/-1e-4, seeded.
  void init(T* params, Rng& rng) const {
    for (size_t i = 0; i < cfg.param_count(); ++i) {
      params[store_off + i] = static_cast<T>(rng.uniform(-1e-4, 1e-4));
    }
  }

  // x in [0,1]^3 (tolerance 1e-6, clamped). feat: levels*feats, coarse
  // level first.
  void encode(const T* params, Vec3<T> x, T* feat, uint32_t* cache_rows,
              T* cache_fracs) const {
    check_data(x.x >= T{-1e-6} && x.x <= T{1} + T{1e-6} && x.y >= T{-1e-6} &&
                   x.y <= T{1} + T{1e-6} && x.z >= T{-1e-6} &&
                   x.z <= T{1} + T{1e-6},
               "grid_encode: point outside the unit cube");
    const T px = std::clamp(x.x, T{0}, T{1});
    const T py = std::clamp(x.y, T{0}, T{1});
    const T pz = std::clamp(x.z, T{0}, T{1});

    const T* base = params + store_off;
    const int F = cfg.feats;
    for (int l = 0; l < cfg.levels; ++l) {
      const int res = cfg.resolution(l);
      const uint32_t dim = static_cast<uint32_t>(res) + 1;
      const size_t entries = cfg.level_entries(l);

      T sx = px * res, sy = py * res, sz = pz * res;
      uint32_t cx = std::min(static_cast<uint32_t>(sx),
                             static_cast<uint32_t>(res > 0 ? res - 1 : 0));
      uint32_t cy = std::min(static_cast<uint32_t>(sy),
                             static_cast<uint32_t>(res > 0 ? res - 1 : 0));
      uint32_t cz = std::min(static_cast<uint32_t>(sz),
                             static_cast<uint32_t>(res > 0 ? res - 1 : 0));
      const T fx = sx - cx, fy = sy - cy, fz = sz - cz;

      uint32_t* rows = cache_rows + l * 8;
      for (int c = 0; c < 8; ++c) {
        const uint32_t ox = c & 1, oy = (c >> 1) & 1, oz = (c >> 2) & 1;
        const uint32_t row =
            spatial_hash(cx + ox, cy + oy, cz + oz, dim, entries);
        rows[c] = static_cast<uint32_t>(level_off[l] + size_t{row} * F);
      }
      cache_fracs[l * 3 + 0] = fx;
      cache_fracs[l * 3 + 1] = fy;
      cache_fracs[l * 3 + 2] = fz;

      T* out = feat + l * F;
      for (int f = 0; f < F; ++f) out[f] = T{0};
      for (int c = 0; c < 8; ++c) {
        const T wx = (c & 1) ? fx : T{1} - fx;
        const T wy = (c & 2) ? fy : T{1} - fy;
        const T wz = (c & 4) ? fz : T{1} - fz;
        const T w = wx * wy * wz;
        const T* row = base + rows[c];
        for (int f = 0; f < F; ++f) out[f] += w * row[f];
      }
    }
  }

  // Scatters dfeat into table gradients; optionally computes dL/dx
  // (analytic derivative of the trilinear weights; positions are not
  // trainable by default so dx may be null).
  void backward(const T* params, const uint32_t* cache_rows,
                const T* cache_fracs, const T* dfeat, T* grads,
                Vec3<T>* dx = nullptr) const {
    const int F = cfg.feats;
    T gx = 0, gy = 0, gz = 0;
    for (int l = 0; l < cfg.levels; ++l) {
      const uint32_t* rows = cache_rows + l * 8;
      const T fx = cache_fracs[l * 3 + 0];
      const T fy = cache_fracs[l * 3 + 1];
      const T fz = cache_fracs[l * 3 + 2];
      const T* df = dfeat + l * F;
      for (int c = 0; c < 8; ++c) {
        const T wx = (c & 1) ? fx : T{1} - fx;
        const T wy = (c & 2) ? fy : T{1} - fy;
        const T wz = (c & 4) ? fz : T{1} - fz;
        const T w = wx * wy * wz;
        T* grow = grads + store_off + rows[c];
        for (int f = 0; f < F; ++f) grow[f] += w * df[f];
        if (dx != nullptr) {
          const T* prow = params + store_off + rows[c];
          T inner = 0;
          for (int f = 0; f < F; ++f) inner += prow[f] * df[f];
          const T sxp = (c & 1) ? T{1} : T{-1};
          const T syp = (c & 2) ? T{1} : T{-1};
          const T szp = (c & 4) ? T{1} : T{-1};
          const T res = static_cast<T>(cfg.resolution(l));
          gx += inner * sxp * wy * wz * res;
          gy += inner * wx * syp * wz * res;
          gz += inner * wx * wy * szp * res;
        }
      }
    }
    if (dx != nullptr) *dx = {gx, gy, gz};
  }
};

}  // namespace hashmoe
