// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Full radiance-field model: gate network, expert pyramid, unified head,
// appearance embeddings and background grid, with batched forward and
// backward over routed sample points.
#pragma once

#include <string>
#include <vector>

#include "hashmoe/experts.hpp"
#include "hashmoe/gating.hpp"

namespace hashmoe {

struct ModelConfig {
  // Mixture of experts
  int n_experts = 8;
  int top_k = 1;
  float capacity_factor = 1.0f;
  GateMode gate_mode = GateMode::kHashGate;
  float balance_weight = 5e-4f;
  bool batch_prioritized = false;
  DispatchStrategy train_dispatch = DispatchStrategy::kFusedHash;
  bool heterogeneous = true;

  // Expert grid geometry
  int levels = 16, feats = 2, log2_table = 19;
  int base_min = 16, base_max = 512;
  int desired_min = 2048, desired_max = 16384;

  // Gate network
  int gate_levels = 0;      // 0: same as experts
  int gate_log2_table = 0;  // 0: same as experts
  int gate_desired = 2048;
  int gate_hidden = 64;
  int gate_pe_freqs = 10;   // MlpGate
  int gate_mlp_width = 256; // MlpGate

  // Heads
  int head_hidden = 64, geo_dim = 15, sh_degree = 4;
  int ae_dim = 16, n_images = 1;

  // Background: a single grid outside the unit sphere
  bool use_background = true;
  int bg_levels = 0, bg_log2_table = 0, bg_desired = 2048;

  uint64_t seed = 0;

  GateConfig gate_config() const {
    GateConfig g;
    g.n_experts = n_experts;
    g.top_k = top_k;
    g.capacity_factor = capacity_factor;
    g.mode = gate_mode;
    g.balance_weight = balance_weight;
    g.batch_prioritized = batch_prioritized;
    return g;
  }

  PyramidConfig pyramid_config() const {
    PyramidConfig p;
    p.n_experts = n_experts;
    p.levels = levels;
    p.feats = feats;
    p.log2_table = log2_table;
    p.heterogeneous = heterogeneous;
    p.base_min = base_min;
    p.base_max = base_max;
    p.desired_min = desired_min;
    p.desired_max = desired_max;
    return p;
  }

  GridConfig gate_grid_config() const {
    GridConfig g;
    g.levels = gate_levels > 0 ? gate_levels : levels;
    g.feats = feats;
    g.log2_table = gate_log2_table > 0 ? gate_log2_table : log2_table;
    g.base_resolution = base_min;
    g.max_resolution = gate_desired;
    return g;
  }

  GridConfig bg_grid_config() const {
    GridConfig g;
    g.levels = bg_levels > 0 ? bg_levels : levels;
    g.feats = feats;
    g.log2_table = bg_log2_table > 0 ? bg_log2_table : log2_table;
    g.base_resolution = base_min;
    g.max_resolution = bg_desired;
    return g;
  }
};

template <typename T>
struct Model {
  ModelConfig cfg;
  ParamStore<T> store;
  GateNetwork<T> gate;
  ExpertPyramid<T> pyramid;
  UnifiedHead<T> head;
  AppearanceTable<T> ae;
  HashGrid<T> bg;

  const T* params() const { return store.data(); }
  T* params() { return store.data(); }

  static Model build(const ModelConfig& cfg) {
    Model m;
    m.cfg = cfg;
    if (cfg.gate_mode == GateMode::kHashGate) {
      m.gate = GateNetwork<T>::create_hash(m.store, "gate",
                                           cfg.gate_grid_config(),
                                           cfg.gate_hidden, cfg.n_experts);
    } else {
      m.gate = GateNetwork<T>::create_mlp(m.store, "gate", cfg.gate_pe_freqs,
                                          cfg.gate_mlp_width, cfg.n_experts);
    }
    m.pyramid = ExpertPyramid<T>::create(m.store, "experts",
                                         cfg.pyramid_config());
    m.head = UnifiedHead<T>::create(m.store, "head", cfg.levels * cfg.feats,
                                    cfg.head_hidden, cfg.geo_dim,
                                    cfg.sh_degree, cfg.ae_dim);
    m.ae = AppearanceTable<T>::create(m.store, "appearance", cfg.n_images,
                                      cfg.ae_dim);
    if (cfg.use_background) {
      m.bg = HashGrid<T>::create(m.store, "background", cfg.bg_grid_config());
    }
    return m;
  }

  void init() {
    Rng rng(cfg.seed);
    gate.init(store.data(), rng);
    pyramid.init(store.data(), rng);
    head.init(store.data(), rng);
    ae.init(store.data(), rng);
    if (cfg.use_background) bg.init(store.data(), rng);
  }
};

// ---------------------------------------------------------------------------
// Batched MoE evaluation over foreground points

template <typename T>
struct MoeBatch {
  size_t count = 0;
  int k = 1, n = 0, feat_dim = 0;
  std::vector<Vec3<T>> xs;        // gate/expert domain, [0,1]^3
  std::vector<T> sh;              // count * sh_dim
  std::vector<uint32_t> image_ids;

  GateDecision<T> dec;
  GateCache<T> gate_cache;
  DispatchPlan plan;
  std::vector<T> feats;           // count*k*feat_dim: E_i(x) per slot
  std::vector<uint32_t> rows;     // count*k*rows_pp
  std::vector<T> fracs;           // count*k*fracs_pp
  std::vector<T> ehat;            // count*feat_dim: gated sum
  HeadCache<T> head_cache;
  std::vector<T> sigma;           // count
  std::vector<T> rgb;             // count*3
  std::vector<T> dprob;           // backward: count*n
};

// Stage 1: gate + dispatch plan. Kept separate from the compute stage so
// callers can inspect or edit the decision (tests, probes).
template <typename T>
void moe_route(const Model<T>& m, MoeBatch<T>& b, DispatchStrategy strategy,
               const char* step_context = "") {
  const GateConfig gc = m.cfg.gate_config();
  b.n = gc.n_experts;
  b.k = gc.top_k;
  b.count = b.xs.size();
  b.feat_dim = m.pyramid.feat_dim();
  gate_forward(gc, m.gate, m.params(), b.xs.data(), b.count, b.dec,
               b.gate_cache, step_context);
  switch (strategy) {
    case DispatchStrategy::kFusedHash:
      b.plan = DispatchPlan{};
      b.plan.strategy = DispatchStrategy::kFusedHash;
      break;
    case DispatchStrategy::kFull:
      b.plan = plan_full(b.dec);
      break;
    case DispatchStrategy::kUniform:
      b.plan = plan_uniform(b.dec, gc);
      break;
  }
}

// Stage 2: expert features, gate scaling, heads.
template <typename T>
void moe_compute(const Model<T>& m, MoeBatch<T>& b) {
  const size_t na = b.count * b.k;
  const int fd = b.feat_dim;
  const int rows_pp = m.pyramid.cache_rows();
  const int fracs_pp = m.pyramid.cache_fracs();
  b.feats.assign(na * fd, T{0});
  b.rows.resize(na * rows_pp);
  b.fracs.resize(na * fracs_pp);
  b.ehat.assign(b.count * fd, T{0});
  b.head_cache.resize(m.head, b.count);
  b.sigma.resize(b.count);
  b.rgb.resize(b.count * 3);

  auto encode_assignment = [&](size_t a) {
    const size_t p = a / b.k;
    const int e = b.dec.chosen[a];
    m.pyramid.grids[e].encode(m.params(), b.xs[p], b.feats.data() + a * fd,
                              b.rows.data() + a * rows_pp,
                              b.fracs.data() + a * fracs_pp);
  };

  if (b.plan.strategy == DispatchStrategy::kFusedHash) {
    // No reordering: the expert id only changes the hash-table offset.
    for (size_t a = 0; a < na; ++a) encode_assignment(a);
  } else {
    // Explicit dispatch: gather points per expert, run each expert over
    // its contiguous batch, scatter features back to assignment slots.
    std::vector<Vec3<T>> gathered;
    std::vector<T> efeat;
    std::vector<uint32_t> erows;
    std::vector<T> efracs;
    for (int e = 0; e < b.n; ++e) {
      gathered.clear();
      std::vector<uint32_t> slot_ids;
      for (uint32_t i = b.plan.offsets[e]; i < b.plan.offsets[e + 1]; ++i) {
        const uint32_t a = b.plan.order[i];
        if (b.plan.strategy == DispatchStrategy::kUniform &&
            b.plan.dropped[a]) {
          continue;  // dropped: zero feature downstream
        }
        gathered.push_back(b.xs[a / b.k]);
        slot_ids.push_back(a);
      }
      efeat.resize(gathered.size() * fd);
      erows.resize(gathered.size() * rows_pp);
      efracs.resize(gathered.size() * fracs_pp);
      for (size_t g = 0; g < gathered.size(); ++g) {
        m.pyramid.grids[e].encode(m.params(), gathered[g],
                                  efeat.data() + g * fd,
                                  erows.data() + g * rows_pp,
                                  efracs.data() + g * fracs_pp);
      }
      for (size_t g = 0; g < gathered.size(); ++g) {
        const uint32_t a = slot_ids[g];
        std::copy(efeat.begin() + g * fd, efeat.begin() + (g + 1) * fd,
                  b.feats.begin() + size_t(a) * fd);
        std::copy(erows.begin() + g * rows_pp,
                  erows.begin() + (g + 1) * rows_pp,
                  b.rows.begin() + size_t(a) * rows_pp);
        std::copy(efracs.begin() + g * fracs_pp,
                  efracs.begin() + (g + 1) * fracs_pp,
                  b.fracs.begin() + size_t(a) * fracs_pp);
      }
    }
  }

  // Gate-value scaling: Ehat = sum over chosen slots of G_i * E_i.
  // Slots with an exactly zero gate value are skipped, which makes top-2
  // with a zeroed second slot bitwise identical to top-1.
  const int sh_d = m.head.sh_d;
  std::vector<T> scratch(head_scratch_size(m.head));
  for (size_t p = 0; p < b.count; ++p) {
    T* eh = b.ehat.data() + p * fd;
    for (int j = 0; j < b.k; ++j) {
      const size_t a = p * b.k + j;
      if (b.plan.strategy == DispatchStrategy::kUniform && b.plan.dropped[a]) {
        continue;
      }
      const T g = b.dec.gate_values[a];
      if (g == T{0}) continue;
      const T* f = b.feats.data() + a * fd;
      for (int i = 0; i < fd; ++i) eh[i] += g * f[i];
    }
    head_forward(m.head, m.params(), eh, b.sh.data() + p * sh_d,
                 m.ae.row(m.params(), b.image_ids[p]), &b.sigma[p],
                 b.rgb.data() + p * 3, b.head_cache.density.data() +
                     p * b.head_cache.density_stride,
                 b.head_cache.color.data() + p * b.head_cache.color_stride,
                 scratch.data());
  }
}

template <typename T>
void moe_forward(const Model<T>& m, MoeBatch<T>& b, DispatchStrategy strategy,
                 const char* step_context = "") {
  moe_route(m, b, strategy, step_context);
  moe_compute(m, b);
}

// Backward from per-point (dsigma, drgb) into every parameter group.
// The gate receives gradient through the multiplicative gate value and,
// scaled by balance_scale (lambda times the loss scale), the balance
// loss; there is no straight-through path through the selection.
template <typename T>
void moe_backward(const Model<T>& m, MoeBatch<T>& b, const T* dsigma,
                  const T* drgb, T balance_scale, T* grads) {
  const int fd = b.feat_dim;
  const int rows_pp = m.pyramid.cache_rows();
  const int fracs_pp = m.pyramid.cache_fracs();
  b.dprob.assign(b.count * b.n, T{0});
  std::vector<T> dehat(fd);
  std::vector<T> scratch(head_scratch_size(m.head));
  for (size_t p = 0; p < b.count; ++p) {
    head_backward(m.head, m.params(),
                  b.head_cache.density.data() + p * b.head_cache.density_stride,
                  b.head_cache.color.data() + p * b.head_cache.color_stride,
                  b.rgb.data() + p * 3, dsigma[p], drgb + p * 3, grads,
                  dehat.data(),
                  grads + m.ae.store_off + size_t(b.image_ids[p]) * m.ae.dim,
                  scratch.data());
    for (int j = 0; j < b.k; ++j) {
      const size_t a = p * b.k + j;
      if (b.plan.strategy == DispatchStrategy::kUniform && b.plan.dropped[a]) {
        continue;
      }
      const T g = b.dec.gate_values[a];
      if (g == T{0}) continue;
      const int e = b.dec.chosen[a];
      const T* f = b.feats.data() + a * fd;
      // dG = <dEhat, E_i(x)>
      T dg = 0;
      for (int i = 0; i < fd; ++i) dg += dehat[i] * f[i];
      b.dprob[p * b.n + e] += dg;
      // dE = G * dEhat, scattered into the expert tables.
      std::vector<T> dfeat(fd);
      for (int i = 0; i < fd; ++i) dfeat[i] = g * dehat[i];
      m.pyramid.grids[e].backward(m.params(), b.rows.data() + a * rows_pp,
                                  b.fracs.data() + a * fracs_pp, dfeat.data(),
                                  grads);
    }
  }
  if (balance_scale != T{0}) {
    balance_loss_backward(b.dec, balance_scale, b.dprob.data());
  }
  gate_backward(m.gate, m.params(), b.gate_cache, b.dec, b.dprob.data(),
                grads);
}

// ---------------------------------------------------------------------------
// Background points: one hash grid, same unified head, no gating.

template <typename T>
struct BgBatch {
  size_t count = 0;
  int feat_dim = 0;
  std::vector<Vec3<T>> xs;  // bg grid domain, [0,1]^3
  std::vector<T> sh;
  std::vector<uint32_t> image_ids;

  std::vector<T> feats;
  std::vector<uint32_t> rows;
  std::vector<T> fracs;
  HeadCache<T> head_cache;
  std::vector<T> sigma;
  std::vector<T> rgb;
};

template <typename T>
void bg_forward(const Model<T>& m, BgBatch<T>& b) {
  check_contract(m.cfg.use_background, "background grid not configured");
  b.count = b.xs.size();
  b.feat_dim = m.bg.cfg.feat_dim();
  const int rows_pp = m.bg.cache_rows();
  const int fracs_pp = m.bg.cache_fracs();
  b.feats.resize(b.count * b.feat_dim);
  b.rows.resize(b.count * rows_pp);
  b.fracs.resize(b.count * fracs_pp);
  b.head_cache.resize(m.head, b.count);
  b.sigma.resize(b.count);
  b.rgb.resize(b.count * 3);
  std::vector<T> scratch(head_scratch_size(m.head));
  for (size_t p = 0; p < b.count; ++p) {
    T* f = b.feats.data() + p * b.feat_dim;
    m.bg.encode(m.params(), b.xs[p], f, b.rows.data() + p * rows_pp,
                b.fracs.data() + p * fracs_pp);
    head_forward(m.head, m.params(), f, b.sh.data() + p * m.head.sh_d,
                 m.ae.row(m.params(), b.image_ids[p]), &b.sigma[p],
                 b.rgb.data() + p * 3,
                 b.head_cache.density.data() + p * b.head_cache.density_stride,
                 b.head_cache.color.data() + p * b.head_cache.color_stride,
                 scratch.data());
  }
}

template <typename T>
void bg_backward(const Model<T>& m, BgBatch<T>& b, const T* dsigma,
                 const T* drgb, T* grads) {
  const int rows_pp = m.bg.cache_rows();
  const int fracs_pp = m.bg.cache_fracs();
  std::vector<T> dfeat(b.feat_dim);
  std::vector<T> scratch(head_scratch_size(m.head));
  for (size_t p = 0; p < b.count; ++p) {
    head_backward(m.head, m.params(),
                  b.head_cache.density.data() + p * b.head_cache.density_stride,
                  b.head_cache.color.data() + p * b.head_cache.color_stride,
                  b.rgb.data() + p * 3, dsigma[p], drgb + p * 3, grads,
                  dfeat.data(),
                  grads + m.ae.store_off + size_t(b.image_ids[p]) * m.ae.dim,
                  scratch.data());
    m.bg.backward(m.params(), b.rows.data() + p * rows_pp,
                  b.fracs.data() + p * fracs_pp, dfeat.data(), grads);
  }
}

}  // namespace hashmoe
