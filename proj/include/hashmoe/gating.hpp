// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// The decomposition engine: gating networks (hash-based and legacy
// MLP-based), top-k selection, balance loss, and dispatch planning
// (uniform with capacity, full, fused-hash).
#pragma once

#include <cstdio>
#include <numeric>
#include <vector>

#include "hashmoe/field_math.hpp"
#include "hashmoe/hash_grid.hpp"

namespace hashmoe {

enum class GateMode { kHashGate, kMlpGate };
enum class DispatchStrategy { kUniform, kFull, kFusedHash };

struct GateConfig {
  int n_experts = 8;
  int top_k = 1;
  float capacity_factor = 1.0f;
  GateMode mode = GateMode::kHashGate;
  float balance_weight = 5e-4f;  // lambda in the overall loss
  bool batch_prioritized = false;

  void validate() const {
    check_config(n_experts >= 1, "gate: n_experts must be >= 1");
    check_config(top_k == 1 || top_k == 2, "gate: top_k must be 1 or 2");
    check_config(top_k <= n_experts, "gate: top_k must be <= n_experts");
    check_config(capacity_factor > 0, "gate: capacity_factor must be > 0");
    check_config(balance_weight >= 0, "gate: balance_weight must be >= 0");
  }
};

// Per-batch routing decision. Assignment a = point*k + slot.
template <typename T>
struct GateDecision {
  int n = 0, k = 1;
  size_t count = 0;                // points in the batch
  std::vector<T> probs;            // count * n
  std::vector<int> chosen;         // count * k, slot-major per point
  std::vector<T> gate_values;      // count * k
  std::vector<uint32_t> routed;    // per expert, over all k slots
  std::vector<T> hard_fraction;    // f_i: fraction of points with top-1 == i
  std::vector<T> mean_prob;        // p-bar_i over the batch

  void resize(size_t b, int n_experts, int top_k) {
    n = n_experts;
    k = top_k;
    count = b;
    probs.assign(b * n_experts, T{0});
    chosen.assign(b * top_k, 0);
    gate_values.assign(b * top_k, T{0});
    routed.assign(n_experts, 0);
    hard_fraction.assign(n_experts, T{0});
    mean_prob.assign(n_experts, T{0});
  }
};

// Gating network: a hash-grid (or positional) encoding feeding a small
// MLP whose output width is the expert count.
template <typename T>
struct GateNetwork {
  GateMode mode = GateMode::kHashGate;
  HashGrid<T> grid;  // HashGate only
  int pe_freqs = 4;  // MlpGate only
  DenseMlp<T> mlp;

  int enc_dim() const {
    return mode == GateMode::kHashGate ? grid.cfg.feat_dim() : pe_dim(pe_freqs);
  }

  static GateNetwork create_hash(ParamStore<T>& store, const std::string& name,
                                 const GridConfig& grid_cfg, int hidden,
                                 int n_experts) {
    GateNetwork g;
    g.mode = GateMode::kHashGate;
    g.grid = HashGrid<T>::create(store, name + ".grid", grid_cfg);
    g.mlp = DenseMlp<T>::create(store, name + ".mlp",
                                {grid_cfg.feat_dim(), hidden, hidden, n_experts},
                                {Act::kRelu, Act::kRelu, Act::kNone});
    return g;
  }

  // Legacy gate: positional encoding into 4 linear layers of `width`.
  static GateNetwork create_mlp(ParamStore<T>& store, const std::string& name,
                                int pe_freqs, int width, int n_experts) {
    GateNetwork g;
    g.mode = GateMode::kMlpGate;
    g.pe_freqs = pe_freqs;
    g.mlp = DenseMlp<T>::create(
        store, name + ".mlp",
        {pe_dim(pe_freqs), width, width, width, n_experts},
        {Act::kRelu, Act::kRelu, Act::kRelu, Act::kNone});
    return g;
  }

  void init(T* params, Rng& rng) const {
    if (mode == GateMode::kHashGate) grid.init(params, rng);
    mlp.init(params, rng);
  }
};

template <typename T>
struct GateCache {
  std::vector<uint32_t> grid_rows;
  std::vector<T> grid_fracs;
  std::vector<T> mlp_cache;  // includes the encoding as the mlp input
  size_t mlp_stride = 0;
  int rows_pp = 0, fracs_pp = 0;

  void resize(const GateNetwork<T>& net, size_t b) {
    mlp_stride = net.mlp.cache_size();
    mlp_cache.resize(b * mlp_stride);
    if (net.mode == GateMode::kHashGate) {
      rows_pp = net.grid.cache_rows();
      fracs_pp = net.grid.cache_fracs();
      grid_rows.resize(b * rows_pp);
      grid_fracs.resize(b * fracs_pp);
    }
  }
};

// Top-k selection with deterministic lowest-index tie-break.
template <typename T>
inline void top_k_select(const T* probs, int n, int k, int* idx, T* vals) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  idx[0] = best;
  vals[0] = probs[best];
  if (k == 2) {
    int second = -1;
    for (int i = 0; i < n; ++i) {
      if (i == best) continue;
      if (second < 0 || probs[i] > probs[second]) second = i;
    }
    idx[1] = second;
    vals[1] = probs[second];
  }
}

// Points must already be normalized/contracted into the gate's domain.
template <typename T>
void gate_forward(const GateConfig& cfg, const GateNetwork<T>& net,
                  const T* params, const Vec3<T>* xs, size_t b,
                  GateDecision<T>& dec, GateCache<T>& cache,
                  const char* step_context = "") {
  cfg.validate();
  dec.resize(b, cfg.n_experts, cfg.top_k);
  cache.resize(net, b);
  const int n = cfg.n_experts;
  std::vector<T> enc(net.enc_dim());
  std::vector<T> logits(n);
  for (size_t p = 0; p < b; ++p) {
    T* mcache = cache.mlp_cache.data() + p * cache.mlp_stride;
    if (net.mode == GateMode::kHashGate) {
      net.grid.encode(params, xs[p], enc.data(),
                      cache.grid_rows.data() + p * cache.rows_pp,
                      cache.grid_fracs.data() + p * cache.fracs_pp);
    } else {
      positional_encode(xs[p], net.pe_freqs, enc.data());
    }
    net.mlp.forward(params, enc.data(), logits.data(), mcache);
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(double(logits[i]))) {
        throw DivergenceError(std::string("non-finite gate logits") +
                              (step_context[0] ? " at " : "") + step_context);
      }
    }
    T* probs = dec.probs.data() + p * n;
    softmax(logits.data(), probs, n);
    top_k_select(probs, n, cfg.top_k, dec.chosen.data() + p * cfg.top_k,
                 dec.gate_values.data() + p * cfg.top_k);
    for (int j = 0; j < cfg.top_k; ++j) {
      dec.routed[dec.chosen[p * cfg.top_k + j]]++;
    }
    dec.hard_fraction[dec.chosen[p * cfg.top_k]] += T{1};
    for (int i = 0; i < n; ++i) dec.mean_prob[i] += probs[i];
  }
  if (b > 0) {
    for (int i = 0; i < n; ++i) {
      dec.hard_fraction[i] /= T(b);
      dec.mean_prob[i] /= T(b);
    }
  }
}

// Backward through softmax, the gate MLP and (hash mode) the gate grid.
// dprob is the cotangent of dec.probs (count * n). dxs unused: positions
// carry no gradient by default.
template <typename T>
void gate_backward(const GateNetwork<T>& net, const T* params,
                   const GateCache<T>& cache, const GateDecision<T>& dec,
                   const T* dprob, T* grads) {
  const int n = dec.n;
  std::vector<T> dlogits(n);
  std::vector<T> denc(net.enc_dim());
  std::vector<T> scratch(2 * net.mlp.max_width());
  for (size_t p = 0; p < dec.count; ++p) {
    softmax_backward(dec.probs.data() + p * n, dprob + p * n, dlogits.data(),
                     n);
    const T* mcache = cache.mlp_cache.data() + p * cache.mlp_stride;
    net.mlp.backward(params, mcache, dlogits.data(), grads, denc.data(),
                     scratch.data());
    if (net.mode == GateMode::kHashGate) {
      net.grid.backward(params, cache.grid_rows.data() + p * cache.rows_pp,
                        cache.grid_fracs.data() + p * cache.fracs_pp,
                        denc.data(), grads);
    }
  }
}

// L_b = n * sum_i f_i * p-bar_i; 1.0 exactly at the balanced point.
// Gradient flows only through p-bar (f is piecewise constant).
template <typename T>
T balance_loss(const GateDecision<T>& dec) {
  check_contract(dec.count > 0, "balance_loss: empty batch");
  T s = 0;
  for (int i = 0; i < dec.n; ++i) s += dec.hard_fraction[i] * dec.mean_prob[i];
  return T(dec.n) * s;
}

// Adds scale * dL_b/dprob into dprob (all points, all experts).
template <typename T>
void balance_loss_backward(const GateDecision<T>& dec, T scale, T* dprob) {
  const T inv_b = T{1} / T(dec.count);
  for (size_t p = 0; p < dec.count; ++p) {
    for (int i = 0; i < dec.n; ++i) {
      dprob[p * dec.n + i] += scale * T(dec.n) * dec.hard_fraction[i] * inv_b;
    }
  }
}

// ---------------------------------------------------------------------------
// Dispatch plans

struct DispatchPlan {
  DispatchStrategy strategy = DispatchStrategy::kFull;
  int n_experts = 0;
  int k = 1;
  size_t batch = 0;              // points
  size_t capacity = 0;           // B_e, Uniform only
  std::vector<uint32_t> offsets;  // per expert, start into `order` (n+1)
  std::vector<uint32_t> order;    // assignment ids grouped by expert
  std::vector<uint32_t> inverse;  // position of assignment a in `order`
  std::vector<uint8_t> dropped;   // per assignment, Uniform only
  std::vector<uint32_t> kept;     // per expert
  std::vector<uint32_t> pads;     // per expert, Uniform only
  std::vector<uint32_t> drops;    // per expert, Uniform only
};

// Stable counting sort of assignments by expert; no drops, no pads.
template <typename T>
DispatchPlan plan_full(const GateDecision<T>& dec) {
  DispatchPlan plan;
  plan.strategy = DispatchStrategy::kFull;
  plan.n_experts = dec.n;
  plan.k = dec.k;
  plan.batch = dec.count;
  const size_t na = dec.count * dec.k;
  plan.offsets.assign(dec.n + 1, 0);
  for (size_t a = 0; a < na; ++a) plan.offsets[dec.chosen[a] + 1]++;
  for (int e = 0; e < dec.n; ++e) plan.offsets[e + 1] += plan.offsets[e];
  plan.order.resize(na);
  plan.inverse.resize(na);
  std::vector<uint32_t> cursor(plan.offsets.begin(), plan.offsets.end() - 1);
  for (size_t a = 0; a < na; ++a) {
    const uint32_t pos = cursor[dec.chosen[a]]++;
    plan.order[pos] = static_cast<uint32_t>(a);
    plan.inverse[a] = pos;
  }
  plan.kept.assign(dec.n, 0);
  for (int e = 0; e < dec.n; ++e) {
    plan.kept[e] = plan.offsets[e + 1] - plan.offsets[e];
  }
  return plan;
}

// Capacity-limited dispatch: B_e = ceil(k*B*C_f/n). Overflow assignments
// are dropped (their expert feature is zero downstream); underfull
// experts are padded to B_e with inert entries.
template <typename T>
DispatchPlan plan_uniform(const GateDecision<T>& dec, const GateConfig& cfg) {
  if (dec.count * dec.k < static_cast<size_t>(dec.n)) {
    std::fprintf(stderr,
                 "hashmoe: plan_uniform with k*B (%zu) < n (%d); capacity "
                 "will be tiny\n",
                 dec.count * dec.k, dec.n);
  }
  DispatchPlan plan = plan_full(dec);
  plan.strategy = DispatchStrategy::kUniform;
  const double be = std::ceil(double(dec.k) * double(dec.count) *
                              double(cfg.capacity_factor) / double(dec.n));
  plan.capacity = static_cast<size_t>(be);
  plan.dropped.assign(dec.count * dec.k, 0);
  plan.pads.assign(dec.n, 0);
  plan.drops.assign(dec.n, 0);
  for (int e = 0; e < dec.n; ++e) {
    const uint32_t begin = plan.offsets[e], end = plan.offsets[e + 1];
    const uint32_t routed = end - begin;
    if (cfg.batch_prioritized && routed > plan.capacity) {
      // Keep the top-B_e assignments by gate value; ties keep the
      // earlier assignment. Sort this expert's span only.
      std::sort(plan.order.begin() + begin, plan.order.begin() + end,
                [&](uint32_t a, uint32_t b) {
                  const T ga = dec.gate_values[a], gb = dec.gate_values[b];
                  if (ga != gb) return ga > gb;
                  return a < b;
                });
      for (uint32_t i = begin; i < end; ++i) {
        plan.inverse[plan.order[i]] = i;
      }
    }
    const uint32_t keep =
        std::min<uint32_t>(routed, static_cast<uint32_t>(plan.capacity));
    for (uint32_t i = begin + keep; i < end; ++i) {
      plan.dropped[plan.order[i]] = 1;
    }
    plan.kept[e] = keep;
    plan.drops[e] = routed - keep;
    plan.pads[e] = static_cast<uint32_t>(plan.capacity) - keep;
  }
  return plan;
}

}  // namespace hashmoe
