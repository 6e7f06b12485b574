// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop machinery: Adam with exponential learning-rate decay,
// sharded gradient assembly, checkpointing, the pixel sampler, and the
// expert-assignment changing-rate probe.
#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <thread>

#include "hashmoe/render.hpp"
#include "hashmoe/simd/kernels.hpp"
#include "json.hpp"

namespace hashmoe {

struct TrainConfig {
  float lr0 = 5e-4f;
  float lr_final = 5e-5f;
  int steps = 15000;
  int rays_per_batch = 512;
  float lambda = 5e-4f;
  float beta1 = 0.9f, beta2 = 0.999f;
  // Per-group epsilon: tiny for hash tables (sparse, small gradients),
  // conventional for dense layers and embeddings.
  float eps_table = 1e-15f;
  float eps_mlp = 1e-8f;
  int threads = 1;
  uint64_t seed = 0;

  void validate() const {
    check_config(lr0 > 0 && lr_final > 0, "train: lr must be > 0");
    check_config(steps >= 1, "train: steps must be >= 1");
    check_config(rays_per_batch >= 1, "train: rays_per_batch must be >= 1");
    check_config(lambda >= 0, "train: lambda must be >= 0");
    check_config(threads >= 1, "train: threads must be >= 1");
  }

  // Per-step geometric decay from lr0 to lr_final over the run.
  float lr_at(int64_t step) const {
    const double frac = steps > 1 ? double(step) / double(steps) : 1.0;
    return float(lr0 * std::pow(double(lr_final) / lr0, frac));
  }
};

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t step = 0;

  void init(size_t n) {
    m.assign(n, T{0});
    v.assign(n, T{0});
    step = 0;
  }
};

namespace detail {

template <typename T>
void adam_range(T* p, const T* g, T* m, T* v, size_t n, T lr, T b1, T b2,
                T eps, T bc1, T bc2) {
  for (size_t i = 0; i < n; ++i) {
    const T gi = g[i];
    m[i] = b1 * m[i] + (T{1} - b1) * gi;
    v[i] = b2 * v[i] + (T{1} - b2) * (gi * gi);
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

inline void adam_range(float* p, const float* g, float* m, float* v, size_t n,
                       float lr, float b1, float b2, float eps, float bc1,
                       float bc2) {
  simd::active_kernels().adam_step(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
}

template <typename T>
void accumulate_buffer(T* dst, const T* src, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

inline void accumulate_buffer(float* dst, const float* src, size_t n) {
  simd::active_kernels().accumulate(dst, src, n);
}

}  // namespace detail

// One optimizer step over every parameter range, epsilon chosen by kind.
template <typename T>
void adam_apply(ParamStore<T>& store, const T* grads, AdamState<T>& opt,
                const TrainConfig& tc, T lr) {
  opt.step += 1;
  const T bc1 = T{1} - T(std::pow(double(tc.beta1), double(opt.step)));
  const T bc2 = T{1} - T(std::pow(double(tc.beta2), double(opt.step)));
  for (const auto& r : store.ranges()) {
    const T eps = r.kind == ParamKind::kHashTable ? T(tc.eps_table)
                                                  : T(tc.eps_mlp);
    detail::adam_range(store.data() + r.offset, grads + r.offset,
                       opt.m.data() + r.offset, opt.v.data() + r.offset,
                       r.size, lr, T(tc.beta1), T(tc.beta2), eps, bc1, bc2);
  }
}

// Index ranges [begin, end) dispatched over worker threads; fn must be
// safe for concurrent shards. threads == 1 runs inline.
inline void parallel_for(size_t n, int threads,
                         const std::function<void(size_t, size_t, int)>& fn) {
  if (threads <= 1 || n <= 1) {
    fn(0, n, 0);
    return;
  }
  const int used = int(std::min<size_t>(threads, n));
  std::vector<std::thread> pool;
  for (int s = 0; s < used; ++s) {
    const size_t begin = n * size_t(s) / used;
    const size_t end = n * size_t(s + 1) / used;
    pool.emplace_back(fn, begin, end, s);
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Pixel sampler: uniform over all training pixels, without replacement
// within an epoch. The permutation is reproducible from (seed, epoch,
// cursor), which is all the checkpoint stores.

class PixelSampler {
 public:
  PixelSampler() = default;
  PixelSampler(uint64_t total, uint64_t seed)
      : total_(total), rng_(seed), epoch_state_(rng_.serialize()) {
    check_config(total > 0, "sampler: no pixels to sample");
    reshuffle();
  }

  // Global pixel ids in [0, total); wraps into the next epoch as needed.
  void next(size_t n, uint64_t* out) {
    for (size_t i = 0; i < n; ++i) {
      if (cursor_ == perm_.size()) {
        ++epoch_;
        epoch_state_ = rng_.serialize();
        reshuffle();
      }
      out[i] = perm_[cursor_++];
    }
  }

  uint64_t total() const { return total_; }
  uint64_t epoch() const { return epoch_; }
  uint64_t cursor() const { return cursor_; }
  std::string epoch_rng_state() const { return epoch_state_; }

  // Rebuild mid-epoch state recorded in a checkpoint.
  static PixelSampler restore(uint64_t total, const std::string& epoch_state,
                              uint64_t epoch, uint64_t cursor) {
    PixelSampler s;
    s.total_ = total;
    s.epoch_ = epoch;
    s.rng_.deserialize(epoch_state);
    s.epoch_state_ = epoch_state;
    s.reshuffle();
    check_data(cursor <= s.perm_.size(), "sampler: cursor out of range");
    s.cursor_ = cursor;
    return s;
  }

 private:
  void reshuffle() {
    perm_.resize(total_);
    for (uint64_t i = 0; i < total_; ++i) perm_[i] = i;
    rng_.shuffle(perm_.begin(), perm_.end());
    cursor_ = 0;
  }

  uint64_t total_ = 0;
  Rng rng_{0};
  std::string epoch_state_;
  std::vector<uint64_t> perm_;
  uint64_t epoch_ = 0;
  size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Metrics

struct StepMetrics {
  int64_t step = 0;
  double l_r = 0, l_b = 0, l_o = 0;
  double psnr = 0;
  double lr = 0;
  std::vector<double> f;  // per-expert hard routing fraction
  double changing_rate = -1;  // -1 when not probed this step

  std::string to_ndjson() const {
    nlohmann::json j;
    j["step"] = step;
    j["L_r"] = l_r;
    j["L_b"] = l_b;
    j["psnr"] = psnr;
    j["lr"] = lr;
    j["f"] = f;
    if (changing_rate >= 0) j["changing_rate"] = changing_rate;
    return j.dump();
  }
};

inline double psnr_from_mse(double mse) {
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// ---------------------------------------------------------------------------
// Changing-rate probe

// Top-1 expert per probe point (positions already in the gate domain).
template <typename T>
std::vector<int> probe_assignments(const Model<T>& m,
                                   const std::vector<Vec3<T>>& xs) {
  GateConfig gc = m.cfg.gate_config();
  gc.top_k = 1;
  GateDecision<T> dec;
  GateCache<T> cache;
  gate_forward(gc, m.gate, m.params(), xs.data(), xs.size(), dec, cache,
               "changing-rate probe");
  return dec.chosen;
}

inline double changing_rate(const std::vector<int>& prev,
                            const std::vector<int>& cur) {
  check_contract(prev.size() == cur.size() && !prev.empty(),
                 "changing_rate: probe size mismatch");
  size_t diff = 0;
  for (size_t i = 0; i < prev.size(); ++i) diff += prev[i] != cur[i] ? 1 : 0;
  return double(diff) / double(prev.size());
}

// ---------------------------------------------------------------------------
// Trainer

template <typename T>
class Trainer {
 public:
  Model<T> model;
  TrainConfig tc;
  RenderConfig<T> rc;
  AdamState<T> opt;
  Rng rng{0};

  static Trainer create(const ModelConfig& mc, const TrainConfig& tc,
                        const RenderConfig<T>& rc) {
    tc.validate();
    rc.validate();
    Trainer t;
    t.model = Model<T>::build(mc);
    t.model.init();
    t.tc = tc;
    t.rc = rc;
    t.opt.init(t.model.store.size());
    t.rng = Rng(tc.seed);
    t.grads_ = t.model.store.make_buffer();
    return t;
  }

  // One optimization step on a ray batch with ground-truth colors
  // (count*3 in [0,1]). Sharded across tc.threads; shard gradients are
  // reduced in fixed shard order so a given thread count is bitwise
  // deterministic.
  StepMetrics train_step(const RayBatch<T>& rays, const T* gt) {
    const size_t n_rays = rays.count();
    check_contract(n_rays > 0, "train_step: empty ray batch");
    const T lr = T(tc.lr_at(opt.step));
    const uint64_t step_seed = rng.next_u64();

    const int shards = std::max(1, tc.threads);
    std::vector<RenderPass<T>> passes(shards);
    std::vector<RayBatch<T>> parts(shards);
    std::vector<size_t> part_begin(shards + 1, 0);
    for (int s = 0; s <= shards; ++s) {
      part_begin[s] = n_rays * size_t(s) / size_t(shards);
    }
    char ctx[64];
    std::snprintf(ctx, sizeof(ctx), "step %lld",
                  static_cast<long long>(opt.step));
    parallel_for(size_t(shards), tc.threads, [&](size_t b, size_t e, int) {
      for (size_t s = b; s < e; ++s) {
        auto& part = parts[s];
        part.origins.assign(rays.origins.begin() + part_begin[s],
                            rays.origins.begin() + part_begin[s + 1]);
        part.dirs.assign(rays.dirs.begin() + part_begin[s],
                         rays.dirs.begin() + part_begin[s + 1]);
        part.image_ids.assign(rays.image_ids.begin() + part_begin[s],
                              rays.image_ids.begin() + part_begin[s + 1]);
        Rng srng(step_seed + 0x9e3779b97f4a7c15ULL * (s + 1));
        render_forward(model, part, rc, srng, passes[s], ctx);
      }
    });

    // Loss assembly: L_r is a mean over the whole batch; L_b is the
    // ray-count weighted mean of per-shard balance losses (identical to
    // the batch-global value when shards == 1).
    double sq = 0, lb = 0;
    std::vector<double> f(size_t(model.cfg.n_experts), 0.0);
    size_t fg_total = 0;
    for (int s = 0; s < shards; ++s) {
      const auto& pass = passes[s];
      const size_t nr = part_begin[s + 1] - part_begin[s];
      for (size_t i = 0; i < nr * 3; ++i) {
        const double d = double(pass.result.color[i]) -
                         double(gt[part_begin[s] * 3 + i]);
        sq += d * d;
      }
      if (pass.fg.count > 0) {
        lb += double(balance_loss(pass.fg.dec)) * double(nr) / double(n_rays);
        for (int i = 0; i < model.cfg.n_experts; ++i) {
          f[i] += double(pass.fg.dec.hard_fraction[i]) * double(pass.fg.count);
        }
        fg_total += pass.fg.count;
      }
    }
    const double l_r = sq / double(n_rays);
    const double l_o = l_r + double(tc.lambda) * lb;
    if (!std::isfinite(l_o)) {
      throw DivergenceError(std::string("non-finite loss at ") + ctx);
    }
    if (fg_total > 0) {
      for (auto& v : f) v /= double(fg_total);
    }

    // Backward: shard 0 into the main buffer, others reduced in order.
    std::fill(grads_.begin(), grads_.end(), T{0});
    std::vector<std::vector<T>> shard_grads(size_t(shards) - 1);
    parallel_for(size_t(shards), tc.threads, [&](size_t b, size_t e, int) {
      for (size_t s = b; s < e; ++s) {
        T* g = grads_.data();
        if (s > 0) {
          shard_grads[s - 1] = model.store.make_buffer();
          g = shard_grads[s - 1].data();
        }
        auto& pass = passes[s];
        const size_t nr = part_begin[s + 1] - part_begin[s];
        std::vector<T> dcolor(nr * 3);
        for (size_t i = 0; i < nr * 3; ++i) {
          dcolor[i] = T{2} *
                      (pass.result.color[i] - gt[part_begin[s] * 3 + i]) /
                      T(n_rays);
        }
        const T bscale = T(tc.lambda) * T(nr) / T(n_rays);
        render_backward(model, rc, pass, dcolor.data(), bscale, g);
      }
    });
    for (auto& sg : shard_grads) {
      detail::accumulate_buffer(grads_.data(), sg.data(), sg.size());
    }

    adam_apply(model.store, grads_.data(), opt, tc, lr);

    StepMetrics m;
    m.step = opt.step;
    m.l_r = l_r;
    m.l_b = lb;
    m.l_o = l_o;
    m.psnr = psnr_from_mse(l_r / 3.0);
    m.lr = double(lr);
    m.f = f;
    return m;
  }

  const std::vector<T>& last_grads() const { return grads_; }

 private:
  std::vector<T> grads_;
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary container with named parameter blobs
// (native little-endian scalars, f32 for the training configuration),
// optimizer moments, RNG and sampler state.

namespace detail {

inline void write_bytes(std::ofstream& f, const void* p, size_t n) {
  f.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

inline void read_bytes(std::ifstream& f, void* p, size_t n) {
  f.read(reinterpret_cast<char*>(p), std::streamsize(n));
  check_data(bool(f), "checkpoint: truncated file");
}

template <typename V>
void write_pod(std::ofstream& f, V v) {
  write_bytes(f, &v, sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& f) {
  V v;
  read_bytes(f, &v, sizeof(V));
  return v;
}

inline void write_str(std::ofstream& f, const std::string& s) {
  write_pod<uint32_t>(f, uint32_t(s.size()));
  write_bytes(f, s.data(), s.size());
}

inline std::string read_str(std::ifstream& f) {
  const uint32_t n = read_pod<uint32_t>(f);
  check_data(n < (1u << 20), "checkpoint: absurd string length");
  std::string s(n, '\0');
  read_bytes(f, s.data(), n);
  return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'H', 'M', 'O', 'E'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct SamplerState {
  uint64_t total = 0, epoch = 0, cursor = 0;
  std::string epoch_rng;
};

template <typename T>
void save_checkpoint(const Trainer<T>& t, const SamplerState& sampler,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check_data(bool(f), "checkpoint: cannot open for writing: " + path);
  detail::write_bytes(f, kCheckpointMagic, 4);
  detail::write_pod<uint32_t>(f, kCheckpointVersion);
  detail::write_pod<uint32_t>(f, uint32_t(sizeof(T)));
  detail::write_pod<int32_t>(f, t.model.cfg.n_experts);
  detail::write_pod<int32_t>(f, t.model.cfg.top_k);
  detail::write_pod<uint64_t>(f, t.model.store.size());
  detail::write_pod<int64_t>(f, t.opt.step);
  detail::write_str(f, t.rng.serialize());
  detail::write_pod<uint64_t>(f, sampler.total);
  detail::write_pod<uint64_t>(f, sampler.epoch);
  detail::write_pod<uint64_t>(f, sampler.cursor);
  detail::write_str(f, sampler.epoch_rng);
  const auto& ranges = t.model.store.ranges();
  detail::write_pod<uint32_t>(f, uint32_t(ranges.size()));
  for (const auto& r : ranges) {
    detail::write_str(f, r.name);
    detail::write_pod<uint64_t>(f, r.size);
    detail::write_pod<uint8_t>(f, uint8_t(r.kind));
    detail::write_bytes(f, t.model.store.data() + r.offset,
                        r.size * sizeof(T));
    detail::write_bytes(f, t.opt.m.data() + r.offset, r.size * sizeof(T));
    detail::write_bytes(f, t.opt.v.data() + r.offset, r.size * sizeof(T));
  }
  check_data(bool(f), "checkpoint: write failed: " + path);
}

// Loads into a trainer whose model was built from the same config; the
// blob table is validated name by name.
template <typename T>
SamplerState load_checkpoint(Trainer<T>& t, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_data(bool(f), "checkpoint: cannot open: " + path);
  char magic[4];
  detail::read_bytes(f, magic, 4);
  check_data(std::memcmp(magic, kCheckpointMagic, 4) == 0,
             "checkpoint: bad magic");
  check_data(detail::read_pod<uint32_t>(f) == kCheckpointVersion,
             "checkpoint: unsupported version");
  check_data(detail::read_pod<uint32_t>(f) == uint32_t(sizeof(T)),
             "checkpoint: scalar width mismatch");
  const int32_t n_experts = detail::read_pod<int32_t>(f);
  check_data(n_experts == t.model.cfg.n_experts,
             "checkpoint: expert count mismatch in expert_pyramid.tables");
  const int32_t top_k = detail::read_pod<int32_t>(f);
  check_data(top_k == t.model.cfg.top_k, "checkpoint: top_k mismatch");
  check_data(detail::read_pod<uint64_t>(f) == t.model.store.size(),
             "checkpoint: parameter count mismatch");
  t.opt.step = detail::read_pod<int64_t>(f);
  t.rng.deserialize(detail::read_str(f));
  SamplerState sampler;
  sampler.total = detail::read_pod<uint64_t>(f);
  sampler.epoch = detail::read_pod<uint64_t>(f);
  sampler.cursor = detail::read_pod<uint64_t>(f);
  sampler.epoch_rng = detail::read_str(f);
  const uint32_t n_ranges = detail::read_pod<uint32_t>(f);
  const auto& ranges = t.model.store.ranges();
  check_data(n_ranges == ranges.size(), "checkpoint: blob table mismatch");
  for (const auto& r : ranges) {
    const std::string name = detail::read_str(f);
    check_data(name == r.name, "checkpoint: unexpected blob " + name);
    check_data(detail::read_pod<uint64_t>(f) == r.size,
               "checkpoint: shape mismatch for " + name);
    check_data(detail::read_pod<uint8_t>(f) == uint8_t(r.kind),
               "checkpoint: kind mismatch for " + name);
    detail::read_bytes(f, t.model.store.data() + r.offset, r.size * sizeof(T));
    detail::read_bytes(f, t.opt.m.data() + r.offset, r.size * sizeof(T));
    detail::read_bytes(f, t.opt.v.data() + r.offset, r.size * sizeof(T));
  }
  return sampler;
}

}  // namespace hashmoe
