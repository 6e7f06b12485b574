// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense numeric kernels with hand-derived gradients: small MLPs, softmax,
// spherical-harmonics and positional direction encodings, activations.
// The only place raw matrix math lives.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <vector>

#include "hashmoe/common.hpp"
#include "hashmoe/param_store.hpp"
#include "hashmoe/simd/kernels.hpp"

namespace hashmoe {

enum class Act { kNone, kRelu };

namespace detail {

// Reference dot product with the blocked-8 summation order shared by the
// SIMD kernels (see src/simd/kernels_scalar.cpp).
template <typename T>
inline T dot_blocked8(const T* w, const T* x, int n) {
  T p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const int nb = n & ~7;
  for (int i = 0; i < nb; i += 8) {
    for (int j = 0; j < 8; ++j) p[j] += w[i + j] * x[i + j];
  }
  T lo = (p[0] + p[4]) + (p[2] + p[6]);
  T hi = (p[1] + p[5]) + (p[3] + p[7]);
  T s = lo + hi;
  for (int i = nb; i < n; ++i) s += w[i] * x[i];
  return s;
}

template <typename T>
inline void dense_forward(const T* W, const T* b, const T* x, T* y, int in,
                          int out, bool relu) {
  for (int o = 0; o < out; ++o) {
    T s = b[o] + dot_blocked8(W + static_cast<size_t>(o) * in, x, in);
    y[o] = relu && s < T{0} ? T{0} : s;
  }
}

inline void dense_forward(const float* W, const float* b, const float* x,
                          float* y, int in, int out, bool relu) {
  simd::active_kernels().dense_forward(W, b, x, y, in, out, relu);
}

template <typename T>
inline void dense_backward_input(const T* W, const T* dy, T* dx, int in,
                                 int out) {
  for (int o = 0; o < out; ++o) {
    const T* w = W + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) dx[i] += w[i] * dy[o];
  }
}

inline void dense_backward_input(const float* W, const float* dy, float* dx,
                                 int in, int out) {
  simd::active_kernels().dense_backward_input(W, dy, dx, in, out);
}

template <typename T>
inline void dense_backward_params(const T* x, const T* dy, T* gW, T* gb,
                                  int in, int out) {
  for (int o = 0; o < out; ++o) {
    T* gw = gW + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) gw[i] += dy[o] * x[i];
    gb[o] += dy[o];
  }
}

inline void dense_backward_params(const float* x, const float* dy, float* gW,
                                  float* gb, int in, int out) {
  simd::active_kernels().dense_backward_params(x, dy, gW, gb, in, out);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Activations

template <typename T>
inline T softplus(T x) {
  // log1p(exp(x)) with the large-x branch to avoid overflow.
  return x > T{20} ? x : std::log1p(std::exp(x));
}

template <typename T>
inline T softplus_grad(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

template <typename T>
inline T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

template <typename T>
inline T sigmoid_grad_from_value(T s) {
  return s * (T{1} - s);
}

// Max-subtracted softmax; total on finite inputs.
template <typename T>
inline void softmax(const T* z, T* p, int n) {
  T zmax = z[0];
  for (int i = 1; i < n; ++i) zmax = std::max(zmax, z[i]);
  T sum = 0;
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (int i = 0; i < n; ++i) p[i] /= sum;
}

// dz = P' dp where P is softmax: dz_i = p_i * (dp_i - <dp, p>).
template <typename T>
inline void softmax_backward(const T* p, const T* dp, T* dz, int n) {
  T inner = 0;
  for (int i = 0; i < n; ++i) inner += dp[i] * p[i];
  for (int i = 0; i < n; ++i) dz[i] = p[i] * (dp[i] - inner);
}

// ---------------------------------------------------------------------------
// Direction encodings

// Real spherical harmonics, bands l = 0..degree-1, degree <= 4.
// Convention: real basis without Condon-Shortley phase, components ordered
// m = -l..l, i.e. band 1 is (y, z, x) scaled by sqrt(3/(4*pi)).
inline constexpr int kShMaxDegree = 4;

template <typename T>
inline void sh_encode(Vec3<T> d, int degree, T* out) {
  assert(degree >= 1 && degree <= kShMaxDegree);
  const T n = d.norm();
  assert(std::abs(n - T{1}) < T{1e-3} && "direction should be unit length");
  const T x = d.x / n, y = d.y / n, z = d.z / n;

  out[0] = T{0.28209479177387814};  // 1/(2 sqrt(pi))
  if (degree < 2) return;
  out[1] = T{0.4886025119029199} * y;  // sqrt(3/(4 pi))
  out[2] = T{0.4886025119029199} * z;
  out[3] = T{0.4886025119029199} * x;
  if (degree < 3) return;
  const T xx = x * x, yy = y * y, zz = z * z;
  out[4] = T{1.0925484305920792} * x * y;  // (1/2) sqrt(15/pi)
  out[5] = T{1.0925484305920792} * y * z;
  out[6] = T{0.31539156525252005} * (T{3} * zz - T{1});  // (1/4) sqrt(5/pi)
  out[7] = T{1.0925484305920792} * x * z;
  out[8] = T{0.5462742152960396} * (xx - yy);  // (1/4) sqrt(15/pi)
  if (degree < 4) return;
  out[9] = T{0.5900435899266435} * y * (T{3} * xx - yy);   // (1/4) sqrt(35/(2 pi))
  out[10] = T{2.890611442640554} * x * y * z;              // (1/2) sqrt(105/pi)
  out[11] = T{0.4570457994644658} * y * (T{5} * zz - T{1});  // (1/4) sqrt(21/(2 pi))
  out[12] = T{0.3731763325901154} * z * (T{5} * zz - T{3});  // (1/4) sqrt(7/pi)
  out[13] = T{0.4570457994644658} * x * (T{5} * zz - T{1});
  out[14] = T{1.445305721320277} * z * (xx - yy);          // (1/4) sqrt(105/pi)
  out[15] = T{0.5900435899266435} * x * (xx - T{3} * yy);
}

inline constexpr int sh_dim(int degree) { return degree * degree; }

// NeRF-style positional encoding: [x, sin(2^j pi x), cos(2^j pi x)].
inline constexpr int pe_dim(int freqs) { return 3 + 6 * freqs; }

template <typename T>
inline void positional_encode(Vec3<T> p, int freqs, T* out) {
  out[0] = p.x;
  out[1] = p.y;
  out[2] = p.z;
  int o = 3;
  const T comps[3] = {p.x, p.y, p.z};
  for (int j = 0; j < freqs; ++j) {
    const T scale = std::ldexp(T{3.14159265358979323846}, j);
    for (int c = 0; c < 3; ++c) {
      out[o++] = std::sin(scale * comps[c]);
      out[o++] = std::cos(scale * comps[c]);
    }
  }
}

// ---------------------------------------------------------------------------
// DenseMlp

// Small fully connected network whose weights live in a ParamStore.
// Layer l maps widths[l] -> widths[l+1]; weights are row-major [out x in].
template <typename T>
struct DenseMlp {
  struct Layer {
    int in = 0, out = 0;
    Act act = Act::kNone;
    size_t w_off = 0, b_off = 0;
  };
  std::vector<Layer> layers;

  int input_dim() const { return layers.front().in; }
  int output_dim() const { return layers.back().out; }

  // cache = [x, y_0, y_1, ...]: the layer inputs/outputs after activation.
  size_t cache_size() const {
    size_t n = static_cast<size_t>(input_dim());
    for (const auto& l : layers) n += static_cast<size_t>(l.out);
    return n;
  }

  int max_width() const {
    int w = input_dim();
    for (const auto& l : layers) w = std::max(w, l.out);
    return w;
  }

  static DenseMlp create(ParamStore<T>& store, const std::string& name,
                         const std::vector<int>& widths,
                         const std::vector<Act>& acts) {
    check_config(widths.size() >= 2, name + ": need at least one layer");
    check_config(acts.size() == widths.size() - 1,
                 name + ": one activation per layer required");
    DenseMlp mlp;
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      check_config(widths[l] > 0 && widths[l + 1] > 0,
                   name + ": layer widths must be positive");
      Layer layer;
      layer.in = widths[l];
      layer.out = widths[l + 1];
      layer.act = acts[l];
      layer.w_off = store.alloc(
          name + ".l" + std::to_string(l) + ".W",
          static_cast<size_t>(layer.in) * layer.out, ParamKind::kMlp);
      layer.b_off = store.alloc(name + ".l" + std::to_string(l) + ".b",
                                static_cast<size_t>(layer.out), ParamKind::kMlp);
      mlp.layers.push_back(layer);
    }
    return mlp;
  }

  // Glorot-uniform weights, zero biases.
  void init(T* params, Rng& rng) const {
    for (const auto& l : layers) {
      const T bound = std::sqrt(T{6} / static_cast<T>(l.in + l.out));
      for (size_t i = 0; i < static_cast<size_t>(l.in) * l.out; ++i) {
        params[l.w_off + i] = static_cast<T>(rng.uniform(-bound, bound));
      }
      for (int i = 0; i < l.out; ++i) params[l.b_off + i] = 0;
    }
  }

  void forward(const T* params, const T* x, T* y, T* cache) const {
    std::copy(x, x + input_dim(), cache);
    const T* cur = cache;
    T* next = cache + input_dim();
    for (const auto& l : layers) {
      detail::dense_forward(params + l.w_off, params + l.b_off, cur, next,
                            l.in, l.out, l.act == Act::kRelu);
      cur = next;
      next += l.out;
    }
    std::copy(cur, cur + output_dim(), y);
  }

  // Accumulates parameter gradients into `grads` (store layout) and
  // writes dL/dx into dx (may be null). scratch: 2 * max_width().
  void backward(const T* params, const T* cache, const T* dy, T* grads, T* dx,
                T* scratch) const {
    T* cur = scratch;
    T* prev = scratch + max_width();
    std::copy(dy, dy + output_dim(), cur);

    // Offset of the last layer's input inside the cache; walked backwards.
    size_t in_off = cache_size() - static_cast<size_t>(output_dim()) -
                    static_cast<size_t>(layers.back().in);
    for (size_t li = layers.size(); li-- > 0;) {
      const Layer& l = layers[li];
      const T* x_l = cache + in_off;
      const T* y_l = cache + in_off + l.in;
      if (l.act == Act::kRelu) {
        for (int o = 0; o < l.out; ++o) {
          if (y_l[o] <= T{0}) cur[o] = T{0};
        }
      }
      detail::dense_backward_params(x_l, cur, grads + l.w_off, grads + l.b_off,
                                    l.in, l.out);
      T* dst = li == 0 ? dx : prev;
      if (dst != nullptr) {
        std::fill(dst, dst + l.in, T{0});
        detail::dense_backward_input(params + l.w_off, cur, dst, l.in, l.out);
      }
      std::swap(cur, prev);
      if (li > 0) in_off -= static_cast<size_t>(layers[li - 1].in);
    }
  }
};

}  // namespace hashmoe
