// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar reference kernels. These define the numeric contract: the dot
// product is computed as 8 strided partial sums (i % 8 picks the
// partial), reduced as ((p0+p4)+(p2+p6)) + ((p1+p5)+(p3+p7)), with the
// remainder added sequentially afterwards. The AVX2 variants reproduce
// this order exactly, which keeps scalar and vector paths bitwise equal.

#include "hashmoe/simd/kernels.hpp"

#include <cmath>

namespace hashmoe::simd {
namespace {

inline float dot_blocked8(const float* w, const float* x, int n) {
  float p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const int nb = n & ~7;
  for (int i = 0; i < nb; i += 8) {
    for (int j = 0; j < 8; ++j) p[j] += w[i + j] * x[i + j];
  }
  float lo = (p[0] + p[4]) + (p[2] + p[6]);
  float hi = (p[1] + p[5]) + (p[3] + p[7]);
  float s = lo + hi;
  for (int i = nb; i < n; ++i) s += w[i] * x[i];
  return s;
}

void dense_forward(const float* W, const float* bias, const float* x, float* y,
                   int in, int out, bool relu) {
  for (int o = 0; o < out; ++o) {
    float s = bias[o] + dot_blocked8(W + static_cast<size_t>(o) * in, x, in);
    y[o] = relu && s < 0.0f ? 0.0f : s;
  }
}

void dense_backward_input(const float* W, const float* dy, float* dx, int in,
                          int out) {
  for (int o = 0; o < out; ++o) {
    const float* w = W + static_cast<size_t>(o) * in;
    const float g = dy[o];
    for (int i = 0; i < in; ++i) dx[i] += w[i] * g;
  }
}

void dense_backward_params(const float* x, const float* dy, float* gW,
                           float* gb, int in, int out) {
  for (int o = 0; o < out; ++o) {
    float* gw = gW + static_cast<size_t>(o) * in;
    const float g = dy[o];
    for (int i = 0; i < in; ++i) gw[i] += g * x[i];
    gb[o] += g;
  }
}

void accumulate(float* dst, const float* src, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void adam_step(float* p, const float* g, float* m, float* v, size_t n,
               float lr, float beta1, float beta2, float eps, float bias_c1,
               float bias_c2) {
  for (size_t i = 0; i < n; ++i) {
    const float gi = g[i];
    m[i] = beta1 * m[i] + (1.0f - beta1) * gi;
    v[i] = beta2 * v[i] + (1.0f - beta2) * (gi * gi);
    const float mhat = m[i] / bias_c1;
    const float vhat = v[i] / bias_c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k = {dense_forward,       dense_backward_input,
                            dense_backward_params, accumulate,
                            adam_step,           "scalar"};
  return k;
}

}  // namespace hashmoe::simd
