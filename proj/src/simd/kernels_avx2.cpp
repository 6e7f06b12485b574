// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// AVX2 kernels. Summation order matches the scalar reference (lane j of
// the accumulator holds the i%8==j partial; the horizontal reduce is the
// same pairwise tree), so outputs are bitwise equal to scalar. No FMA:
// the reference is mul+add and the whole project builds with
// -ffp-contract=off.

#include "hashmoe/simd/kernels.hpp"

#include <immintrin.h>

namespace hashmoe::simd {
namespace {

// ((p0+p4)+(p2+p6)) + ((p1+p5)+(p3+p7)), same tree as the scalar ref.
inline float reduce_blocked8(__m256 acc) {
  const __m128 q = _mm_add_ps(_mm256_castps256_ps128(acc),
                              _mm256_extractf128_ps(acc, 1));
  const __m128 r = _mm_add_ps(q, _mm_movehl_ps(q, q));
  return _mm_cvtss_f32(_mm_add_ss(r, _mm_shuffle_ps(r, r, 1)));
}

inline float dot_blocked8(const float* w, const float* x, int n) {
  const int nb = n & ~7;
  __m256 acc = _mm256_setzero_ps();
  for (int i = 0; i < nb; i += 8) {
    acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(w + i),
                                           _mm256_loadu_ps(x + i)));
  }
  float s = reduce_blocked8(acc);
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
  const int nb = in & ~7;
  for (int o = 0; o < out; ++o) {
    const float* w = W + static_cast<size_t>(o) * in;
    const __m256 g = _mm256_set1_ps(dy[o]);
    for (int i = 0; i < nb; i += 8) {
      const __m256 d = _mm256_add_ps(_mm256_loadu_ps(dx + i),
                                     _mm256_mul_ps(_mm256_loadu_ps(w + i), g));
      _mm256_storeu_ps(dx + i, d);
    }
    const float gs = dy[o];
    for (int i = nb; i < in; ++i) dx[i] += w[i] * gs;
  }
}

void dense_backward_params(const float* x, const float* dy, float* gW,
                           float* gb, int in, int out) {
  const int nb = in & ~7;
  for (int o = 0; o < out; ++o) {
    float* gw = gW + static_cast<size_t>(o) * in;
    const __m256 g = _mm256_set1_ps(dy[o]);
    for (int i = 0; i < nb; i += 8) {
      const __m256 d = _mm256_add_ps(_mm256_loadu_ps(gw + i),
                                     _mm256_mul_ps(g, _mm256_loadu_ps(x + i)));
      _mm256_storeu_ps(gw + i, d);
    }
    const float gs = dy[o];
    for (int i = nb; i < in; ++i) gw[i] += gs * x[i];
    gb[o] += gs;
  }
}

void accumulate(float* dst, const float* src, size_t n) {
  const size_t nb = n & ~size_t{7};
  for (size_t i = 0; i < nb; i += 8) {
    _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i),
                                            _mm256_loadu_ps(src + i)));
  }
  for (size_t i = nb; i < n; ++i) dst[i] += src[i];
}

void adam_step(float* p, const float* g, float* m, float* v, size_t n,
               float lr, float beta1, float beta2, float eps, float bias_c1,
               float bias_c2) {
  const size_t nb = n & ~size_t{7};
  const __m256 vb1 = _mm256_set1_ps(beta1), vb1c = _mm256_set1_ps(1.0f - beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2), vb2c = _mm256_set1_ps(1.0f - beta2);
  const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  const __m256 vc1 = _mm256_set1_ps(bias_c1), vc2 = _mm256_set1_ps(bias_c2);
  for (size_t i = 0; i < nb; i += 8) {
    const __m256 gi = _mm256_loadu_ps(g + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)),
                                    _mm256_mul_ps(vb1c, gi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(vb2c, _mm256_mul_ps(gi, gi)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_div_ps(mi, vc1);
    const __m256 vhat = _mm256_div_ps(vi, vc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
  }
  if (nb < n) {
    scalar_kernels().adam_step(p + nb, g + nb, m + nb, v + nb, n - nb, lr,
                               beta1, beta2, eps, bias_c1, bias_c2);
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels k = {dense_forward,       dense_backward_input,
                            dense_backward_params, accumulate,
                            adam_step,           "avx2"};
  return k;
}

}  // namespace hashmoe::simd
