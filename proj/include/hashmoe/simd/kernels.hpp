// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

namespace hashmoe::simd {

// Float kernel table, filled at startup with the best implementation the
// CPU supports. Every variant must be bitwise-identical to the scalar
// reference: the reference fixes the summation order (8 strided partial
// sums reduced pairwise, then a sequential tail) so that a lane-per-
// partial AVX2 loop produces the same floats.
struct Kernels {
  // y[o] = bias[o] + sum_i W[o*in+i] * x[i], optional ReLU clamp.
  void (*dense_forward)(const float* W, const float* bias, const float* x,
                        float* y, int in, int out, bool relu);
  // dx[i] += sum_o W[o*in+i] * dy[o]  (dx must be zeroed by the caller
  // when accumulation is not wanted).
  void (*dense_backward_input)(const float* W, const float* dy, float* dx,
                               int in, int out);
  // gW[o*in+i] += dy[o] * x[i]; gb[o] += dy[o].
  void (*dense_backward_params)(const float* x, const float* dy, float* gW,
                                float* gb, int in, int out);
  // dst[i] += src[i].
  void (*accumulate)(float* dst, const float* src, size_t n);
  // Adam with bias correction folded into the step:
  //   m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2
  //   p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
  void (*adam_step)(float* p, const float* g, float* m, float* v, size_t n,
                    float lr, float beta1, float beta2, float eps,
                    float bias_c1, float bias_c2);

  const char* name;
};

// Scalar reference table (always available).
const Kernels& scalar_kernels();
// AVX2 table; only valid to call when the CPU supports AVX2.
const Kernels& avx2_kernels();

// Table picked at startup (honors HASHMOE_FORCE_SCALAR=1 in the
// environment), or after a call to select_kernels().
const Kernels& active_kernels();
void select_kernels(const std::string& name);  // "scalar" | "avx2" | "auto"

}  // namespace hashmoe::simd
