// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hashmoe/simd/kernels.hpp"

#include <cstdlib>

#include "hashmoe/common.hpp"

namespace hashmoe::simd {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Kernels* pick_auto() {
  const char* force = std::getenv("HASHMOE_FORCE_SCALAR");
  if (force && force[0] == '1') return &scalar_kernels();
  return cpu_has_avx2() ? &avx2_kernels() : &scalar_kernels();
}

const Kernels*& active_slot() {
  static const Kernels* active = pick_auto();
  return active;
}

}  // namespace

const Kernels& active_kernels() { return *active_slot(); }

void select_kernels(const std::string& name) {
  if (name == "scalar") {
    active_slot() = &scalar_kernels();
  } else if (name == "avx2") {
    check_config(cpu_has_avx2(), "avx2 kernels requested but CPU lacks AVX2");
    active_slot() = &avx2_kernels();
  } else if (name == "auto") {
    active_slot() = pick_auto();
  } else {
    throw ConfigError("unknown kernel set: " + name);
  }
}

}  // namespace hashmoe::simd
