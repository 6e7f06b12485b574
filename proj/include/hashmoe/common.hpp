// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace hashmoe {

// Exit codes used by the CLI; library code throws the matching exception.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss / logits during training.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Misuse of an internal contract (stale cache, shape mismatch).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}
inline void check_data(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}
inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}

// Deterministic RNG (splitmix64). Conversions are hand-rolled so the
// produced values do not depend on libstdc++ distribution internals and
// the state serializes into checkpoints as a single word.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() { return state_ii(); }

  // Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(state_ii() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = state_ii();
    } while (v >= limit);
    return v % n;
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

  std::string serialize() const;
  void deserialize(const std::string& blob);

 private:
  uint64_t state_ii() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

inline std::string Rng::serialize() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
  return std::string(buf);
}

inline void Rng::deserialize(const std::string& blob) {
  check_data(blob.size() == 16, "rng state blob must be 16 hex chars");
  state_ = std::strtoull(blob.c_str(), nullptr, 16);
}

template <typename T>
struct Vec3 {
  T x = 0, y = 0, z = 0;

  T norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  T dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 normalized() const {
    const T n = norm();
    return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 1};
  }
};

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

}  // namespace hashmoe
