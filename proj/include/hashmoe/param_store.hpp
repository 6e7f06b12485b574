// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hashmoe/common.hpp"

namespace hashmoe {

// Adam uses a different epsilon for hash tables than for dense layers,
// so every range carries a kind tag.
enum class ParamKind { kHashTable, kMlp, kEmbedding };

struct ParamRange {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
  ParamKind kind = ParamKind::kMlp;
};

// One flat buffer holding every trainable scalar, plus named ranges.
// Modules keep offsets into the store instead of owning their weights;
// gradients and optimizer moments are then plain arrays of store size.
template <typename T>
class ParamStore {
 public:
  size_t alloc(const std::string& name, size_t n, ParamKind kind) {
    const size_t off = values_.size();
    ranges_.push_back({name, off, n, kind});
    values_.resize(off + n, T{0});
    return off;
  }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  size_t size() const { return values_.size(); }

  const std::vector<ParamRange>& ranges() const { return ranges_; }

  const ParamRange& find(const std::string& name) const {
    for (const auto& r : ranges_) {
      if (r.name == name) return r;
    }
    throw ContractViolation("no parameter range named " + name);
  }

  std::vector<T> make_buffer() const { return std::vector<T>(size(), T{0}); }

 private:
  std::vector<T> values_;
  std::vector<ParamRange> ranges_;
};

}  // namespace hashmoe
