// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration files: '#' comments, blank lines
// ignored, later keys override earlier ones. CLI flags override file
// values at a higher layer.
#pragma once

#include <map>
#include <string>

#include "hashmoe/common.hpp"

namespace hashmoe {

class ConfigMap {
 public:
  ConfigMap() = default;
  explicit ConfigMap(std::map<std::string, std::string> kv)
      : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) {
    kv_[key] = value;
  }

  std::string get_str(const std::string& key, const std::string& dflt) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

ConfigMap load_config(const std::string& path);
ConfigMap parse_config(const std::string& text);
void save_config(const ConfigMap& cfg, const std::string& path);

}  // namespace hashmoe
