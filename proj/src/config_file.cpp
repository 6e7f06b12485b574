// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#include "hashmoe/config_file.hpp"

#include <fstream>
#include <sstream>

namespace hashmoe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string ConfigMap::get_str(const std::string& key,
                               const std::string& dflt) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

int64_t ConfigMap::get_int(const std::string& key, int64_t dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    check_config(pos == it->second.size(), "");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' is not an integer: " +
                      it->second);
  }
}

double ConfigMap::get_double(const std::string& key, double dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    check_config(pos == it->second.size(), "");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' is not a number: " +
                      it->second);
  }
}

bool ConfigMap::get_bool(const std::string& key, bool dflt) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
}

ConfigMap parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    check_config(eq != std::string::npos,
                 "config: line " + std::to_string(lineno) +
                     " is not key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check_config(!key.empty(),
                 "config: empty key at line " + std::to_string(lineno));
    kv[key] = value;
  }
  return ConfigMap(std::move(kv));
}

ConfigMap load_config(const std::string& path) {
  std::ifstream f(path);
  check_config(bool(f), "config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void save_config(const ConfigMap& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  check_data(bool(f), "config: cannot write " + path);
  for (const auto& [k, v] : cfg.entries()) f << k << " = " << v << "\n";
}

}  // namespace hashmoe
