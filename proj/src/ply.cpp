// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#include "hashmoe/ply.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace hashmoe {

void write_ply(const std::string& path, const std::vector<PlyPoint>& points) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check_data(bool(f), "ply: cannot open for writing " + path);
  f << "ply\n"
    << "format binary_little_endian 1.0\n"
    << "element vertex " << points.size() << "\n"
    << "property float x\n"
    << "property float y\n"
    << "property float z\n"
    << "property uchar red\n"
    << "property uchar green\n"
    << "property uchar blue\n"
    << "property float alpha\n"
    << "property int expert_id\n"
    << "end_header\n";
  for (const auto& p : points) {
    f.write(reinterpret_cast<const char*>(&p.x), 4);
    f.write(reinterpret_cast<const char*>(&p.y), 4);
    f.write(reinterpret_cast<const char*>(&p.z), 4);
    f.put(char(p.r));
    f.put(char(p.g));
    f.put(char(p.b));
    f.write(reinterpret_cast<const char*>(&p.alpha), 4);
    f.write(reinterpret_cast<const char*>(&p.expert), 4);
  }
  check_data(bool(f), "ply: write failed " + path);
}

std::vector<PlyPoint> read_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_data(bool(f), "ply: cannot open " + path);
  std::string line;
  std::getline(f, line);
  check_data(line == "ply", "ply: bad magic in " + path);
  size_t count = 0;
  std::vector<std::string> props;
  bool binary_le = false;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (tok == "element") {
      std::string what;
      ls >> what >> count;
      check_data(what == "vertex", "ply: unsupported element " + what);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  check_data(binary_le, "ply: only binary_little_endian is supported");
  const std::vector<std::string> want = {"x",     "y",    "z",     "red",
                                         "green", "blue", "alpha", "expert_id"};
  check_data(props == want, "ply: unexpected property layout");
  std::vector<PlyPoint> points(count);
  for (auto& p : points) {
    f.read(reinterpret_cast<char*>(&p.x), 4);
    f.read(reinterpret_cast<char*>(&p.y), 4);
    f.read(reinterpret_cast<char*>(&p.z), 4);
    p.r = uint8_t(f.get());
    p.g = uint8_t(f.get());
    p.b = uint8_t(f.get());
    f.read(reinterpret_cast<char*>(&p.alpha), 4);
    f.read(reinterpret_cast<char*>(&p.expert), 4);
  }
  check_data(bool(f), "ply: truncated " + path);
  return points;
}

}  // namespace hashmoe
