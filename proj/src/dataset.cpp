// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#include "hashmoe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hashmoe {

void Dataset::validate() const {
  check_data(!images.empty(), "dataset: no images");
  check_data(images.size() == cameras.size(),
             "dataset: image/camera count mismatch");
  std::set<int> seen;
  for (int i : train_idx) seen.insert(i);
  for (int i : val_idx) {
    check_data(seen.count(i) == 0, "dataset: train/val splits overlap");
  }
  for (size_t i = 0; i < images.size(); ++i) {
    check_data(images[i].width == cameras[i].width &&
                   images[i].height == cameras[i].height,
               "dataset: image size disagrees with camera " +
                   std::to_string(i));
    cameras[i].validate();
  }
  check_data(scene_radius > 0, "dataset: nonpositive scene radius");
}

void compute_scene_bound(Dataset& ds) {
  check_data(!ds.cameras.empty(), "dataset: no cameras for scene bound");
  // Scene center: least-squares focus point of the viewing axes,
  // min_x sum_i ||(I - d_i d_i^T)(x - o_i)||^2. The camera centroid is
  // a poor estimate for inward-facing orbits (it sits above or below
  // the content), which would push the scene off the foreground
  // sphere.
  double A[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  double b[3] = {0, 0, 0};
  Vec3d centroid{0, 0, 0};
  for (const auto& cam : ds.cameras) {
    const Vec3d o = cam.position();
    // Viewing direction is -z of the camera frame (third rotation
    // column, negated).
    const Vec3d d =
        Vec3d{-cam.c2w[2], -cam.c2w[6], -cam.c2w[10]}.normalized();
    const double dd[3] = {d.x, d.y, d.z};
    const double oo[3] = {o.x, o.y, o.z};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const double m = (r == c ? 1.0 : 0.0) - dd[r] * dd[c];
        A[r * 3 + c] += m;
        b[r] += m * oo[c];
      }
    }
    centroid = centroid + o;
  }
  centroid = centroid * (1.0 / double(ds.cameras.size()));
  // Solve A x = b by Cramer's rule; fall back to the camera centroid
  // when the axes are near-parallel.
  const double det = A[0] * (A[4] * A[8] - A[5] * A[7]) -
                     A[1] * (A[3] * A[8] - A[5] * A[6]) +
                     A[2] * (A[3] * A[7] - A[4] * A[6]);
  Vec3d focus = centroid;
  if (std::abs(det) > 1e-9 * double(ds.cameras.size())) {
    const double inv = 1.0 / det;
    focus.x = inv * (b[0] * (A[4] * A[8] - A[5] * A[7]) -
                     A[1] * (b[1] * A[8] - A[5] * b[2]) +
                     A[2] * (b[1] * A[7] - A[4] * b[2]));
    focus.y = inv * (A[0] * (b[1] * A[8] - A[5] * b[2]) -
                     b[0] * (A[3] * A[8] - A[5] * A[6]) +
                     A[2] * (A[3] * b[2] - b[1] * A[6]));
    focus.z = inv * (A[0] * (A[4] * b[2] - b[1] * A[7]) -
                     A[1] * (A[3] * b[2] - b[1] * A[6]) +
                     b[0] * (A[3] * A[7] - A[4] * A[6]));
  }
  double r = 0;
  for (const auto& cam : ds.cameras) {
    r = std::max(r, (cam.position() - focus).norm());
  }
  ds.scene_origin = focus;
  ds.scene_radius = std::max(r, 1e-6) * 1.1;
}

namespace {

json load_json(const fs::path& path) {
  std::ifstream f(path);
  check_data(bool(f), "dataset: cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("dataset: bad JSON in " + path.string() + ": " + e.what());
  }
}

Camera camera_from_matrix(const json& m4, double fx, double fy, double cx,
                          double cy, int w, int h, const fs::path& src) {
  check_data(m4.is_array() && m4.size() >= 3,
             "dataset: bad transform_matrix in " + src.string());
  Camera cam;
  cam.width = w;
  cam.height = h;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  for (int r = 0; r < 3; ++r) {
    const auto& row = m4[r];
    check_data(row.is_array() && row.size() == 4,
               "dataset: bad transform_matrix row in " + src.string());
    for (int c = 0; c < 4; ++c) cam.c2w[r * 4 + c] = row[c].get<double>();
  }
  return cam;
}

fs::path resolve_frame_image(const fs::path& root, std::string file_path) {
  fs::path p = root / file_path;
  if (!p.has_extension()) p += ".png";
  check_data(fs::exists(p), "dataset: missing image file " + p.string());
  return p;
}

// Appends the frames of one transforms file; returns the new indices.
std::vector<int> load_transforms_file(const fs::path& root,
                                      const fs::path& tfile, Dataset& ds) {
  const json j = load_json(tfile);
  check_data(j.contains("frames") && j["frames"].is_array(),
             "dataset: no frames array in " + tfile.string());
  std::vector<int> idx;
  for (const auto& frame : j["frames"]) {
    check_data(frame.contains("file_path") &&
                   frame.contains("transform_matrix"),
               "dataset: malformed frame in " + tfile.string());
    const fs::path img_path =
        resolve_frame_image(root, frame["file_path"].get<std::string>());
    Image8 img = read_png(img_path.string());
    double fx, fy, cx, cy;
    if (j.contains("fl_x")) {
      fx = j["fl_x"].get<double>();
      fy = j.value("fl_y", fx);
      cx = j.value("cx", img.width / 2.0);
      cy = j.value("cy", img.height / 2.0);
    } else {
      check_data(j.contains("camera_angle_x"),
                 "dataset: no intrinsics in " + tfile.string());
      const double ax = j["camera_angle_x"].get<double>();
      fx = 0.5 * img.width / std::tan(0.5 * ax);
      fy = fx;
      cx = img.width / 2.0;
      cy = img.height / 2.0;
    }
    Camera cam = camera_from_matrix(frame["transform_matrix"], fx, fy, cx, cy,
                                    img.width, img.height, tfile);
    idx.push_back(int(ds.images.size()));
    ds.images.push_back(std::move(img));
    ds.cameras.push_back(cam);
  }
  return idx;
}

Dataset load_transforms_json(const fs::path& root) {
  Dataset ds;
  const fs::path train_file = root / "transforms.json";
  check_data(fs::exists(train_file),
             "dataset: missing " + train_file.string());
  ds.train_idx = load_transforms_file(root, train_file, ds);
  const fs::path val_file = root / "transforms_val.json";
  if (fs::exists(val_file)) {
    ds.val_idx = load_transforms_file(root, val_file, ds);
  } else {
    // Hold out every 8th frame.
    std::vector<int> train;
    for (size_t i = 0; i < ds.train_idx.size(); ++i) {
      (i % 8 == 7 ? ds.val_idx : train).push_back(ds.train_idx[i]);
    }
    ds.train_idx = train;
  }
  compute_scene_bound(ds);
  ds.validate();
  return ds;
}

std::vector<int> load_meganerf_split(const fs::path& split_dir, Dataset& ds) {
  const fs::path meta_dir = split_dir / "metadata";
  const fs::path rgb_dir = split_dir / "rgbs";
  check_data(fs::is_directory(meta_dir),
             "dataset: missing directory " + meta_dir.string());
  check_data(fs::is_directory(rgb_dir),
             "dataset: missing directory " + rgb_dir.string());
  std::vector<fs::path> metas;
  for (const auto& e : fs::directory_iterator(meta_dir)) {
    if (e.path().extension() == ".json") metas.push_back(e.path());
  }
  std::sort(metas.begin(), metas.end());
  check_data(!metas.empty(), "dataset: no metadata in " + meta_dir.string());
  std::vector<int> idx;
  for (const auto& meta : metas) {
    const json j = load_json(meta);
    check_data(j.contains("W") && j.contains("H") && j.contains("intrinsics") &&
                   j.contains("c2w"),
               "dataset: malformed metadata " + meta.string());
    const auto& intr = j["intrinsics"];
    const auto& c2w = j["c2w"];
    check_data(intr.is_array() && intr.size() == 4,
               "dataset: intrinsics must be [fx,fy,cx,cy] in " + meta.string());
    check_data(c2w.is_array() && c2w.size() == 12,
               "dataset: c2w must be 12 row-major values in " + meta.string());
    const fs::path img_path = rgb_dir / (meta.stem().string() + ".png");
    check_data(fs::exists(img_path),
               "dataset: missing image file " + img_path.string());
    Image8 img = read_png(img_path.string());
    Camera cam;
    cam.width = j["W"].get<int>();
    cam.height = j["H"].get<int>();
    cam.fx = intr[0].get<double>();
    cam.fy = intr[1].get<double>();
    cam.cx = intr[2].get<double>();
    cam.cy = intr[3].get<double>();
    for (int i = 0; i < 12; ++i) cam.c2w[i] = c2w[i].get<double>();
    idx.push_back(int(ds.images.size()));
    ds.images.push_back(std::move(img));
    ds.cameras.push_back(cam);
  }
  return idx;
}

Dataset load_meganerf(const fs::path& root) {
  Dataset ds;
  ds.train_idx = load_meganerf_split(root / "train", ds);
  if (fs::is_directory(root / "val")) {
    ds.val_idx = load_meganerf_split(root / "val", ds);
  }
  compute_scene_bound(ds);
  ds.validate();
  return ds;
}

}  // namespace

Dataset load_dataset(const std::string& path, DatasetFormat format) {
  const fs::path root(path);
  check_data(fs::exists(root), "dataset: path does not exist: " + path);
  if (format == DatasetFormat::kAuto) {
    if (fs::exists(root / "transforms.json")) {
      format = DatasetFormat::kTransformsJson;
    } else if (fs::is_directory(root / "train")) {
      format = DatasetFormat::kMegaNerfLayout;
    } else {
      throw DataError("dataset: cannot detect format under " + path);
    }
  }
  return format == DatasetFormat::kTransformsJson ? load_transforms_json(root)
                                                  : load_meganerf(root);
}

void save_transforms_dataset(const Dataset& ds, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  auto dump_split = [&](const std::vector<int>& idx, const fs::path& tfile) {
    json j;
    j["fl_x"] = ds.cameras.empty() ? 0.0 : ds.cameras[0].fx;
    j["fl_y"] = ds.cameras.empty() ? 0.0 : ds.cameras[0].fy;
    j["cx"] = ds.cameras.empty() ? 0.0 : ds.cameras[0].cx;
    j["cy"] = ds.cameras.empty() ? 0.0 : ds.cameras[0].cy;
    j["frames"] = json::array();
    for (int i : idx) {
      const std::string name = "images/r_" + std::to_string(i) + ".png";
      write_png((root / name).string(), ds.images[size_t(i)]);
      json frame;
      frame["file_path"] = name;
      json m4 = json::array();
      for (int r = 0; r < 3; ++r) {
        json row = json::array();
        for (int c = 0; c < 4; ++c) row.push_back(ds.cameras[size_t(i)].c2w[r * 4 + c]);
        m4.push_back(row);
      }
      m4.push_back(json::array({0.0, 0.0, 0.0, 1.0}));
      frame["transform_matrix"] = m4;
      j["frames"].push_back(frame);
    }
    std::ofstream f(tfile);
    check_data(bool(f), "dataset: cannot write " + tfile.string());
    f << j.dump(2) << "\n";
  };
  dump_split(ds.train_idx, root / "transforms.json");
  dump_split(ds.val_idx, root / "transforms_val.json");
}

}  // namespace hashmoe
