// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hashmoe/config_file.hpp"
#include "hashmoe/dataset.hpp"
#include "hashmoe/metrics.hpp"
#include "hashmoe/ply.hpp"
#include "hashmoe/synthetic.hpp"

using namespace hashmoe;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image8 random_image8(int w, int h, uint64_t seed) {
  Image8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(size_t(w) * h * 3);
  Rng rng(seed);
  for (auto& v : img.rgb) v = uint8_t(rng.next_u64() & 0xff);
  return img;
}

ImageF random_imagef(int w, int h, uint64_t seed) {
  Image8 q = random_image8(w, h, seed);
  return to_float(q);
}

// Independent SSIM oracle: direct O(window^2) Gaussian-window pass on
// Rec. 709 luma, clamped borders, written without reusing the library's
// separable blur.
double ssim_oracle(const ImageF& a, const ImageF& b) {
  const int w = a.width, h = a.height;
  std::vector<double> la(size_t(w) * h), lb(size_t(w) * h);
  for (size_t i = 0; i < la.size(); ++i) {
    la[i] = 0.2126 * a.rgb[i * 3] + 0.7152 * a.rgb[i * 3 + 1] +
            0.0722 * a.rgb[i * 3 + 2];
    lb[i] = 0.2126 * b.rgb[i * 3] + 0.7152 * b.rgb[i * 3 + 1] +
            0.0722 * b.rgb[i * 3 + 2];
  }
  double g[11];
  double gs = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int dy = -5; dy <= 5; ++dy) {
        for (int dx = -5; dx <= 5; ++dx) {
          const int yy = std::min(h - 1, std::max(0, y + dy));
          const int xx = std::min(w - 1, std::max(0, x + dx));
          const double wgt = g[dy + 5] * g[dx + 5];
          const double va = la[size_t(yy) * w + xx];
          const double vb = lb[size_t(yy) * w + xx];
          mu_a += wgt * va;
          mu_b += wgt * vb;
          aa += wgt * va * va;
          bb += wgt * vb * vb;
          ab += wgt * va * vb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += (2 * mu_a * mu_b + c1) * (2 * cov + c2) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return total / (double(w) * h);
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("png round-trips 8-bit rgb exactly") {
  const fs::path dir = fresh_dir("hashmoe_png");
  const Image8 img = random_image8(13, 7, 42);
  const std::string path = (dir / "t.png").string();
  write_png(path, img);
  const Image8 back = read_png(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
  CHECK_THROWS_AS(read_png((dir / "absent.png").string()), DataError);
}

TEST_CASE("raw image dump round-trips bitwise") {
  const fs::path dir = fresh_dir("hashmoe_raw");
  const ImageF img = random_imagef(9, 5, 7);
  const std::string path = (dir / "t.raw").string();
  write_raw_image(path, img);
  const ImageF back = read_raw_image(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  REQUIRE(back.rgb.size() == img.rgb.size());
  for (size_t i = 0; i < img.rgb.size(); ++i) CHECK(back.rgb[i] == img.rgb[i]);
}

TEST_CASE("quantize inverts to_float on 8-bit data") {
  const Image8 img = random_image8(16, 16, 3);
  const Image8 back = quantize(to_float(img));
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("transforms dataset loads cameras and splits") {
  const fs::path dir = fresh_dir("hashmoe_tfj");
  fs::create_directories(dir / "images");
  for (int i = 0; i < 2; ++i) {
    write_png((dir / ("images/r_" + std::to_string(i) + ".png")).string(),
              random_image8(8, 6, 100 + i));
  }
  std::ofstream f(dir / "transforms.json");
  f << R"({"camera_angle_x": 0.8,
           "frames": [
             {"file_path": "images/r_0",
              "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,3],[0,0,0,1]]},
             {"file_path": "images/r_1.png",
              "transform_matrix": [[1,0,0,0],[0,0,-1,-3],[0,1,0,0],[0,0,0,1]]}
           ]})";
  f.close();
  const Dataset ds = load_dataset(dir.string(), DatasetFormat::kAuto);
  REQUIRE(ds.count() == 2);
  CHECK(ds.train_idx == std::vector<int>{0, 1});
  CHECK(ds.val_idx.empty());
  CHECK(ds.cameras[0].width == 8);
  CHECK(ds.cameras[0].height == 6);
  CHECK(ds.cameras[0].fx == doctest::Approx(0.5 * 8 / std::tan(0.4)));
  CHECK(ds.cameras[0].cx == doctest::Approx(4.0));
  CHECK(ds.cameras[0].position().z == doctest::Approx(3.0));
  CHECK(ds.cameras[1].position().y == doctest::Approx(-3.0));
  // Both viewing axes pass through the origin, so the focus point is
  // (0,0,0) and each camera is 3 away.
  CHECK(ds.scene_origin.x == doctest::Approx(0.0));
  CHECK(ds.scene_origin.y == doctest::Approx(0.0));
  CHECK(ds.scene_origin.z == doctest::Approx(0.0));
  CHECK(ds.scene_radius == doctest::Approx(1.1 * 3.0));
}

TEST_CASE("missing frame image is reported by name") {
  const fs::path dir = fresh_dir("hashmoe_tfj_bad");
  std::ofstream f(dir / "transforms.json");
  f << R"({"camera_angle_x": 0.8, "frames": [
        {"file_path": "images/gone",
         "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,3],[0,0,0,1]]}]})";
  f.close();
  try {
    load_dataset(dir.string(), DatasetFormat::kTransformsJson);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("images/gone") != std::string::npos);
  }
}

TEST_CASE("plain meganerf-style layout loads and fails loudly") {
  const fs::path dir = fresh_dir("hashmoe_mn");
  for (const char* split : {"train", "val"}) {
    fs::create_directories(dir / split / "rgbs");
    fs::create_directories(dir / split / "metadata");
  }
  auto put_view = [&](const char* split, int i, double fx) {
    char name[16];
    std::snprintf(name, sizeof(name), "%06d", i);
    write_png((dir / split / "rgbs" / (std::string(name) + ".png")).string(),
              random_image8(10, 10, uint64_t(200 + i)));
    std::ofstream m(dir / split / "metadata" / (std::string(name) + ".json"));
    m << R"({"W": 10, "H": 10, "intrinsics": [)" << fx
      << R"(, 12.0, 5.0, 5.0],
            "c2w": [1,0,0,0, 0,1,0,0, 0,0,1,)" << (4.0 + i) << "]}";
  };
  put_view("train", 0, 11.0);
  put_view("train", 1, 11.5);
  put_view("val", 0, 12.5);
  const Dataset ds = load_dataset(dir.string(), DatasetFormat::kAuto);
  REQUIRE(ds.count() == 3);
  CHECK(ds.train_idx == std::vector<int>{0, 1});
  CHECK(ds.val_idx == std::vector<int>{2});
  CHECK(ds.cameras[0].fx == doctest::Approx(11.0));
  CHECK(ds.cameras[1].position().z == doctest::Approx(5.0));
  CHECK(ds.cameras[2].fx == doctest::Approx(12.5));

  fs::remove(dir / "train" / "rgbs" / "000001.png");
  try {
    load_dataset(dir.string(), DatasetFormat::kMegaNerfLayout);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("000001.png") != std::string::npos);
  }
}

TEST_CASE("synthetic dataset export round-trips poses and pixels") {
  SyntheticConfig sc;
  sc.n_views = 9;
  sc.resolution = 12;
  sc.n_samples = 16;
  const Dataset ds = generate_synthetic(sc);
  REQUIRE(ds.count() == 9);
  CHECK(ds.train_idx.size() == 8);
  CHECK(ds.val_idx == std::vector<int>{7});

  const fs::path dir = fresh_dir("hashmoe_synth_rt");
  save_transforms_dataset(ds, dir.string());
  const Dataset back = load_dataset(dir.string(), DatasetFormat::kAuto);
  REQUIRE(back.count() == 9);
  REQUIRE(back.train_idx.size() == ds.train_idx.size());
  REQUIRE(back.val_idx.size() == ds.val_idx.size());
  for (size_t i = 0; i < ds.train_idx.size(); ++i) {
    const Camera& a = ds.cameras[size_t(ds.train_idx[i])];
    const Camera& b = back.cameras[size_t(back.train_idx[i])];
    for (int k = 0; k < 12; ++k) CHECK(std::abs(a.c2w[k] - b.c2w[k]) < 1e-9);
    CHECK(b.fx == doctest::Approx(a.fx));
    CHECK(ds.images[size_t(ds.train_idx[i])].rgb ==
          back.images[size_t(back.train_idx[i])].rgb);
  }
}

TEST_CASE("synthetic generation is deterministic") {
  SyntheticConfig sc;
  sc.n_views = 3;
  sc.resolution = 10;
  sc.n_samples = 12;
  const Dataset a = generate_synthetic(sc);
  const Dataset b = generate_synthetic(sc);
  for (size_t i = 0; i < a.count(); ++i) CHECK(a.images[i].rgb == b.images[i].rgb);
  sc.seed = 17;
  const Dataset c = generate_synthetic(sc);
  bool same = true;
  for (size_t i = 0; i < a.count(); ++i) same = same && a.images[i].rgb == c.images[i].rgb;
  CHECK_FALSE(same);
}

TEST_CASE("empty synthetic field renders pure background") {
  SyntheticConfig sc;
  sc.n_views = 1;
  sc.resolution = 8;
  sc.n_samples = 8;
  sc.empty = true;
  sc.bg_color[0] = 0.25;
  sc.bg_color[1] = 0.5;
  sc.bg_color[2] = 0.75;
  const Camera cam = synthetic_camera(sc, 0);
  const ImageF img = render_synthetic_view(sc, cam);
  for (size_t p = 0; p < img.pixels(); ++p) {
    for (int c = 0; c < 3; ++c) {
      CHECK(img.rgb[p * 3 + c] == doctest::Approx(sc.bg_color[c]).epsilon(1e-6));
    }
  }
}

TEST_CASE("synthetic silhouette stays inside the unit-sphere projection") {
  SyntheticConfig sc;
  sc.n_views = 1;
  sc.resolution = 32;
  sc.n_samples = 32;
  const Camera cam = synthetic_camera(sc, 0);
  const ImageF img = render_synthetic_view(sc, cam);
  auto is_bg = [&](int x, int y) {
    const float* p = &img.rgb[(size_t(y) * img.width + x) * 3];
    return p[0] == 1.0f && p[1] == 1.0f && p[2] == 1.0f;
  };
  CHECK(is_bg(0, 0));
  CHECK(is_bg(31, 0));
  CHECK(is_bg(0, 31));
  CHECK(is_bg(31, 31));
  CHECK_FALSE(is_bg(16, 16));
  // Rays missing the unit sphere must be exactly background.
  int content = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      Vec3d o, d;
      cam.pixel_ray(x, y, &o, &d);
      double te, tx;
      if (!sphere_span(o, d, 1.0, &te, &tx)) {
        CHECK(is_bg(x, y));
      } else {
        ++content;
      }
    }
  }
  CHECK(content > 50);
}

TEST_CASE("synthetic oracle converges under sample refinement") {
  SyntheticConfig sc;
  sc.n_views = 1;
  sc.resolution = 32;
  sc.n_samples = 128;
  const Camera cam = synthetic_camera(sc, 0);
  const ImageF coarse = render_synthetic_view(sc, cam);
  sc.n_samples = 512;
  const ImageF fine = render_synthetic_view(sc, cam);
  CHECK(psnr(coarse, fine) > 50.0);
}

TEST_CASE("psnr closed forms") {
  ImageF a = random_imagef(8, 8, 11);
  ImageF b = a;
  CHECK(psnr(a, b) == doctest::Approx(99.0));
  for (auto& v : b.rgb) v += 0.1f;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));
  ImageF c = random_imagef(4, 4, 11);
  CHECK_THROWS_AS(psnr(a, c), DataError);
}

TEST_CASE("ssim matches an independent direct-window oracle") {
  const ImageF a = random_imagef(16, 12, 21);
  ImageF b = a;
  Rng rng(22);
  for (auto& v : b.rgb) {
    v = std::min(1.0f, std::max(0.0f, v + 0.1f * (float(rng.uniform()) - 0.5f)));
  }
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  const double got = ssim(a, b);
  CHECK(got == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-6));
  CHECK(got == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(got < 1.0);
}

TEST_CASE("ply round-trips points bitwise") {
  const fs::path dir = fresh_dir("hashmoe_ply");
  std::vector<PlyPoint> pts;
  Rng rng(9);
  for (int i = 0; i < 257; ++i) {
    PlyPoint p;
    p.x = float(rng.uniform()) * 2 - 1;
    p.y = float(rng.uniform()) * 2 - 1;
    p.z = float(rng.uniform()) * 2 - 1;
    p.r = uint8_t(rng.next_u64() & 0xff);
    p.g = uint8_t(rng.next_u64() & 0xff);
    p.b = uint8_t(rng.next_u64() & 0xff);
    p.alpha = float(rng.uniform());
    p.expert = int32_t(rng.next_u64() % 8);
    pts.push_back(p);
  }
  const std::string path = (dir / "d.ply").string();
  write_ply(path, pts);
  const auto back = read_ply(path);
  REQUIRE(back.size() == pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    CHECK(back[i].x == pts[i].x);
    CHECK(back[i].y == pts[i].y);
    CHECK(back[i].z == pts[i].z);
    CHECK(back[i].r == pts[i].r);
    CHECK(back[i].alpha == pts[i].alpha);
    CHECK(back[i].expert == pts[i].expert);
  }
  // A header is present and names the expert property.
  const auto bytes = slurp(dir / "d.ply");
  const std::string head(bytes.begin(),
                         bytes.begin() + std::min<size_t>(bytes.size(), 512));
  CHECK(head.find("expert_id") != std::string::npos);
}

TEST_CASE("config files parse with comments and overrides") {
  const ConfigMap cfg = parse_config(
      "# header\n"
      "steps = 100\n"
      "lr = 5e-4  # inline\n"
      "name = run_a\n"
      "flag = true\n"
      "steps = 250\n");
  CHECK(cfg.get_int("steps", 0) == 250);
  CHECK(cfg.get_double("lr", 0) == doctest::Approx(5e-4));
  CHECK(cfg.get_str("name", "") == "run_a");
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_int("absent", 7) == 7);
  CHECK_THROWS_AS(cfg.get_int("name", 0), ConfigError);
  CHECK_THROWS_AS(parse_config("novalue\n"), ConfigError);
  try {
    parse_config("a = 1\nbroken line\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("config files round-trip through save and load") {
  const fs::path dir = fresh_dir("hashmoe_cfg");
  ConfigMap cfg;
  cfg.set("experts", "8");
  cfg.set("dispatch", "fused");
  cfg.set("lr", "0.0005");
  const std::string path = (dir / "run.cfg").string();
  save_config(cfg, path);
  const ConfigMap back = load_config(path);
  CHECK(back.entries() == cfg.entries());
}

TEST_CASE("peak rss is reported and plausible") {
  const double mb = peak_rss_mb();
  CHECK(mb > 1.0);
  CHECK(mb < 5000.0);
}
