// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train, render, eval, export-decomposition,
// gen-synthetic. Settings come from a flat key=value config file with
// CLI flags layered on top; `train` writes the resolved config next to
// its checkpoint so the other commands can rebuild the same model.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hashmoe/config_file.hpp"
#include "hashmoe/dataset.hpp"
#include "hashmoe/metrics.hpp"
#include "hashmoe/ply.hpp"
#include "hashmoe/synthetic.hpp"
#include "hashmoe/trainer.hpp"

using namespace hashmoe;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing

DispatchStrategy parse_dispatch(const std::string& s) {
  if (s == "uniform") return DispatchStrategy::kUniform;
  if (s == "full") return DispatchStrategy::kFull;
  if (s == "fused") return DispatchStrategy::kFusedHash;
  throw ConfigError("unknown dispatch strategy: " + s);
}

std::string dispatch_name(DispatchStrategy d) {
  switch (d) {
    case DispatchStrategy::kUniform: return "uniform";
    case DispatchStrategy::kFull: return "full";
    default: return "fused";
  }
}

ModelConfig model_cfg_from(const ConfigMap& c) {
  ModelConfig m;
  m.n_experts = int(c.get_int("experts", m.n_experts));
  m.top_k = int(c.get_int("topk", m.top_k));
  m.capacity_factor = float(c.get_double("capacity", m.capacity_factor));
  m.gate_mode = c.get_str("gate", "hash") == "mlp" ? GateMode::kMlpGate
                                                   : GateMode::kHashGate;
  m.balance_weight = float(c.get_double("lambda", m.balance_weight));
  m.batch_prioritized = c.get_bool("batch_prioritized", m.batch_prioritized);
  m.train_dispatch = parse_dispatch(c.get_str("dispatch", "fused"));
  m.heterogeneous = c.get_bool("heterogeneous", m.heterogeneous);
  m.levels = int(c.get_int("levels", m.levels));
  m.feats = int(c.get_int("feats", m.feats));
  m.log2_table = int(c.get_int("log2_table", m.log2_table));
  m.base_min = int(c.get_int("base_min", m.base_min));
  m.base_max = int(c.get_int("base_max", m.base_max));
  m.desired_min = int(c.get_int("desired_min", m.desired_min));
  m.desired_max = int(c.get_int("desired_max", m.desired_max));
  m.gate_levels = int(c.get_int("gate_levels", m.gate_levels));
  m.gate_log2_table = int(c.get_int("gate_log2_table", m.gate_log2_table));
  m.gate_desired = int(c.get_int("gate_desired", m.gate_desired));
  m.gate_hidden = int(c.get_int("gate_hidden", m.gate_hidden));
  m.gate_pe_freqs = int(c.get_int("gate_pe_freqs", m.gate_pe_freqs));
  m.gate_mlp_width = int(c.get_int("gate_mlp_width", m.gate_mlp_width));
  m.head_hidden = int(c.get_int("head_hidden", m.head_hidden));
  m.geo_dim = int(c.get_int("geo_dim", m.geo_dim));
  m.sh_degree = int(c.get_int("sh_degree", m.sh_degree));
  m.ae_dim = int(c.get_int("ae_dim", m.ae_dim));
  m.n_images = int(c.get_int("n_images", m.n_images));
  m.use_background = c.get_bool("use_background", m.use_background);
  m.bg_levels = int(c.get_int("bg_levels", m.bg_levels));
  m.bg_log2_table = int(c.get_int("bg_log2_table", m.bg_log2_table));
  m.bg_desired = int(c.get_int("bg_desired", m.bg_desired));
  m.seed = uint64_t(c.get_int("seed", int64_t(m.seed)));
  return m;
}

TrainConfig train_cfg_from(const ConfigMap& c) {
  TrainConfig t;
  t.lr0 = float(c.get_double("lr", t.lr0));
  t.lr_final = float(c.get_double("lr_final", double(t.lr0) / 10.0));
  t.steps = int(c.get_int("steps", t.steps));
  t.rays_per_batch = int(c.get_int("rays", t.rays_per_batch));
  t.lambda = float(c.get_double("lambda", t.lambda));
  t.threads = int(c.get_int("threads", t.threads));
  t.seed = uint64_t(c.get_int("seed", int64_t(t.seed)));
  return t;
}

RenderConfig<float> render_cfg_from(const ConfigMap& c) {
  RenderConfig<float> r;
  r.n_coarse = int(c.get_int("n_coarse", r.n_coarse));
  r.n_fine = int(c.get_int("n_fine", r.n_fine));
  r.n_bg = int(c.get_int("n_bg", r.n_bg));
  r.near = float(c.get_double("near", r.near));
  r.far = float(c.get_double("far", r.far));
  r.jitter = c.get_bool("jitter", r.jitter);
  r.bg_color[0] = float(c.get_double("bg_r", r.bg_color[0]));
  r.bg_color[1] = float(c.get_double("bg_g", r.bg_color[1]));
  r.bg_color[2] = float(c.get_double("bg_b", r.bg_color[2]));
  r.dispatch = parse_dispatch(c.get_str("dispatch", "fused"));
  return r;
}

void dump_run_config(const ConfigMap& base, const ModelConfig& m,
                     const TrainConfig& t, const std::string& scene,
                     const Vec3d& origin, double scale,
                     const std::string& path) {
  ConfigMap out = base;
  out.set("experts", std::to_string(m.n_experts));
  out.set("topk", std::to_string(m.top_k));
  out.set("capacity", std::to_string(m.capacity_factor));
  out.set("gate", m.gate_mode == GateMode::kMlpGate ? "mlp" : "hash");
  out.set("dispatch", dispatch_name(m.train_dispatch));
  out.set("heterogeneous", m.heterogeneous ? "true" : "false");
  out.set("n_images", std::to_string(m.n_images));
  out.set("seed", std::to_string(m.seed));
  out.set("steps", std::to_string(t.steps));
  out.set("scene", scene);
  out.set("scene_origin_x", std::to_string(origin.x));
  out.set("scene_origin_y", std::to_string(origin.y));
  out.set("scene_origin_z", std::to_string(origin.z));
  out.set("scene_scale", std::to_string(scale));
  save_config(out, path);
}

// ---------------------------------------------------------------------------
// Scene handling

/// Rigid normalization into the packed domain's frame: camera centers
// end up on a radius-3 shell so scene content sits inside the unit
// ball (matching the synthetic orbit geometry).
void normalize_poses(Dataset& ds, const Vec3d& origin, double scale) {
  for (auto& cam : ds.cameras) {
    cam.c2w[3] = (cam.c2w[3] - origin.x) * scale;
    cam.c2w[7] = (cam.c2w[7] - origin.y) * scale;
    cam.c2w[11] = (cam.c2w[11] - origin.z) * scale;
  }
}

struct LoadedScene {
  Dataset ds;
  Vec3d origin{0, 0, 0};
  double scale = 1.0;
};

LoadedScene load_scene(const std::string& path, const ConfigMap& cfg) {
  LoadedScene s;
  s.ds = load_dataset(path, DatasetFormat::kAuto);
  if (cfg.has("scene_scale")) {
    s.scale = cfg.get_double("scene_scale", 1.0);
    s.origin = {cfg.get_double("scene_origin_x", 0.0),
                cfg.get_double("scene_origin_y", 0.0),
                cfg.get_double("scene_origin_z", 0.0)};
  } else {
    s.origin = s.ds.scene_origin;
    s.scale = 3.0 / s.ds.scene_radius;
  }
  normalize_poses(s.ds, s.origin, s.scale);
  return s;
}

// Flat view of the training pixels for the sampler.
struct TrainPixels {
  std::vector<ImageF> images;     // parallel to train_idx
  std::vector<uint64_t> offsets;  // cumulative pixel counts
  std::vector<int> image_of;      // dataset index per entry

  uint64_t total() const { return offsets.back(); }
};

TrainPixels flatten_train(const Dataset& ds) {
  TrainPixels tp;
  tp.offsets.push_back(0);
  for (int idx : ds.train_idx) {
    tp.images.push_back(to_float(ds.images[size_t(idx)]));
    tp.image_of.push_back(idx);
    tp.offsets.push_back(tp.offsets.back() +
                         ds.images[size_t(idx)].pixels());
  }
  return tp;
}

void gather_rays(const Dataset& ds, const TrainPixels& tp,
                 const uint64_t* ids, size_t n, RayBatch<float>& rays,
                 std::vector<float>& gt) {
  rays.origins.clear();
  rays.dirs.clear();
  rays.image_ids.clear();
  gt.resize(n * 3);
  for (size_t i = 0; i < n; ++i) {
    size_t im = 0;
    while (ids[i] >= tp.offsets[im + 1]) ++im;
    const uint32_t pix = uint32_t(ids[i] - tp.offsets[im]);
    const int ds_idx = tp.image_of[im];
    sample_rays(ds.cameras[size_t(ds_idx)], &pix, 1, uint32_t(ds_idx), rays);
    for (int c = 0; c < 3; ++c) gt[i * 3 + c] = tp.images[im].rgb[pix * 3 + c];
  }
}

// ---------------------------------------------------------------------------
// Full-image rendering (shared by render / eval / export)

ImageF render_image(const Model<float>& m, const Camera& cam,
                    RenderConfig<float> rc, uint32_t image_id,
                    size_t chunk = 4096) {
  rc.jitter = false;
  ImageF img;
  img.width = cam.width;
  img.height = cam.height;
  img.rgb.assign(size_t(cam.width) * cam.height * 3, 0.0f);
  Rng rng(0);
  RenderPass<float> pass;
  const size_t total = img.pixels();
  std::vector<uint32_t> pixels(chunk);
  for (size_t b = 0; b < total; b += chunk) {
    const size_t n = std::min(chunk, total - b);
    for (size_t i = 0; i < n; ++i) pixels[i] = uint32_t(b + i);
    RayBatch<float> rays;
    sample_rays(cam, pixels.data(), n, image_id, rays);
    render_forward(m, rays, rc, rng, pass);
    for (size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        img.rgb[(b + i) * 3 + c] =
            std::min(1.0f, std::max(0.0f, pass.result.color[i * 3 + c]));
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Checkpoint + run-config reload

struct RunState {
  ConfigMap cfg;
  Trainer<float> trainer;
  SamplerState sampler;
};

RunState reload_run(const std::string& ckpt, const std::string& cfg_path) {
  RunState rs;
  const std::string resolved =
      cfg_path.empty() ? (fs::path(ckpt).parent_path() / "run.cfg").string()
                       : cfg_path;
  rs.cfg = load_config(resolved);
  const ModelConfig mc = model_cfg_from(rs.cfg);
  const TrainConfig tc = train_cfg_from(rs.cfg);
  const RenderConfig<float> rc = render_cfg_from(rs.cfg);
  rs.trainer = Trainer<float>::create(mc, tc, rc);
  rs.sampler = load_checkpoint(rs.trainer, ckpt);
  return rs;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(const std::string& config_path, const std::string& scene,
              const std::string& out_dir, const std::string& resume,
              const std::vector<std::pair<std::string, std::string>>& over) {
  ConfigMap cfg =
      config_path.empty() ? ConfigMap() : load_config(config_path);
  for (const auto& [k, v] : over) cfg.set(k, v);
  check_config(!scene.empty(), "train: --scene is required");
  fs::create_directories(out_dir);

  LoadedScene sc = load_scene(scene, cfg);
  ModelConfig mc = model_cfg_from(cfg);
  mc.n_images = int(sc.ds.count());
  TrainConfig tc = train_cfg_from(cfg);
  const RenderConfig<float> rc = render_cfg_from(cfg);

  Trainer<float> t = Trainer<float>::create(mc, tc, rc);
  const TrainPixels tp = flatten_train(sc.ds);
  PixelSampler sampler(tp.total(), tc.seed ^ 0x517cc1b727220a95ull);
  if (!resume.empty()) {
    const SamplerState ss = load_checkpoint(t, resume);
    check_data(ss.total == tp.total(),
               "resume: training pixel count changed");
    sampler = PixelSampler::restore(ss.total, ss.epoch_rng, ss.epoch,
                                    ss.cursor);
  }

  dump_run_config(cfg, mc, tc, scene, sc.origin, sc.scale,
                  (fs::path(out_dir) / "run.cfg").string());
  std::ofstream metrics_out(fs::path(out_dir) / "metrics.ndjson",
                            resume.empty() ? std::ios::trunc : std::ios::app);

  // Fixed probe set for the routing changing rate: points spread over
  // the packed foreground cube.
  const int log_every = int(cfg.get_int("log_every", 100));
  std::vector<Vec3<float>> probe(2048);
  Rng prng(97);
  for (auto& p : probe) {
    p = {float(prng.uniform(0.26, 0.74)), float(prng.uniform(0.26, 0.74)),
         float(prng.uniform(0.26, 0.74))};
  }
  std::vector<int> prev_assign;

  RayBatch<float> rays;
  std::vector<float> gt;
  std::vector<uint64_t> ids(size_t(tc.rays_per_batch));
  while (t.opt.step < int64_t(tc.steps)) {
    sampler.next(ids.size(), ids.data());
    gather_rays(sc.ds, tp, ids.data(), ids.size(), rays, gt);
    StepMetrics m = t.train_step(rays, gt.data());
    if (m.step % log_every == 0 || m.step == int64_t(tc.steps)) {
      const std::vector<int> assign = probe_assignments(t.model, probe);
      if (!prev_assign.empty()) {
        m.changing_rate = changing_rate(prev_assign, assign);
      }
      prev_assign = assign;
      const std::string line = m.to_ndjson();
      std::cout << line << "\n";
      metrics_out << line << "\n";
      metrics_out.flush();
    }
  }

  SamplerState ss;
  ss.total = sampler.total();
  ss.epoch = sampler.epoch();
  ss.cursor = sampler.cursor();
  ss.epoch_rng = sampler.epoch_rng_state();
  save_checkpoint(t, ss, (fs::path(out_dir) / "checkpoint.bin").string());
  return kExitOk;
}

int cmd_render(const std::string& ckpt, const std::string& cfg_path,
               const std::string& scene, int camera_index, int orbit,
               const std::string& out_dir) {
  RunState rs = reload_run(ckpt, cfg_path);
  fs::create_directories(out_dir);
  std::vector<Camera> cams;
  std::vector<uint32_t> ids;
  if (orbit > 0) {
    SyntheticConfig sc;
    sc.n_views = orbit;
    sc.resolution = int(rs.cfg.get_int("orbit_resolution", 128));
    for (int v = 0; v < orbit; ++v) cams.push_back(synthetic_camera(sc, v));
    ids.assign(cams.size(), 0);
  } else {
    const std::string spath =
        scene.empty() ? rs.cfg.get_str("scene", "") : scene;
    check_config(!spath.empty(), "render: need --scene or --orbit");
    LoadedScene sc = load_scene(spath, rs.cfg);
    check_data(camera_index >= 0 && size_t(camera_index) < sc.ds.count(),
               "render: camera index out of range");
    cams.push_back(sc.ds.cameras[size_t(camera_index)]);
    ids.push_back(uint32_t(camera_index));
  }
  for (size_t i = 0; i < cams.size(); ++i) {
    const ImageF img =
        render_image(rs.trainer.model, cams[i], rs.trainer.rc, ids[i]);
    const std::string stem =
        (fs::path(out_dir) / ("view_" + std::to_string(i))).string();
    write_png(stem + ".png", quantize(img));
    write_raw_image(stem + ".raw", img);
    std::cout << "wrote " << stem << ".png\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& cfg_path,
             const std::string& scene, const std::string& split,
             const std::string& out_dir) {
  RunState rs = reload_run(ckpt, cfg_path);
  const std::string spath = scene.empty() ? rs.cfg.get_str("scene", "") : scene;
  check_config(!spath.empty(), "eval: need a scene (flag or run config)");
  LoadedScene sc = load_scene(spath, rs.cfg);
  const std::vector<int>& idx =
      split == "train" ? sc.ds.train_idx : sc.ds.val_idx;
  check_data(!idx.empty(), "eval: split '" + split + "' is empty");
  if (!out_dir.empty()) fs::create_directories(out_dir);

  MetricsReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  // Held-out views have no trained appearance row; borrow the first
  // training view's embedding.
  const uint32_t fallback_id =
      sc.ds.train_idx.empty() ? 0 : uint32_t(sc.ds.train_idx.front());
  std::vector<bool> is_train(sc.ds.count(), false);
  for (int i : sc.ds.train_idx) is_train[size_t(i)] = true;
  for (int i : idx) {
    const uint32_t ae_id = is_train[size_t(i)] ? uint32_t(i) : fallback_id;
    const ImageF pred = render_image(rs.trainer.model, sc.ds.cameras[size_t(i)],
                                     rs.trainer.rc, ae_id);
    const ImageF gt = to_float(sc.ds.images[size_t(i)]);
    rep.per_image_psnr.push_back(psnr(pred, gt));
    rep.per_image_ssim.push_back(ssim(pred, gt));
    if (!out_dir.empty()) {
      write_png((fs::path(out_dir) / ("eval_" + std::to_string(i) + ".png"))
                    .string(),
                quantize(pred));
    }
  }
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  rep.peak_rss_mb = peak_rss_mb();
  for (size_t i = 0; i < rep.per_image_psnr.size(); ++i) {
    rep.mean_psnr += rep.per_image_psnr[i];
    rep.mean_ssim += rep.per_image_ssim[i];
  }
  rep.mean_psnr /= double(rep.per_image_psnr.size());
  rep.mean_ssim /= double(rep.per_image_ssim.size());

  nlohmann::json j;
  j["split"] = split;
  j["psnr"] = rep.per_image_psnr;
  j["ssim"] = rep.per_image_ssim;
  j["mean_psnr"] = rep.mean_psnr;
  j["mean_ssim"] = rep.mean_ssim;
  j["runtime_seconds"] = rep.runtime_seconds;
  j["peak_rss_mb"] = rep.peak_rss_mb;
  std::cout << j.dump(2) << "\n";
  if (!out_dir.empty()) {
    std::ofstream f(fs::path(out_dir) / "metrics.json");
    f << j.dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_export(const std::string& ckpt, const std::string& cfg_path,
               const std::string& scene, int camera_index, double min_weight,
               int stride, const std::string& out_path) {
  RunState rs = reload_run(ckpt, cfg_path);
  const std::string spath = scene.empty() ? rs.cfg.get_str("scene", "") : scene;
  check_config(!spath.empty(), "export: need a scene (flag or run config)");
  LoadedScene sc = load_scene(spath, rs.cfg);
  check_data(camera_index >= 0 && size_t(camera_index) < sc.ds.count(),
             "export: camera index out of range");
  const Camera& cam = sc.ds.cameras[size_t(camera_index)];

  RenderConfig<float> rc = rs.trainer.rc;
  rc.jitter = false;
  Rng rng(0);
  std::vector<PlyPoint> points;
  RenderPass<float> pass;
  const size_t total = size_t(cam.width) * cam.height;
  std::vector<uint32_t> pixels;
  for (size_t p = 0; p < total; p += size_t(stride)) pixels.push_back(uint32_t(p));
  const size_t chunk = 2048;
  for (size_t b = 0; b < pixels.size(); b += chunk) {
    const size_t n = std::min(chunk, pixels.size() - b);
    RayBatch<float> rays;
    sample_rays(cam, pixels.data() + b, n, uint32_t(camera_index), rays);
    render_forward(rs.trainer.model, rays, rc, rng, pass);
    for (size_t r = 0; r < n; ++r) {
      for (uint32_t s = pass.offsets[r]; s < pass.offsets[r + 1]; ++s) {
        if (pass.is_bg[s] || pass.result.weights[s] < float(min_weight)) {
          continue;
        }
        const Vec3<float> p =
            rays.origins[r] + rays.dirs[r] * pass.ts[s];
        PlyPoint pt;
        pt.x = p.x;
        pt.y = p.y;
        pt.z = p.z;
        auto q = [](float v) {
          return uint8_t(std::min(255.0f, std::max(0.0f, v * 255.0f + 0.5f)));
        };
        pt.r = q(pass.rgb[s * 3]);
        pt.g = q(pass.rgb[s * 3 + 1]);
        pt.b = q(pass.rgb[s * 3 + 2]);
        pt.alpha = pass.result.weights[s];
        const uint32_t slot = pass.slot[s];
        pt.expert = pass.fg.dec.chosen[size_t(slot) * pass.fg.dec.k];
        points.push_back(pt);
      }
    }
  }
  write_ply(out_path, points);
  std::cout << "wrote " << points.size() << " points to " << out_path << "\n";
  return kExitOk;
}

int cmd_gen_synthetic(int views, int resolution, int samples, uint64_t seed,
                      const std::string& out_dir) {
  SyntheticConfig sc;
  sc.n_views = views;
  sc.resolution = resolution;
  sc.n_samples = samples;
  sc.seed = seed;
  const Dataset ds = generate_synthetic(sc);
  save_transforms_dataset(ds, out_dir);
  std::cout << "wrote " << ds.train_idx.size() << " train / "
            << ds.val_idx.size() << " val views to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hashmoe: mixture-of-hash-experts radiance fields"};
  app.require_subcommand(1);

  std::string config_path, scene, out, checkpoint, resume, split = "val";
  int camera_index = 0, orbit = 0, stride = 1;
  double min_weight = 1e-3;
  int views = 32, resolution = 128, samples = 256;
  uint64_t seed = 0;

  // Flags that simply override config keys share this plumbing.
  std::vector<std::pair<std::string, std::string>> overrides;
  auto add_override = [&](CLI::App* cmd, const std::string& flag,
                          const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag,
        [&overrides, key](const std::string& v) {
          overrides.emplace_back(key, v);
        },
        help);
  };

  CLI::App* train = app.add_subcommand("train", "optimize a model on a scene");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--scene", scene, "dataset directory")->required();
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");
  add_override(train, "--experts", "experts", "number of experts");
  add_override(train, "--topk", "topk", "routed experts per point (1 or 2)");
  add_override(train, "--capacity", "capacity", "capacity factor");
  add_override(train, "--dispatch", "dispatch", "uniform | full | fused");
  add_override(train, "--gate", "gate", "hash | mlp");
  add_override(train, "--heterogeneous", "heterogeneous",
               "heterogeneous expert pyramid (true/false)");
  add_override(train, "--steps", "steps", "optimization steps");
  add_override(train, "--rays", "rays", "rays per batch");
  add_override(train, "--lambda", "lambda", "balance loss weight");
  add_override(train, "--lr", "lr", "initial learning rate");
  add_override(train, "--threads", "threads", "worker shards");
  add_override(train, "--seed", "seed", "model and sampler seed");

  CLI::App* render = app.add_subcommand("render", "render views");
  render->add_option("--checkpoint", checkpoint)->required();
  render->add_option("--run-config", config_path,
                     "run.cfg (default: next to checkpoint)");
  render->add_option("--scene", scene, "dataset for camera poses");
  render->add_option("--camera-index", camera_index);
  render->add_option("--orbit", orbit, "render N synthetic orbit views");
  render->add_option("--out", out)->required();

  CLI::App* eval = app.add_subcommand("eval", "metrics on a dataset split");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--run-config", config_path);
  eval->add_option("--scene", scene);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--out", out, "optional directory for rendered views");

  CLI::App* expo = app.add_subcommand(
      "export-decomposition", "point cloud with per-sample expert ids");
  expo->add_option("--checkpoint", checkpoint)->required();
  expo->add_option("--run-config", config_path);
  expo->add_option("--scene", scene);
  expo->add_option("--camera-index", camera_index);
  expo->add_option("--min-weight", min_weight, "sample weight threshold");
  expo->add_option("--stride", stride)->check(CLI::PositiveNumber);
  expo->add_option("--out", out, "output .ply path")->required();

  CLI::App* gen = app.add_subcommand("gen-synthetic", "procedural dataset");
  gen->add_option("--views", views);
  gen->add_option("--resolution", resolution);
  gen->add_option("--samples", samples, "oracle samples per ray");
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) {
      return cmd_train(config_path, scene, out, resume, overrides);
    }
    if (render->parsed()) {
      return cmd_render(checkpoint, config_path, scene, camera_index, orbit,
                        out);
    }
    if (eval->parsed()) {
      return cmd_eval(checkpoint, config_path, scene, split, out);
    }
    if (expo->parsed()) {
      return cmd_export(checkpoint, config_path, scene, camera_index,
                        min_weight, stride, out);
    }
    return cmd_gen_synthetic(views, resolution, samples, seed, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  }
}
