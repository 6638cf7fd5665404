// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "data/dataset.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace gsav::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string view_name(int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d", i);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw std::runtime_error("dataset: cannot write " + p.string());
  os << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("dataset: cannot read " + p.string());
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

json views_json(const AvatarSample& sample, const RenderedViews& rv) {
  json j;
  j["frontal"] = rv.frontal;
  j["face_box"] = {{"x0", rv.face_box.x0}, {"y0", rv.face_box.y0}, {"side", rv.face_box.side}};
  j["pose"] = json::parse(sample.pose.to_json());
  auto& cams = j["cameras"] = json::array();
  for (const auto& cam : sample.cameras) cams.push_back(json::parse(cam.to_json()));
  return j;
}

}  // namespace

void write_dataset(const DatasetConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["seed"] = cfg.seed;
  manifest["view_count"] = cfg.synth.views;
  manifest["resolution"] = cfg.synth.resolution;
  manifest["uv_res"] = cfg.synth.uv_res;
  manifest["face_res"] = cfg.synth.face_res;
  manifest["split"] = cfg.split;
  auto& samples = manifest["samples"] = json::array();

  Rng root(cfg.seed);
  for (int i = 0; i < cfg.samples; ++i) {
    const uint64_t sample_seed = root.child(static_cast<uint64_t>(i)).bits();
    const std::string id = "sample_" + view_name(i);
    const fs::path final_dir = fs::path(dir) / id;
    const fs::path tmp_dir = fs::path(dir) / ("tmp_" + id);
    fs::remove_all(tmp_dir);
    fs::remove_all(final_dir);
    fs::create_directories(tmp_dir / "views");
    fs::create_directories(tmp_dir / "cond");

    const AvatarSample sample = make_avatar(sample_seed, cfg.synth);
    const gauss::UvBasePoints bases =
        gauss::uv_base_points(sample.tpl, cfg.synth.uv_res, cfg.synth.uv_res);

    // The PLY is the source of truth: render from the read-back cloud so a
    // later re-render of the stored file reproduces the PNGs bit-exactly.
    gauss::save_gaussian_ply((tmp_dir / "gt_cloud.ply").string(), sample.gt_cloud);
    const gauss::GaussianCloud cloud =
        gauss::load_gaussian_ply((tmp_dir / "gt_cloud.ply").string());
    const RenderedViews rv = render_views(sample, cloud, bases, cfg.synth);

    sample.tpl.save((tmp_dir / "template.json").string());
    save_png((tmp_dir / "texture.png").string(), sample.texture);
    for (int v = 0; v < cfg.synth.views; ++v) {
      save_png((tmp_dir / "views" / (view_name(v) + ".png")).string(), rv.views[v]);
      save_png((tmp_dir / "cond" / (view_name(v) + "_geom.png")).string(),
               rv.geom_maps[v]);
      save_png((tmp_dir / "cond" / (view_name(v) + "_skel.png")).string(),
               rv.skel_maps[v]);
    }
    save_png((tmp_dir / "face.png").string(), rv.face);
    write_text(tmp_dir / "caption.txt", sample.caption);
    write_text(tmp_dir / "views.json", views_json(sample, rv).dump(2));

    fs::rename(tmp_dir, final_dir);
    samples.push_back({{"id", id}, {"seed", sample_seed}, {"split", cfg.split}});
  }
  write_text(fs::path(dir) / "manifest.json", manifest.dump(2));
}

LoadedDataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.json"))
    throw std::runtime_error("dataset: missing manifest.json under " + dir);
  LoadedDataset out;
  out.root = dir;
  out.manifest = json::parse(read_text(root / "manifest.json"));
  if (out.manifest.value("format_version", -1) != kFormatVersion)
    throw std::runtime_error("dataset: unsupported format_version");
  out.view_count = out.manifest.at("view_count").get<int>();
  out.resolution = out.manifest.at("resolution").get<int>();
  out.uv_res = out.manifest.at("uv_res").get<int>();
  out.face_res = out.manifest.at("face_res").get<int>();

  // Validate the full layout first and report every missing path at once.
  std::vector<std::string> missing;
  for (const auto& js : out.manifest.at("samples")) {
    const fs::path sd = root / js.at("id").get<std::string>();
    std::vector<fs::path> required = {sd / "template.json", sd / "texture.png",
                                      sd / "face.png",      sd / "caption.txt",
                                      sd / "gt_cloud.ply",  sd / "views.json"};
    for (int v = 0; v < out.view_count; ++v) {
      required.push_back(sd / "views" / (view_name(v) + ".png"));
      required.push_back(sd / "cond" / (view_name(v) + "_geom.png"));
      required.push_back(sd / "cond" / (view_name(v) + "_skel.png"));
    }
    for (const auto& p : required)
      if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "dataset: manifest validation failed, missing files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }

  for (const auto& js : out.manifest.at("samples")) {
    LoadedSample s;
    s.id = js.at("id").get<std::string>();
    s.seed = js.at("seed").get<uint64_t>();
    const fs::path sd = root / s.id;
    s.tpl = geom::BodyTemplate::load((sd / "template.json").string());
    s.texture = load_png((sd / "texture.png").string());
    const json vj = json::parse(read_text(sd / "views.json"));
    s.frontal = vj.at("frontal").get<int>();
    s.face_box.x0 = vj.at("face_box").at("x0").get<int>();
    s.face_box.y0 = vj.at("face_box").at("y0").get<int>();
    s.face_box.side = vj.at("face_box").at("side").get<int>();
    s.pose = geom::PoseParams::from_json(vj.at("pose").dump());
    for (const auto& cj : vj.at("cameras"))
      s.cameras.push_back(geom::CameraParams::from_json(cj.dump()));
    for (int v = 0; v < out.view_count; ++v) {
      s.views.push_back(load_png((sd / "views" / (view_name(v) + ".png")).string()));
      s.geom_maps.push_back(
          load_png((sd / "cond" / (view_name(v) + "_geom.png")).string()));
      s.skel_maps.push_back(
          load_png((sd / "cond" / (view_name(v) + "_skel.png")).string()));
    }
    s.face = load_png((sd / "face.png").string());
    s.caption_tokens = diffusion::tokenize(read_text(sd / "caption.txt"));
    s.gt_cloud = gauss::load_gaussian_ply((sd / "gt_cloud.ply").string());
    out.samples.push_back(std::move(s));
  }
  return out;
}

namespace {

Tensor stack_images(const std::vector<Image>& imgs, const std::vector<int>& idx) {
  const int C = imgs[idx[0]].channels(), H = imgs[idx[0]].height(),
            W = imgs[idx[0]].width();
  Tensor out({static_cast<int>(idx.size()), C, H, W});
  const int64_t plane = static_cast<int64_t>(C) * H * W;
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(imgs[idx[i]].t.data(), imgs[idx[i]].t.data() + plane,
              out.data() + i * plane);
  return out;
}

}  // namespace

diffusion::Stage1Batch make_stage1_batch(const LoadedSample& s, int target_views,
                                         Rng& rng) {
  const int V = static_cast<int>(s.views.size());
  // Near-frontal reference so the face stays visible.
  const int offsets[3] = {0, 1, V - 1};
  const int r = (s.frontal + offsets[rng.uniform_int(3)]) % V;
  const int stride = std::max(1, V / target_views);

  std::vector<int> targets;
  for (int k = 0; k < target_views; ++k) targets.push_back((r + k * stride) % V);

  diffusion::Stage1Batch b;
  b.targets = stack_images(s.views, targets);
  b.cond.text = s.caption_tokens;
  b.cond.reference = s.views[r].t.clone();
  b.cond.face = s.face.t.clone();
  b.cond.geometry = stack_images(s.geom_maps, targets);
  b.cond.skeleton = stack_images(s.skel_maps, targets);
  const auto box = geom::face_crop_box(s.tpl, s.pose, s.cameras[r]);
  b.has_face_box = box.has_value();
  if (box) b.ref_face_box = *box;
  return b;
}

recon::ReconBatch make_recon_batch(const LoadedSample& s, int input_views, Rng& rng) {
  const int V = static_cast<int>(s.views.size());
  if (input_views < 1 || input_views > V)
    throw std::runtime_error("make_recon_batch: bad input view count");

  std::vector<int> pool;
  for (int v = 0; v < V; ++v)
    if (v != s.frontal) pool.push_back(v);
  // Fisher-Yates prefix shuffle for the non-frontal picks.
  for (size_t i = 0; i + 1 < pool.size(); ++i) {
    const size_t j = i + rng.uniform_int(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> chosen = {s.frontal};
  for (int k = 0; k + 1 < input_views; ++k) chosen.push_back(pool[k]);

  recon::ReconBatch b;
  for (int idx : chosen) {
    b.views.push_back(s.views[idx].t);
    b.cameras.push_back(s.cameras[idx]);
  }
  b.frontal = 0;  // position of s.frontal within the chosen subset
  b.face = s.face.t;
  b.face_box = s.face_box;
  b.has_face_box = s.face_box.side > 0;
  b.pose = s.pose;
  return b;
}

}  // namespace gsav::data
