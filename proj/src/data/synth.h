// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gauss/ply_io.h"
#include "geom/cond_maps.h"
#include "render/renderer.h"

namespace gsav::data {

struct SynthConfig {
  int views = 12;
  int resolution = 64;
  int uv_res = 64;
  int face_res = 32;
  double camera_radius = 2.6;
  double camera_height = 0.15;  // above the template centroid
  double focal = 72.0;          // pixels at `resolution`
  double pose_amplitude = 0.18; // radians of per-joint jitter
};

struct PaletteColor {
  const char* word;
  float r, g, b;
};
const std::vector<PaletteColor>& clothing_palette();
const std::vector<PaletteColor>& skin_palette();

// One procedural avatar: template, part-painted texture, jittered pose,
// camera ring, templated caption, and the ground-truth prior cloud carrying
// the texture colors. Deterministic per (seed, config).
struct AvatarSample {
  uint64_t seed = 0;
  geom::BodyTemplate tpl;
  Image texture;  // [3, uv_res, uv_res]
  geom::PoseParams pose;
  std::vector<geom::CameraParams> cameras;
  std::string caption;
  std::vector<int> caption_tokens;
  gauss::GaussianCloud gt_cloud;  // canonical pose
  int torso_front_color = 0;      // palette buckets, for consistency checks
  int torso_back_color = 0;
  int legs_color = 0;
  int skin_color = 0;
};

AvatarSample make_avatar(uint64_t seed, const SynthConfig& cfg = {});

// Ring cameras shared by the synthesizer and readers.
std::vector<geom::CameraParams> ring_cameras(const geom::BodyTemplate& tpl,
                                             const SynthConfig& cfg);

// All renders for one sample. `cloud` is the cloud to rasterize (callers
// that need file-exact consistency pass the PLY-roundtripped one).
struct RenderedViews {
  std::vector<Image> views;
  std::vector<Image> geom_maps;  // [3,H,W]
  std::vector<Image> skel_maps;  // [1,H,W]
  Image face;
  geom::FaceBox face_box;  // on the frontal view
  int frontal = 0;
};
RenderedViews render_views(const AvatarSample& sample, const gauss::GaussianCloud& cloud,
                           const gauss::UvBasePoints& bases, const SynthConfig& cfg);

}  // namespace gsav::data
