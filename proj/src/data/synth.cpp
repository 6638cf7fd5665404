// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "data/synth.h"

#include <cmath>
#include <stdexcept>

#include "diffusion/encoders.h"

namespace gsav::data {

using geom::Vec3;

const std::vector<PaletteColor>& clothing_palette() {
  static const std::vector<PaletteColor> p = {
      {"red", 0.82f, 0.12f, 0.12f},   {"green", 0.10f, 0.62f, 0.22f},
      {"blue", 0.12f, 0.25f, 0.80f},  {"yellow", 0.90f, 0.82f, 0.10f},
      {"purple", 0.55f, 0.15f, 0.70f}, {"orange", 0.92f, 0.50f, 0.08f},
      {"cyan", 0.10f, 0.70f, 0.75f},  {"brown", 0.48f, 0.30f, 0.15f}};
  return p;
}

const std::vector<PaletteColor>& skin_palette() {
  static const std::vector<PaletteColor> p = {{"pale", 0.93f, 0.82f, 0.72f},
                                              {"tan", 0.80f, 0.62f, 0.45f},
                                              {"dark", 0.45f, 0.32f, 0.22f}};
  return p;
}

std::vector<geom::CameraParams> ring_cameras(const geom::BodyTemplate& tpl,
                                             const SynthConfig& cfg) {
  const Vec3 c = tpl.centroid();
  std::vector<geom::CameraParams> cams;
  cams.reserve(cfg.views);
  for (int k = 0; k < cfg.views; ++k) {
    const double az = 2.0 * M_PI * k / cfg.views;
    const Vec3 eye = c + Vec3(cfg.camera_radius * std::sin(az), cfg.camera_height,
                              cfg.camera_radius * std::cos(az));
    // Aim at the centroid so every camera center is equidistant from it.
    geom::CameraParams cam =
        geom::look_at(eye, c, cfg.focal * cfg.resolution / 64.0, cfg.resolution,
                      cfg.resolution);
    cams.push_back(cam);
  }
  return cams;
}

namespace {

void paint_rect(Image& tex, const geom::ChartRect& r, double ulo, double uhi,
                const PaletteColor& color, Rng& rng, float noise) {
  const int T = tex.width();
  const int x0 = static_cast<int>(std::floor((r.u0 + (r.u1 - r.u0) * ulo) * T));
  const int x1 = static_cast<int>(std::ceil((r.u0 + (r.u1 - r.u0) * uhi) * T));
  const int y0 = static_cast<int>(std::floor(r.v0 * T));
  const int y1 = static_cast<int>(std::ceil(r.v1 * T));
  const float base[3] = {color.r, color.g, color.b};
  for (int y = std::max(0, y0); y < std::min(T, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(T, x1); ++x) {
      const float n = noise * static_cast<float>(rng.uniform(-1.0, 1.0));
      for (int ch = 0; ch < 3; ++ch)
        tex.at(ch, y, x) =
            std::min(0.98f, std::max(0.02f, base[ch] + n));
    }
}

float logit(float p) { return std::log(p / (1.0f - p)); }

}  // namespace

AvatarSample make_avatar(uint64_t seed, const SynthConfig& cfg) {
  AvatarSample s;
  s.seed = seed;
  s.tpl = geom::make_humanoid(seed);

  Rng root(seed);
  Rng tex_rng = root.child("texture");
  Rng pose_rng = root.child("pose");

  const auto& cloth = clothing_palette();
  const auto& skin = skin_palette();
  s.torso_front_color = static_cast<int>(tex_rng.uniform_int(cloth.size()));
  s.torso_back_color = static_cast<int>(tex_rng.uniform_int(cloth.size() - 1));
  if (s.torso_back_color >= s.torso_front_color) ++s.torso_back_color;
  const int arms_color = static_cast<int>(tex_rng.uniform_int(cloth.size()));
  s.legs_color = static_cast<int>(tex_rng.uniform_int(cloth.size()));
  s.skin_color = static_cast<int>(tex_rng.uniform_int(skin.size()));

  s.texture = Image(3, cfg.uv_res, cfg.uv_res);
  // Torso chart: the back half of the tube unwraps to local u < 0.5.
  const geom::ChartRect torso = geom::humanoid_chart_rect(0);
  paint_rect(s.texture, torso, 0.0, 0.5, cloth[s.torso_back_color], tex_rng, 0.03f);
  paint_rect(s.texture, torso, 0.5, 1.0, cloth[s.torso_front_color], tex_rng, 0.03f);
  paint_rect(s.texture, geom::humanoid_chart_rect(1), 0.0, 1.0, skin[s.skin_color],
             tex_rng, 0.02f);
  for (int part : {2, 3, 4, 5})
    paint_rect(s.texture, geom::humanoid_chart_rect(part), 0.0, 1.0, cloth[arms_color],
               tex_rng, 0.03f);
  for (int part : {6, 7, 8, 9})
    paint_rect(s.texture, geom::humanoid_chart_rect(part), 0.0, 1.0,
               cloth[s.legs_color], tex_rng, 0.03f);

  s.caption = std::string("a person wearing a ") + cloth[s.torso_front_color].word +
              " shirt and " + cloth[s.legs_color].word + " pants with " +
              skin[s.skin_color].word + " skin";
  s.caption_tokens = diffusion::tokenize(s.caption);

  // Mild articulated pose; the root stays put.
  s.pose = geom::PoseParams::identity(s.tpl.joint_count());
  for (int j = 1; j < s.tpl.joint_count(); ++j) {
    const double angle = cfg.pose_amplitude * pose_rng.uniform(-1.0, 1.0);
    Vec3 axis(pose_rng.uniform(-1.0, 1.0), pose_rng.uniform(-1.0, 1.0),
              pose_rng.uniform(-1.0, 1.0));
    if (axis.norm() < 1e-6) axis = Vec3(0, 0, 1);
    axis.normalize();
    s.pose.joint_rotations[j] = geom::Quat(Eigen::AngleAxisd(angle, axis));
  }

  s.cameras = ring_cameras(s.tpl, cfg);

  // Ground-truth cloud: the decoded prior carrying texture colors. Tangent
  // scales track the texel pitch so the surface closes without gaps.
  const gauss::UvBasePoints bases = gauss::uv_base_points(s.tpl, cfg.uv_res, cfg.uv_res);
  gauss::UVGaussianMap map;
  map.res_u = map.res_v = cfg.uv_res;
  map.channels = Tensor::zeros({gauss::UVGaussianMap::kChannels, cfg.uv_res * cfg.uv_res});
  map.mask = bases.mask;
  gauss::DecodeConfig dec;
  float* ch = map.channels.data();
  const int texels = cfg.uv_res * cfg.uv_res;
  for (int i = 0; i < bases.count(); ++i) {
    const int tx = bases.texel[i];
    ch[3 * texels + tx] = 3.0f;  // opacity logit -> alpha ~ 0.95
    const double st = std::max(1e-3, 0.9 * bases.spacing[i]);
    ch[8 * texels + tx] = static_cast<float>(std::log(st / dec.s_unit));
    ch[9 * texels + tx] = static_cast<float>(std::log(st / dec.s_unit));
    ch[10 * texels + tx] = static_cast<float>(std::log(0.3 * st / dec.s_unit));
    const int ty = tx / cfg.uv_res, txx = tx % cfg.uv_res;
    for (int k = 0; k < 3; ++k) {
      const float c = std::min(0.98f, std::max(0.02f, s.texture.at(k, ty, txx)));
      ch[(11 + k) * texels + tx] = logit(c);
    }
  }
  s.gt_cloud = gauss::decode_uv_map(map, bases, dec);
  return s;
}

RenderedViews render_views(const AvatarSample& sample, const gauss::GaussianCloud& cloud,
                           const gauss::UvBasePoints& bases, const SynthConfig& cfg) {
  if (cfg.views < 1) throw std::runtime_error("render_views: need at least one view");
  RenderedViews out;
  out.frontal = 0;

  const gauss::GaussianCloud posed =
      gauss::deform(cloud, bases, sample.tpl, sample.pose);
  render::RenderConfig rc;
  for (const auto& cam : sample.cameras) {
    out.views.push_back(render::render(posed, cam, rc).rgb);
    const geom::CondMaps maps =
        geom::render_conditioning_maps_one(sample.tpl, sample.pose, cam);
    out.geom_maps.push_back(maps.geometry);
    out.skel_maps.push_back(maps.skeleton);
  }

  const auto box = geom::face_crop_box(sample.tpl, sample.pose, sample.cameras[0]);
  if (!box) throw std::runtime_error("render_views: head not visible in frontal view");
  out.face_box = *box;
  const geom::CameraParams face_cam =
      geom::crop_camera(sample.cameras[0], *box, cfg.face_res);
  out.face = render::render(posed, face_cam, rc).rgb;
  return out;
}

}  // namespace gsav::data
