// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "data/synth.h"
#include "diffusion/stage1.h"
#include "recon/stage2.h"

namespace gsav::data {

struct DatasetConfig {
  SynthConfig synth;
  int samples = 4;
  uint64_t seed = 1;
  std::string split = "train";
};

// On-disk layout per sample directory:
//   template.json texture.png views/NN.png cond/NN_geom.png cond/NN_skel.png
//   face.png caption.txt gt_cloud.ply views.json
// plus manifest.json at the root. Sample writes go through a temp directory
// rename so partially written samples never appear under their final name.
void write_dataset(const DatasetConfig& cfg, const std::string& dir);

struct LoadedSample {
  std::string id;
  uint64_t seed = 0;
  geom::BodyTemplate tpl;
  Image texture;
  geom::PoseParams pose;
  std::vector<geom::CameraParams> cameras;
  std::vector<Image> views;
  std::vector<Image> geom_maps;
  std::vector<Image> skel_maps;
  Image face;
  geom::FaceBox face_box;
  int frontal = 0;
  std::vector<int> caption_tokens;
  gauss::GaussianCloud gt_cloud;
};

struct LoadedDataset {
  nlohmann::json manifest;
  std::string root;
  int view_count = 0;
  int resolution = 0;
  int uv_res = 0;
  int face_res = 0;
  std::vector<LoadedSample> samples;
};

// Throws a manifest-validation error listing every missing file.
LoadedDataset read_dataset(const std::string& dir);

// Stage-1 sample: one near-frontal reference plus `target_views` views at
// equal ring intervals (the paper-style interval sampling at desk scale).
diffusion::Stage1Batch make_stage1_batch(const LoadedSample& s, int target_views,
                                         Rng& rng);

// Stage-2 sample: `input_views` views always including the frontal one;
// self-supervised (inputs are also the render targets).
recon::ReconBatch make_recon_batch(const LoadedSample& s, int input_views, Rng& rng);

}  // namespace gsav::data
