// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <json.hpp>

#include "core/image.h"
#include "nn/ops.h"

namespace gsav::metrics {

class PerceptualNet;

// Mean squared difference over all elements. Throws on shape mismatch.
double mse(const Tensor& a, const Tensor& b);

// 10*log10(peak^2 / mse), capped at 100 dB for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean local SSIM: channel-mean grayscale, 11x11 Gaussian window (sigma 1.5),
// standard constants, valid windows only. Throws if the image is smaller
// than the window.
double ssim(const Image& a, const Image& b);

// Per-view and aggregated {mse, psnr, ssim, perceptual} report.
nlohmann::json evaluate_images(const std::vector<Image>& pred,
                               const std::vector<Image>& gt,
                               const PerceptualNet& net);

struct LossWeights {
  float lambda_rgb = 1.0f;
  float lambda_lpips = 1.0f;
  float lambda_face = 0.5f;
};

// lambda_rgb * mse(views) + lambda_lpips * perceptual(views)
// + lambda_face * perceptual(faces). Face values may be null (term skipped).
nn::Value total_loss_stage2(const nn::Value& pred_views, const nn::Value& target_views,
                            const nn::Value& pred_face, const nn::Value& target_face,
                            const LossWeights& w, const PerceptualNet& net);

}  // namespace gsav::metrics
