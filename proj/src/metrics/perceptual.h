// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "nn/ops.h"

namespace gsav::metrics {

// Fixed random-feature perceptual distance: a 3-stage conv pyramid with
// seeded, never-trained weights; per-stage unit channel normalization; mean
// squared feature difference averaged over stages. Differentiable in its
// image arguments.
class PerceptualNet {
 public:
  explicit PerceptualNet(uint64_t seed = 0x5eed1u);

  // a, b: [N,3,H,W] image batches.
  nn::Value distance_val(const nn::Value& a, const nn::Value& b) const;
  double distance(const Tensor& a, const Tensor& b) const;

 private:
  std::vector<nn::Value> features(const nn::Value& x) const;
  nn::Value w1_, w2_, w3_;  // conv kernels, constants
};

}  // namespace gsav::metrics
