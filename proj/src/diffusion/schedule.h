// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "core/rng.h"
#include "core/tensor.h"

namespace gsav::diffusion {

// Linear-beta DDPM schedule.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
};

// Throws on bound violations (0 < beta_start <= beta_end < 1, T >= 2).
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps. Throws if t out of range.
Tensor add_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);

Tensor randn_like(const Tensor& t, Rng& rng);

}  // namespace gsav::diffusion
