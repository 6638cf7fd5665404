// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "diffusion/schedule.h"

#include <cmath>
#include <stdexcept>

namespace gsav::diffusion {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw std::runtime_error("schedule: T must be >= 2");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::runtime_error("schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.betas[t] = beta_start + (beta_end - beta_start) * (T == 1 ? 0.0 : static_cast<double>(t) / (T - 1));
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

Tensor add_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
  if (t < 0 || t >= s.T) throw std::runtime_error("add_noise: t out of range");
  if (!z0.same_shape(eps)) throw std::runtime_error("add_noise: shape mismatch");
  const float a = static_cast<float>(std::sqrt(s.alpha_bars[t]));
  const float b = static_cast<float>(std::sqrt(1.0 - s.alpha_bars[t]));
  Tensor out(z0.shape());
  const float* p0 = z0.data();
  const float* pe = eps.data();
  float* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = a * p0[i] + b * pe[i];
  return out;
}

Tensor randn_like(const Tensor& t, Rng& rng) {
  Tensor out(t.shape());
  float* p = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) p[i] = static_cast<float>(rng.normal());
  return out;
}

}  // namespace gsav::diffusion
