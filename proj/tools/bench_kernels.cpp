// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0
//
// Kernel benchmark: optimized parallel implementations against the serial
// references, with a bit-exactness check between serial and parallel modes.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "core/rng.h"
#include "core/tensor.h"
#include "gauss/gaussians.h"
#include "kernels/kernels.h"
#include "nn/ops.h"
#include "render/renderer.h"

using namespace gsav;

namespace {

double time_ms(const std::function<void()>& fn, int iters) {
  fn();  // warm
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

double max_abs_diff(const float* a, const float* b, int64_t n) {
  double m = 0.0;
  for (int64_t i = 0; i < n; ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

void bench_gemm(int m, int n, int k) {
  Rng rng(1);
  Tensor A = Tensor::randn({m, k}, rng);
  Tensor B = Tensor::randn({k, n}, rng);
  Tensor C1({m, n}), C2({m, n}), C3({m, n});
  const double flops = 2.0 * m * n * k;

  const double t_naive = time_ms(
      [&] { kernels::gemm_naive(false, false, m, n, k, 1.0f, A.data(), B.data(), 0.0f, C1.data()); },
      2);
  kernels::set_mode(kernels::Mode::Serial);
  const double t_serial = time_ms(
      [&] { kernels::gemm(false, false, m, n, k, 1.0f, A.data(), B.data(), 0.0f, C2.data()); },
      5);
  kernels::set_mode(kernels::Mode::Parallel);
  const double t_par = time_ms(
      [&] { kernels::gemm(false, false, m, n, k, 1.0f, A.data(), B.data(), 0.0f, C3.data()); },
      5);

  std::printf("gemm %4dx%4dx%4d | naive %8.2f ms (%5.2f GF/s) | serial %7.2f ms (%5.2f GF/s) | parallel %7.2f ms (%5.2f GF/s) | speedup %.2fx | serial-vs-parallel max|d| %g\n",
              m, n, k, t_naive, flops / t_naive / 1e6, t_serial, flops / t_serial / 1e6,
              t_par, flops / t_par / 1e6, t_serial / t_par,
              max_abs_diff(C2.data(), C3.data(), int64_t(m) * n));
}

void bench_attention(int T, int C, int heads) {
  Rng rng(2);
  Tensor q = Tensor::randn({T, C}, rng, 0.3f);
  Tensor k = Tensor::randn({T, C}, rng, 0.3f);
  Tensor v = Tensor::randn({T, C}, rng, 0.3f);
  nn::NoGradGuard ng;
  Tensor o_serial, o_par;
  kernels::set_mode(kernels::Mode::Serial);
  const double t_serial = time_ms(
      [&] {
        o_serial = nn::attention(nn::make_const(q), nn::make_const(k), nn::make_const(v), heads)->val;
      },
      3);
  kernels::set_mode(kernels::Mode::Parallel);
  const double t_par = time_ms(
      [&] {
        o_par = nn::attention(nn::make_const(q), nn::make_const(k), nn::make_const(v), heads)->val;
      },
      3);
  std::printf("attention T=%4d C=%3d h=%d | serial %7.2f ms | parallel %7.2f ms | speedup %.2fx | max|d| %g\n",
              T, C, heads, t_serial, t_par, t_serial / t_par,
              max_abs_diff(o_serial.data(), o_par.data(), o_serial.numel()));
}

void bench_render(int count, int res) {
  Rng rng(3);
  gauss::GaussianCloud cloud;
  cloud.pos = Tensor::randn({count, 3}, rng, 0.3f);
  cloud.opacity = Tensor::rand_uniform({count}, rng, 0.3f, 0.95f);
  cloud.rot = Tensor::zeros({count, 4});
  for (int i = 0; i < count; ++i) cloud.rot[i * 4] = 1.0f;
  cloud.scale = Tensor::rand_uniform({count, 3}, rng, 0.02f, 0.08f);
  cloud.color = Tensor::rand_uniform({count, 3}, rng, 0.0f, 1.0f);
  for (int i = 0; i < count; ++i) cloud.texel.push_back(i);

  geom::CameraParams cam = geom::look_at({0, 0, 3}, {0, 0, 0}, res * 1.2, res, res);
  render::RenderConfig rc;

  Image i_serial, i_par;
  kernels::set_mode(kernels::Mode::Serial);
  const double t_serial =
      time_ms([&] { i_serial = render::render(cloud, cam, rc).rgb; }, 3);
  kernels::set_mode(kernels::Mode::Parallel);
  const double t_par = time_ms([&] { i_par = render::render(cloud, cam, rc).rgb; }, 3);
  std::printf("render %5d splats @%3dx%3d | serial %7.2f ms | parallel %7.2f ms | speedup %.2fx | max|d| %g\n",
              count, res, res, t_serial, t_par, t_serial / t_par,
              max_abs_diff(i_serial.t.data(), i_par.t.data(), i_serial.t.numel()));
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", kernels::thread_count());
  bench_gemm(256, 256, 256);
  bench_gemm(1024, 256, 256);
  bench_gemm(4096, 64, 576);
  std::printf("\n");
  bench_attention(1024, 64, 2);
  bench_attention(4096, 32, 1);
  std::printf("\n");
  bench_render(1000, 64);
  bench_render(3000, 128);
  return 0;
}
