// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/rng.h"
#include "core/tensor.h"
#include "kernels/kernels.h"

using namespace gsav;

namespace {

Tensor rand_tensor(std::vector<int> shape, uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng);
}

}  // namespace

TEST_CASE("gemm matches the naive reference for every transpose combination") {
  const int m = 13, n = 17, k = 9;
  for (bool tA : {false, true}) {
    for (bool tB : {false, true}) {
      Tensor A = rand_tensor(tA ? std::vector<int>{k, m} : std::vector<int>{m, k}, 1);
      Tensor B = rand_tensor(tB ? std::vector<int>{n, k} : std::vector<int>{k, n}, 2);
      Tensor C({m, n}), Cref({m, n});
      kernels::gemm(tA, tB, m, n, k, 1.0f, A.data(), B.data(), 0.0f, C.data());
      kernels::gemm_naive(tA, tB, m, n, k, 1.0f, A.data(), B.data(), 0.0f, Cref.data());
      for (int64_t i = 0; i < C.numel(); ++i)
        CHECK(C[i] == doctest::Approx(Cref[i]).epsilon(1e-4));
    }
  }
}

TEST_CASE("gemm honors alpha and beta") {
  const int m = 4, n = 5, k = 6;
  Tensor A = rand_tensor({m, k}, 3);
  Tensor B = rand_tensor({k, n}, 4);
  Tensor C = rand_tensor({m, n}, 5);
  Tensor Cref = C.clone();
  kernels::gemm(false, false, m, n, k, 0.5f, A.data(), B.data(), 2.0f, C.data());
  kernels::gemm_naive(false, false, m, n, k, 0.5f, A.data(), B.data(), 2.0f, Cref.data());
  for (int64_t i = 0; i < C.numel(); ++i)
    CHECK(C[i] == doctest::Approx(Cref[i]).epsilon(1e-4));
}

TEST_CASE("serial and parallel gemm are bit-identical") {
  const int m = 64, n = 48, k = 33;
  Tensor A = rand_tensor({m, k}, 6);
  Tensor B = rand_tensor({k, n}, 7);
  Tensor Cs({m, n}), Cp({m, n});
  kernels::set_mode(kernels::Mode::Serial);
  kernels::gemm(false, false, m, n, k, 1.0f, A.data(), B.data(), 0.0f, Cs.data());
  kernels::set_mode(kernels::Mode::Parallel);
  kernels::gemm(false, false, m, n, k, 1.0f, A.data(), B.data(), 0.0f, Cp.data());
  for (int64_t i = 0; i < Cs.numel(); ++i) CHECK(Cs[i] == Cp[i]);
}

TEST_CASE("im2col and col2im are adjoint") {
  const int C = 3, H = 7, W = 6, kh = 3, kw = 3, stride = 2, pad = 1;
  const int OH = kernels::conv_out_size(H, kh, stride, pad);
  const int OW = kernels::conv_out_size(W, kw, stride, pad);
  Tensor x = rand_tensor({C, H, W}, 8);
  Tensor y = rand_tensor({C * kh * kw, OH * OW}, 9);

  Tensor cols({C * kh * kw, OH * OW});
  kernels::im2col(x.data(), C, H, W, kh, kw, stride, pad, cols.data(), OH, OW);
  Tensor back({C, H, W});
  kernels::col2im(y.data(), C, H, W, kh, kw, stride, pad, back.data(), OH, OW);

  double lhs = 0.0, rhs = 0.0;
  for (int64_t i = 0; i < cols.numel(); ++i) lhs += double(cols[i]) * y[i];
  for (int64_t i = 0; i < x.numel(); ++i) rhs += double(x[i]) * back[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}
