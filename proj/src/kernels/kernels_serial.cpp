// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels. Slow on purpose: the obvious triple loop, used
// as the oracle for the optimized implementations and by the benchmark.

#include "kernels/kernels.h"

namespace gsav::kernels {

void gemm_naive(bool transA, bool transB, int m, int n, int k, float alpha,
                const float* A, const float* B, float beta, float* C) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int kk = 0; kk < k; ++kk) {
        const float a = transA ? A[static_cast<int64_t>(kk) * m + i] : A[static_cast<int64_t>(i) * k + kk];
        const float b = transB ? B[static_cast<int64_t>(j) * k + kk] : B[static_cast<int64_t>(kk) * n + j];
        acc += a * b;
      }
      float& c = C[static_cast<int64_t>(i) * n + j];
      c = alpha * acc + (beta == 0.0f ? 0.0f : beta * c);
    }
  }
}

}  // namespace gsav::kernels
