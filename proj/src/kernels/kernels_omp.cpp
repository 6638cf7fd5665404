// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0
//
// Optimized kernels. Parallelism is over independent output rows; the inner
// accumulation order per output element is fixed (k ascending), so serial
// and parallel modes produce identical bits.

#include "kernels/kernels.h"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace gsav::kernels {

namespace {

Mode& mode_ref() {
  static Mode m = [] {
    const char* env = std::getenv("GSAV_SERIAL");
    return (env && env[0] == '1') ? Mode::Serial : Mode::Parallel;
  }();
  return m;
}

}  // namespace

Mode mode() { return mode_ref(); }
void set_mode(Mode m) { mode_ref() = m; }

int thread_count() {
#ifdef _OPENMP
  return mode() == Mode::Parallel ? omp_get_max_threads() : 1;
#else
  return 1;
#endif
}

namespace {

// C[i,:] += a * B[k,:] pattern; vectorizes without reassociation.
inline void saxpy_row(int n, float a, const float* x, float* y) {
  for (int j = 0; j < n; ++j) y[j] += a * x[j];
}

inline float dot_row(int n, const float* x, const float* y) {
  float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
  for (int j = 0; j < n; ++j) acc += x[j] * y[j];
  return acc;
}

void scale_or_zero(int m, int n, float beta, float* C) {
  if (beta == 0.0f) {
    std::memset(C, 0, sizeof(float) * static_cast<size_t>(m) * n);
  } else if (beta != 1.0f) {
    par_for(m, [&](int64_t i) {
      float* c = C + i * n;
      for (int j = 0; j < n; ++j) c[j] *= beta;
    });
  }
}

}  // namespace

void gemm(bool transA, bool transB, int m, int n, int k, float alpha,
          const float* A, const float* B, float beta, float* C) {
  scale_or_zero(m, n, beta, C);
  if (alpha == 0.0f || m == 0 || n == 0 || k == 0) return;

  if (!transB) {
    // saxpy form: rows of B stream through C row i.
    par_for(m, [&](int64_t i) {
      float* c = C + i * n;
      for (int kk = 0; kk < k; ++kk) {
        const float a = alpha * (transA ? A[static_cast<int64_t>(kk) * m + i]
                                        : A[i * k + kk]);
        if (a != 0.0f) saxpy_row(n, a, B + static_cast<int64_t>(kk) * n, c);
      }
    });
  } else {
    // dot form: B stored [n,k].
    par_for(m, [&](int64_t i) {
      float* c = C + i * n;
      if (!transA) {
        const float* arow = A + i * k;
        for (int j = 0; j < n; ++j)
          c[j] += alpha * dot_row(k, arow, B + static_cast<int64_t>(j) * k);
      } else {
        for (int j = 0; j < n; ++j) {
          const float* brow = B + static_cast<int64_t>(j) * k;
          float acc = 0.0f;
          for (int kk = 0; kk < k; ++kk)
            acc += A[static_cast<int64_t>(kk) * m + i] * brow[kk];
          c[j] += alpha * acc;
        }
      }
    });
  }
}

void im2col(const float* im, int C, int H, int W, int kh, int kw, int stride,
            int pad, float* cols, int OH, int OW) {
  const int64_t ncols = static_cast<int64_t>(OH) * OW;
  par_for(static_cast<int64_t>(C) * kh * kw, [&](int64_t row) {
    const int c = static_cast<int>(row / (kh * kw));
    const int ki = static_cast<int>((row / kw) % kh);
    const int kj = static_cast<int>(row % kw);
    float* dst = cols + row * ncols;
    const float* src = im + static_cast<int64_t>(c) * H * W;
    for (int oy = 0; oy < OH; ++oy) {
      const int iy = oy * stride - pad + ki;
      if (iy < 0 || iy >= H) {
        std::memset(dst + static_cast<int64_t>(oy) * OW, 0, sizeof(float) * OW);
        continue;
      }
      for (int ox = 0; ox < OW; ++ox) {
        const int ix = ox * stride - pad + kj;
        dst[static_cast<int64_t>(oy) * OW + ox] =
            (ix >= 0 && ix < W) ? src[static_cast<int64_t>(iy) * W + ix] : 0.0f;
      }
    }
  });
}

void col2im(const float* cols, int C, int H, int W, int kh, int kw, int stride,
            int pad, float* im, int OH, int OW) {
  const int64_t ncols = static_cast<int64_t>(OH) * OW;
  // Parallel over channels: every (ki,kj) row of a channel scatters into the
  // same image plane, so a channel is the safe unit of independence.
  par_for(C, [&](int64_t c) {
    float* dst = im + c * H * W;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const int64_t row = (c * kh + ki) * kw + kj;
        const float* src = cols + row * ncols;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < W)
              dst[static_cast<int64_t>(iy) * W + ix] += src[static_cast<int64_t>(oy) * OW + ox];
          }
        }
      }
    }
  });
}

}  // namespace gsav::kernels
