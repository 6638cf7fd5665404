// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsav::kernels {

enum class Mode { Serial, Parallel };

// Process-wide execution mode. Parallel by default; GSAV_SERIAL=1 in the
// environment forces serial. Per-output accumulation order is identical in
// both modes, so results are bit-exact either way.
Mode mode();
void set_mode(Mode m);
int thread_count();

// Chunked parallel loop. f(i) must be independent across i.
template <class F>
inline void par_for(int64_t n, F&& f) {
#ifdef _OPENMP
  if (mode() == Mode::Parallel && n > 1) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) f(i);
    return;
  }
#endif
  for (int64_t i = 0; i < n; ++i) f(i);
}

// C[m,n] = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is A [m,k] when !transA, else A is stored [k,m] and transposed.
// op(B) is B [k,n] when !transB, else B is stored [n,k] and transposed.
void gemm(bool transA, bool transB, int m, int n, int k, float alpha,
          const float* A, const float* B, float beta, float* C);

// Reference triple loop, serial. Kept for correctness tests and the
// kernel benchmark.
void gemm_naive(bool transA, bool transB, int m, int n, int k, float alpha,
                const float* A, const float* B, float beta, float* C);

// Image-to-column unpacking for convolution. Input [C,H,W]; output
// [C*kh*kw, OH*OW] with zero padding `pad` and stride `stride`.
void im2col(const float* im, int C, int H, int W, int kh, int kw, int stride,
            int pad, float* cols, int OH, int OW);

// Transposed scatter of im2col: accumulates columns back into the image.
void col2im(const float* cols, int C, int H, int W, int kh, int kw, int stride,
            int pad, float* im, int OH, int OW);

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace gsav::kernels
