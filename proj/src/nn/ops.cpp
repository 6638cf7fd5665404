// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "nn/ops.h"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "kernels/kernels.h"

namespace gsav::nn {

using kernels::gemm;
using kernels::par_for;

namespace {

void check(bool cond, const char* msg) {
  if (!cond) throw std::runtime_error(msg);
}

void accumulate(const Value& p, const Tensor& delta) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  float* g = p->grad.data();
  const float* d = delta.data();
  par_for(delta.numel(), [&](int64_t i) { g[i] += d[i]; });
}

// Unary elementwise with derivative expressed from (x, y).
template <class Fwd, class Bwd>
Value unary_op(const Value& x, Fwd f, Bwd dfdx) {
  Tensor out(x->val.shape());
  const float* in = x->val.data();
  float* o = out.data();
  par_for(out.numel(), [&](int64_t i) { o[i] = f(in[i]); });
  return make_op(std::move(out), {x}, [x, dfdx](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* in = x->val.data();
    const float* yv = self.val.data();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    par_for(self.val.numel(), [&](int64_t i) { gx[i] += g[i] * dfdx(in[i], yv[i]); });
  });
}

}  // namespace

Value add(const Value& a, const Value& b) {
  check(a->val.same_shape(b->val), "add: shape mismatch");
  Tensor out(a->val.shape());
  const float* pa = a->val.data();
  const float* pb = b->val.data();
  float* o = out.data();
  par_for(out.numel(), [&](int64_t i) { o[i] = pa[i] + pb[i]; });
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    accumulate(b, self.grad);
  });
}

Value sub(const Value& a, const Value& b) {
  check(a->val.same_shape(b->val), "sub: shape mismatch");
  Tensor out(a->val.shape());
  const float* pa = a->val.data();
  const float* pb = b->val.data();
  float* o = out.data();
  par_for(out.numel(), [&](int64_t i) { o[i] = pa[i] - pb[i]; });
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      const float* g = self.grad.data();
      float* gb = b->grad.data();
      par_for(self.grad.numel(), [&](int64_t i) { gb[i] -= g[i]; });
    }
  });
}

Value mul(const Value& a, const Value& b) {
  check(a->val.same_shape(b->val), "mul: shape mismatch");
  Tensor out(a->val.shape());
  const float* pa = a->val.data();
  const float* pb = b->val.data();
  float* o = out.data();
  par_for(out.numel(), [&](int64_t i) { o[i] = pa[i] * pb[i]; });
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    const float* g = self.grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      float* ga = a->grad.data();
      const float* pb = b->val.data();
      par_for(self.grad.numel(), [&](int64_t i) { ga[i] += g[i] * pb[i]; });
    }
    if (b->requires_grad) {
      b->ensure_grad();
      float* gb = b->grad.data();
      const float* pa = a->val.data();
      par_for(self.grad.numel(), [&](int64_t i) { gb[i] += g[i] * pa[i]; });
    }
  });
}

Value affine(const Value& x, float scale, float shift) {
  return unary_op(
      x, [scale, shift](float v) { return scale * v + shift; },
      [scale](float, float) { return scale; });
}

Value silu(const Value& x) {
  return unary_op(
      x,
      [](float v) { return v / (1.0f + std::exp(-v)); },
      [](float v, float) {
        const float s = 1.0f / (1.0f + std::exp(-v));
        return s * (1.0f + v * (1.0f - s));
      });
}

Value tanh_v(const Value& x) {
  return unary_op(x, [](float v) { return std::tanh(v); },
                  [](float, float y) { return 1.0f - y * y; });
}

Value sigmoid_v(const Value& x) {
  return unary_op(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
                  [](float, float y) { return y * (1.0f - y); });
}

Value exp_v(const Value& x) {
  return unary_op(x, [](float v) { return std::exp(v); },
                  [](float, float y) { return y; });
}

Value add_row_bias(const Value& x, const Value& b) {
  check(x->val.rank() == 2 && b->val.rank() == 1 && x->val.dim(1) == b->val.dim(0),
        "add_row_bias: shape mismatch");
  const int T = x->val.dim(0), C = x->val.dim(1);
  Tensor out(x->val.shape());
  const float* px = x->val.data();
  const float* pb = b->val.data();
  float* o = out.data();
  par_for(T, [&](int64_t i) {
    for (int c = 0; c < C; ++c) o[i * C + c] = px[i * C + c] + pb[c];
  });
  return make_op(std::move(out), {x, b}, [x, b, T, C](Node& self) {
    accumulate(x, self.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      const float* g = self.grad.data();
      float* gb = b->grad.data();
      for (int i = 0; i < T; ++i)
        for (int c = 0; c < C; ++c) gb[c] += g[static_cast<int64_t>(i) * C + c];
    }
  });
}

Value add_channel_bias(const Value& x, const Value& b) {
  check(x->val.rank() == 4 && b->val.rank() == 1 && x->val.dim(1) == b->val.dim(0),
        "add_channel_bias: shape mismatch");
  const int N = x->val.dim(0), C = x->val.dim(1);
  const int64_t HW = static_cast<int64_t>(x->val.dim(2)) * x->val.dim(3);
  Tensor out(x->val.shape());
  const float* px = x->val.data();
  const float* pb = b->val.data();
  float* o = out.data();
  par_for(static_cast<int64_t>(N) * C, [&](int64_t nc) {
    const float bias = pb[nc % C];
    const float* src = px + nc * HW;
    float* dst = o + nc * HW;
    for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] + bias;
  });
  return make_op(std::move(out), {x, b}, [x, b, N, C, HW](Node& self) {
    accumulate(x, self.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      const float* g = self.grad.data();
      float* gb = b->grad.data();
      for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* src = g + nc * HW;
        float acc = 0.0f;
        for (int64_t i = 0; i < HW; ++i) acc += src[i];
        gb[nc % C] += acc;
      }
    }
  });
}

Value matmul(const Value& a, const Value& b, bool transA, bool transB) {
  check(a->val.rank() == 2 && b->val.rank() == 2, "matmul: rank != 2");
  const int m = transA ? a->val.dim(1) : a->val.dim(0);
  const int kA = transA ? a->val.dim(0) : a->val.dim(1);
  const int kB = transB ? b->val.dim(1) : b->val.dim(0);
  const int n = transB ? b->val.dim(0) : b->val.dim(1);
  check(kA == kB, "matmul: inner dimension mismatch");
  const int k = kA;

  Tensor out({m, n});
  gemm(transA, transB, m, n, k, 1.0f, a->val.data(), b->val.data(), 0.0f, out.data());
  return make_op(std::move(out), {a, b}, [a, b, transA, transB, m, n, k](Node& self) {
    const float* gC = self.grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      if (!transA) {
        // dA = dC * op(B)^T
        gemm(false, !transB, m, k, n, 1.0f, gC, b->val.data(), 1.0f, a->grad.data());
      } else {
        // dA_stored [k,m] = op(B) * dC^T
        gemm(transB, true, k, m, n, 1.0f, b->val.data(), gC, 1.0f, a->grad.data());
      }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      if (!transB) {
        // dB = op(A)^T * dC
        gemm(!transA, false, k, n, m, 1.0f, a->val.data(), gC, 1.0f, b->grad.data());
      } else {
        // dB_stored [n,k] = dC^T * op(A)
        gemm(true, transA, n, k, m, 1.0f, gC, a->val.data(), 1.0f, b->grad.data());
      }
    }
  });
}

Value linear(const Value& x, const Value& w, const Value& b) {
  Value y = matmul(x, w, false, true);
  return b ? add_row_bias(y, b) : y;
}

Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad) {
  check(x->val.rank() == 4 && w->val.rank() == 4, "conv2d: rank");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  const int O = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
  check(w->val.dim(1) == C, "conv2d: channel mismatch");
  const int OH = kernels::conv_out_size(H, kh, stride, pad);
  const int OW = kernels::conv_out_size(W, kw, stride, pad);
  check(OH > 0 && OW > 0, "conv2d: empty output");
  const int K = C * kh * kw;
  const int64_t OHW = static_cast<int64_t>(OH) * OW;

  Tensor out({N, O, OH, OW});
  Tensor cols({K, static_cast<int>(OHW)});
  for (int nidx = 0; nidx < N; ++nidx) {
    kernels::im2col(x->val.data() + static_cast<int64_t>(nidx) * C * H * W, C, H, W,
                    kh, kw, stride, pad, cols.data(), OH, OW);
    gemm(false, false, O, static_cast<int>(OHW), K, 1.0f, w->val.data(), cols.data(),
         0.0f, out.data() + static_cast<int64_t>(nidx) * O * OHW);
  }
  if (b) {
    check(b->val.rank() == 1 && b->val.dim(0) == O, "conv2d: bias shape");
    const float* pb = b->val.data();
    float* po = out.data();
    par_for(static_cast<int64_t>(N) * O, [&](int64_t no) {
      const float bias = pb[no % O];
      float* dst = po + no * OHW;
      for (int64_t i = 0; i < OHW; ++i) dst[i] += bias;
    });
  }

  std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
  return make_op(std::move(out), std::move(parents),
                 [x, w, b, N, C, H, W, O, kh, kw, stride, pad, OH, OW, K, OHW](Node& self) {
    const float* g = self.grad.data();
    if (b && b->requires_grad) {
      b->ensure_grad();
      float* gb = b->grad.data();
      for (int64_t no = 0; no < static_cast<int64_t>(N) * O; ++no) {
        const float* src = g + no * OHW;
        float acc = 0.0f;
        for (int64_t i = 0; i < OHW; ++i) acc += src[i];
        gb[no % O] += acc;
      }
    }
    const bool need_x = x->requires_grad;
    const bool need_w = w->requires_grad;
    if (!need_x && !need_w) return;
    if (need_x) x->ensure_grad();
    if (need_w) w->ensure_grad();
    Tensor cols({K, static_cast<int>(OHW)});
    Tensor dcols({K, static_cast<int>(OHW)});
    for (int nidx = 0; nidx < N; ++nidx) {
      const float* gout = g + static_cast<int64_t>(nidx) * O * OHW;
      if (need_w) {
        kernels::im2col(x->val.data() + static_cast<int64_t>(nidx) * C * H * W, C, H, W,
                        kh, kw, stride, pad, cols.data(), OH, OW);
        gemm(false, true, O, K, static_cast<int>(OHW), 1.0f, gout, cols.data(), 1.0f,
             w->grad.data());
      }
      if (need_x) {
        gemm(true, false, K, static_cast<int>(OHW), O, 1.0f, w->val.data(), gout, 0.0f,
             dcols.data());
        kernels::col2im(dcols.data(), C, H, W, kh, kw, stride, pad,
                        x->grad.data() + static_cast<int64_t>(nidx) * C * H * W, OH, OW);
      }
    }
  });
}

Value upsample_nearest2(const Value& x) {
  check(x->val.rank() == 4, "upsample_nearest2: rank");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  Tensor out({N, C, 2 * H, 2 * W});
  const float* px = x->val.data();
  float* po = out.data();
  par_for(static_cast<int64_t>(N) * C, [&](int64_t nc) {
    const float* src = px + nc * H * W;
    float* dst = po + nc * 4 * H * W;
    for (int y = 0; y < 2 * H; ++y)
      for (int xx = 0; xx < 2 * W; ++xx)
        dst[static_cast<int64_t>(y) * 2 * W + xx] = src[static_cast<int64_t>(y / 2) * W + xx / 2];
  });
  return make_op(std::move(out), {x}, [x, N, C, H, W](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    par_for(static_cast<int64_t>(N) * C, [&](int64_t nc) {
      const float* src = g + nc * 4 * H * W;
      float* dst = gx + nc * H * W;
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx)
          dst[static_cast<int64_t>(y / 2) * W + xx / 2] += src[static_cast<int64_t>(y) * 2 * W + xx];
    });
  });
}

Value avgpool2(const Value& x) {
  check(x->val.rank() == 4, "avgpool2: rank");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  check(H % 2 == 0 && W % 2 == 0, "avgpool2: odd spatial size");
  const int OH = H / 2, OW = W / 2;
  Tensor out({N, C, OH, OW});
  const float* px = x->val.data();
  float* po = out.data();
  par_for(static_cast<int64_t>(N) * C, [&](int64_t nc) {
    const float* src = px + nc * H * W;
    float* dst = po + nc * OH * OW;
    for (int y = 0; y < OH; ++y)
      for (int xx = 0; xx < OW; ++xx)
        dst[static_cast<int64_t>(y) * OW + xx] =
            0.25f * (src[(2 * y) * W + 2 * xx] + src[(2 * y) * W + 2 * xx + 1] +
                     src[(2 * y + 1) * W + 2 * xx] + src[(2 * y + 1) * W + 2 * xx + 1]);
  });
  return make_op(std::move(out), {x}, [x, N, C, OH, OW, W](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    par_for(static_cast<int64_t>(N) * C, [&](int64_t nc) {
      const float* src = g + nc * OH * OW;
      float* dst = gx + nc * (2 * OH) * W;
      for (int y = 0; y < OH; ++y)
        for (int xx = 0; xx < OW; ++xx) {
          const float v = 0.25f * src[static_cast<int64_t>(y) * OW + xx];
          dst[(2 * y) * W + 2 * xx] += v;
          dst[(2 * y) * W + 2 * xx + 1] += v;
          dst[(2 * y + 1) * W + 2 * xx] += v;
          dst[(2 * y + 1) * W + 2 * xx + 1] += v;
        }
    });
  });
}

Value group_norm(const Value& x, int groups, const Value& gamma, const Value& beta,
                 float eps) {
  check(x->val.rank() == 4, "group_norm: rank");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  check(C % groups == 0, "group_norm: C % groups != 0");
  const int cg = C / groups;
  const int64_t HW = static_cast<int64_t>(H) * W;
  const int64_t cnt = cg * HW;

  Tensor out(x->val.shape());
  Tensor mean({N, groups}), rstd({N, groups});
  const float* px = x->val.data();
  float* po = out.data();
  const float* pg = gamma->val.data();
  const float* pb = beta->val.data();
  par_for(static_cast<int64_t>(N) * groups, [&](int64_t ng) {
    const int64_t base = ng * cnt;
    double mu = 0.0;
    for (int64_t i = 0; i < cnt; ++i) mu += px[base + i];
    mu /= static_cast<double>(cnt);
    double var = 0.0;
    for (int64_t i = 0; i < cnt; ++i) {
      const double d = px[base + i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cnt);
    const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
    mean[ng] = static_cast<float>(mu);
    rstd[ng] = rs;
    const int g0 = static_cast<int>(ng % groups) * cg;
    for (int c = 0; c < cg; ++c) {
      const float gm = pg[g0 + c], bt = pb[g0 + c];
      const float* src = px + base + c * HW;
      float* dst = po + base + c * HW;
      for (int64_t i = 0; i < HW; ++i)
        dst[i] = (src[i] - static_cast<float>(mu)) * rs * gm + bt;
    }
  });

  return make_op(std::move(out), {x, gamma, beta},
                 [x, gamma, beta, mean, rstd, N, C, groups, cg, HW, cnt](Node& self) {
    const float* g = self.grad.data();
    const float* px = x->val.data();
    const float* pg = gamma->val.data();
    if (gamma->requires_grad) gamma->ensure_grad();
    if (beta->requires_grad) beta->ensure_grad();
    if (x->requires_grad) x->ensure_grad();
    // dgamma/dbeta accumulate serially over (n,g); grouped by channel.
    if (gamma->requires_grad || beta->requires_grad) {
      float* ggam = gamma->requires_grad ? gamma->grad.data() : nullptr;
      float* gbet = beta->requires_grad ? beta->grad.data() : nullptr;
      for (int64_t ng = 0; ng < static_cast<int64_t>(N) * groups; ++ng) {
        const int64_t base = ng * cnt;
        const float mu = mean[ng], rs = rstd[ng];
        const int g0 = static_cast<int>(ng % groups) * cg;
        for (int c = 0; c < cg; ++c) {
          const float* gsrc = g + base + c * HW;
          const float* xsrc = px + base + c * HW;
          double sg = 0.0, sgx = 0.0;
          for (int64_t i = 0; i < HW; ++i) {
            sg += gsrc[i];
            sgx += gsrc[i] * (xsrc[i] - mu) * rs;
          }
          if (ggam) ggam[g0 + c] += static_cast<float>(sgx);
          if (gbet) gbet[g0 + c] += static_cast<float>(sg);
        }
      }
    }
    if (x->requires_grad) {
      float* gx = x->grad.data();
      par_for(static_cast<int64_t>(N) * groups, [&](int64_t ng) {
        const int64_t base = ng * cnt;
        const float mu = mean[ng], rs = rstd[ng];
        const int g0 = static_cast<int>(ng % groups) * cg;
        // dxhat = g * gamma; dx = rs*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
        double s1 = 0.0, s2 = 0.0;
        for (int c = 0; c < cg; ++c) {
          const float gm = pg[g0 + c];
          const float* gsrc = g + base + c * HW;
          const float* xsrc = px + base + c * HW;
          for (int64_t i = 0; i < HW; ++i) {
            const float dxh = gsrc[i] * gm;
            s1 += dxh;
            s2 += dxh * (xsrc[i] - mu) * rs;
          }
        }
        const float m1 = static_cast<float>(s1 / static_cast<double>(cnt));
        const float m2 = static_cast<float>(s2 / static_cast<double>(cnt));
        for (int c = 0; c < cg; ++c) {
          const float gm = pg[g0 + c];
          const float* gsrc = g + base + c * HW;
          const float* xsrc = px + base + c * HW;
          float* dst = gx + base + c * HW;
          for (int64_t i = 0; i < HW; ++i) {
            const float xh = (xsrc[i] - mu) * rs;
            dst[i] += rs * (gsrc[i] * gm - m1 - xh * m2);
          }
        }
      });
    }
  });
}

Value layer_norm(const Value& x, const Value& gamma, const Value& beta, float eps) {
  check(x->val.rank() == 2, "layer_norm: rank");
  const int T = x->val.dim(0), C = x->val.dim(1);
  check(gamma->val.dim(0) == C && beta->val.dim(0) == C, "layer_norm: affine shape");

  Tensor out(x->val.shape());
  Tensor mean({T}), rstd({T});
  const float* px = x->val.data();
  const float* pg = gamma->val.data();
  const float* pb = beta->val.data();
  float* po = out.data();
  par_for(T, [&](int64_t t) {
    const float* row = px + t * C;
    double mu = 0.0;
    for (int c = 0; c < C; ++c) mu += row[c];
    mu /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) {
      const double d = row[c] - mu;
      var += d * d;
    }
    var /= C;
    const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
    mean[t] = static_cast<float>(mu);
    rstd[t] = rs;
    float* dst = po + t * C;
    for (int c = 0; c < C; ++c)
      dst[c] = (row[c] - static_cast<float>(mu)) * rs * pg[c] + pb[c];
  });

  return make_op(std::move(out), {x, gamma, beta},
                 [x, gamma, beta, mean, rstd, T, C](Node& self) {
    const float* g = self.grad.data();
    const float* px = x->val.data();
    const float* pg = gamma->val.data();
    if (gamma->requires_grad || beta->requires_grad) {
      if (gamma->requires_grad) gamma->ensure_grad();
      if (beta->requires_grad) beta->ensure_grad();
      float* ggam = gamma->requires_grad ? gamma->grad.data() : nullptr;
      float* gbet = beta->requires_grad ? beta->grad.data() : nullptr;
      for (int t = 0; t < T; ++t) {
        const float mu = mean[t], rs = rstd[t];
        for (int c = 0; c < C; ++c) {
          const float gv = g[static_cast<int64_t>(t) * C + c];
          if (ggam) ggam[c] += gv * (px[static_cast<int64_t>(t) * C + c] - mu) * rs;
          if (gbet) gbet[c] += gv;
        }
      }
    }
    if (x->requires_grad) {
      x->ensure_grad();
      float* gx = x->grad.data();
      par_for(T, [&](int64_t t) {
        const float mu = mean[t], rs = rstd[t];
        const float* grow = g + t * C;
        const float* xrow = px + t * C;
        float* dst = gx + t * C;
        double s1 = 0.0, s2 = 0.0;
        for (int c = 0; c < C; ++c) {
          const float dxh = grow[c] * pg[c];
          s1 += dxh;
          s2 += dxh * (xrow[c] - mu) * rs;
        }
        const float m1 = static_cast<float>(s1 / C);
        const float m2 = static_cast<float>(s2 / C);
        for (int c = 0; c < C; ++c) {
          const float xh = (xrow[c] - mu) * rs;
          dst[c] += rs * (grow[c] * pg[c] - m1 - xh * m2);
        }
      });
    }
  });
}

Value normalize_channels(const Value& x, float eps) {
  check(x->val.rank() == 4, "normalize_channels: rank");
  const int N = x->val.dim(0), C = x->val.dim(1);
  const int64_t HW = static_cast<int64_t>(x->val.dim(2)) * x->val.dim(3);
  Tensor out(x->val.shape());
  Tensor rnorm({N, static_cast<int>(HW)});
  const float* px = x->val.data();
  float* po = out.data();
  float* pr = rnorm.data();
  par_for(static_cast<int64_t>(N) * HW, [&](int64_t np) {
    const int64_t n = np / HW, p = np % HW;
    const int64_t base = n * C * HW + p;
    double s = 0.0;
    for (int c = 0; c < C; ++c) {
      const double v = px[base + c * HW];
      s += v * v;
    }
    const float r = static_cast<float>(1.0 / std::sqrt(s + eps));
    pr[np] = r;
    for (int c = 0; c < C; ++c) po[base + c * HW] = px[base + c * HW] * r;
  });
  return make_op(std::move(out), {x}, [x, rnorm, N, C, HW](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    const float* px = x->val.data();
    const float* pr = rnorm.data();
    float* gx = x->grad.data();
    par_for(static_cast<int64_t>(N) * HW, [&](int64_t np) {
      const int64_t n = np / HW, p = np % HW;
      const int64_t base = n * C * HW + p;
      const float r = pr[np];
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += g[base + c * HW] * px[base + c * HW];
      const float d = static_cast<float>(dot) * r * r * r;
      for (int c = 0; c < C; ++c)
        gx[base + c * HW] += g[base + c * HW] * r - px[base + c * HW] * d;
    });
  });
}

Value attention(const Value& q, const Value& k, const Value& v, int heads) {
  check(q->val.rank() == 2 && k->val.rank() == 2 && v->val.rank() == 2, "attention: rank");
  const int T = q->val.dim(0), C = q->val.dim(1), S = k->val.dim(0);
  check(k->val.dim(1) == C && v->val.dim(0) == S && v->val.dim(1) == C,
        "attention: shape mismatch");
  check(C % heads == 0, "attention: C % heads != 0");
  const int dh = C / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  Tensor out({T, C});
  Tensor mx({heads, T}), lse({heads, T});  // row max and softmax normalizer
  const float* pq = q->val.data();
  const float* pk = k->val.data();
  const float* pv = v->val.data();
  float* po = out.data();
  par_for(static_cast<int64_t>(heads) * T, [&](int64_t ht) {
    const int hd = static_cast<int>(ht / T);
    const int64_t i = ht % T;
    const int c0 = hd * dh;
    const float* qi = pq + i * C + c0;
    float m = -1e30f;
    for (int j = 0; j < S; ++j) {
      const float* kj = pk + static_cast<int64_t>(j) * C + c0;
      float s = 0.0f;
#pragma omp simd reduction(+ : s)
      for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
      s *= scale;
      if (s > m) m = s;
    }
    float l = 0.0f;
    float* oi = po + i * C + c0;
    for (int c = 0; c < dh; ++c) oi[c] = 0.0f;
    for (int j = 0; j < S; ++j) {
      const float* kj = pk + static_cast<int64_t>(j) * C + c0;
      float s = 0.0f;
#pragma omp simd reduction(+ : s)
      for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
      const float e = std::exp(s * scale - m);
      l += e;
      const float* vj = pv + static_cast<int64_t>(j) * C + c0;
      for (int c = 0; c < dh; ++c) oi[c] += e * vj[c];
    }
    const float rl = 1.0f / l;
    for (int c = 0; c < dh; ++c) oi[c] *= rl;
    mx.data()[ht] = m;
    lse.data()[ht] = l;
  });

  return make_op(std::move(out), {q, k, v},
                 [q, k, v, mx, lse, T, S, C, heads, dh, scale](Node& self) {
    const bool nq = q->requires_grad, nk = k->requires_grad, nv = v->requires_grad;
    if (!nq && !nk && !nv) return;
    if (nq) q->ensure_grad();
    if (nk) k->ensure_grad();
    if (nv) v->ensure_grad();
    const float* pq = q->val.data();
    const float* pk = k->val.data();
    const float* pv = v->val.data();
    const float* po = self.val.data();
    const float* g = self.grad.data();
    const float* pm = mx.data();
    const float* pl = lse.data();

    // Pass 1: query-side gradient, parallel over (head, query).
    if (nq) {
      float* gq = q->grad.data();
      par_for(static_cast<int64_t>(heads) * T, [&](int64_t ht) {
        const int hd = static_cast<int>(ht / T);
        const int64_t i = ht % T;
        const int c0 = hd * dh;
        const float* qi = pq + i * C + c0;
        const float* gi = g + i * C + c0;
        const float* oi = po + i * C + c0;
        const float m = pm[ht], rl = 1.0f / pl[ht];
        float D = 0.0f;
#pragma omp simd reduction(+ : D)
        for (int c = 0; c < dh; ++c) D += gi[c] * oi[c];
        float* dst = gq + i * C + c0;
        for (int j = 0; j < S; ++j) {
          const float* kj = pk + static_cast<int64_t>(j) * C + c0;
          const float* vj = pv + static_cast<int64_t>(j) * C + c0;
          float s = 0.0f, gv = 0.0f;
#pragma omp simd reduction(+ : s)
          for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
#pragma omp simd reduction(+ : gv)
          for (int c = 0; c < dh; ++c) gv += gi[c] * vj[c];
          const float p = std::exp(s * scale - m) * rl;
          const float coef = p * (gv - D) * scale;
          for (int c = 0; c < dh; ++c) dst[c] += coef * kj[c];
        }
      });
    }

    // Pass 2: key/value-side gradient, parallel over (head, key).
    if (nk || nv) {
      float* gk = nk ? k->grad.data() : nullptr;
      float* gv_ = nv ? v->grad.data() : nullptr;
      par_for(static_cast<int64_t>(heads) * S, [&](int64_t hs) {
        const int hd = static_cast<int>(hs / S);
        const int64_t j = hs % S;
        const int c0 = hd * dh;
        const float* kj = pk + j * C + c0;
        const float* vj = pv + j * C + c0;
        float* dk = nk ? gk + j * C + c0 : nullptr;
        float* dv = nv ? gv_ + j * C + c0 : nullptr;
        for (int i = 0; i < T; ++i) {
          const float* qi = pq + static_cast<int64_t>(i) * C + c0;
          const float* gi = g + static_cast<int64_t>(i) * C + c0;
          const float* oi = po + static_cast<int64_t>(i) * C + c0;
          const int64_t ht = static_cast<int64_t>(hd) * T + i;
          const float m = pm[ht], rl = 1.0f / pl[ht];
          float s = 0.0f;
#pragma omp simd reduction(+ : s)
          for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
          const float p = std::exp(s * scale - m) * rl;
          if (dv)
            for (int c = 0; c < dh; ++c) dv[c] += p * gi[c];
          if (dk) {
            float gvd = 0.0f, D = 0.0f;
#pragma omp simd reduction(+ : gvd)
            for (int c = 0; c < dh; ++c) gvd += gi[c] * vj[c];
#pragma omp simd reduction(+ : D)
            for (int c = 0; c < dh; ++c) D += gi[c] * oi[c];
            const float coef = p * (gvd - D) * scale;
            for (int c = 0; c < dh; ++c) dk[c] += coef * qi[c];
          }
        }
      });
    }
  });
}

Value reshape(const Value& x, std::vector<int> shape) {
  Tensor out = x->val.reshaped(shape);
  return make_op(std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    par_for(self.grad.numel(), [&](int64_t i) { gx[i] += g[i]; });
  });
}

Value chw_to_tokens(const Value& x) {
  check(x->val.rank() == 4, "chw_to_tokens: rank");
  const int N = x->val.dim(0), C = x->val.dim(1);
  const int64_t HW = static_cast<int64_t>(x->val.dim(2)) * x->val.dim(3);
  Tensor out({static_cast<int>(N * HW), C});
  const float* px = x->val.data();
  float* po = out.data();
  par_for(static_cast<int64_t>(N) * HW, [&](int64_t t) {
    const int64_t n = t / HW, p = t % HW;
    const float* src = px + (n * C) * HW + p;
    float* dst = po + t * C;
    for (int c = 0; c < C; ++c) dst[c] = src[static_cast<int64_t>(c) * HW];
  });
  return make_op(std::move(out), {x}, [x, N, C, HW](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    par_for(static_cast<int64_t>(N) * HW, [&](int64_t t) {
      const int64_t n = t / HW, p = t % HW;
      float* dst = gx + (n * C) * HW + p;
      const float* src = g + t * C;
      for (int c = 0; c < C; ++c) dst[static_cast<int64_t>(c) * HW] += src[c];
    });
  });
}

Value tokens_to_chw(const Value& x, int N, int C, int H, int W) {
  check(x->val.rank() == 2 && x->val.dim(1) == C &&
            x->val.dim(0) == N * H * W,
        "tokens_to_chw: shape");
  const int64_t HW = static_cast<int64_t>(H) * W;
  Tensor out({N, C, H, W});
  const float* px = x->val.data();
  float* po = out.data();
  par_for(static_cast<int64_t>(N) * HW, [&](int64_t t) {
    const int64_t n = t / HW, p = t % HW;
    const float* src = px + t * C;
    float* dst = po + (n * C) * HW + p;
    for (int c = 0; c < C; ++c) dst[static_cast<int64_t>(c) * HW] = src[c];
  });
  return make_op(std::move(out), {x}, [x, N, C, HW](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    par_for(static_cast<int64_t>(N) * HW, [&](int64_t t) {
      const int64_t n = t / HW, p = t % HW;
      const float* src = g + (n * C) * HW + p;
      float* dst = gx + t * C;
      for (int c = 0; c < C; ++c) dst[c] += src[static_cast<int64_t>(c) * HW];
    });
  });
}

Value concat_rows(const std::vector<Value>& xs) {
  check(!xs.empty(), "concat_rows: empty");
  const int C = xs[0]->val.dim(1);
  int T = 0;
  for (const auto& x : xs) {
    check(x->val.rank() == 2 && x->val.dim(1) == C, "concat_rows: shape");
    T += x->val.dim(0);
  }
  Tensor out({T, C});
  float* po = out.data();
  int64_t off = 0;
  for (const auto& x : xs) {
    std::memcpy(po + off, x->val.data(), sizeof(float) * x->val.numel());
    off += x->val.numel();
  }
  std::vector<Value> parents = xs;
  return make_op(std::move(out), std::move(parents), [xs](Node& self) {
    const float* g = self.grad.data();
    int64_t off = 0;
    for (const auto& x : xs) {
      if (x->requires_grad) {
        x->ensure_grad();
        float* gx = x->grad.data();
        const float* src = g + off;
        par_for(x->val.numel(), [&](int64_t i) { gx[i] += src[i]; });
      }
      off += x->val.numel();
    }
  });
}

Value slice_rows(const Value& x, int start, int len) {
  check(x->val.rank() == 2, "slice_rows: rank");
  const int T = x->val.dim(0), C = x->val.dim(1);
  check(start >= 0 && len >= 0 && start + len <= T, "slice_rows: range");
  Tensor out({len, C});
  std::memcpy(out.data(), x->val.data() + static_cast<int64_t>(start) * C,
              sizeof(float) * out.numel());
  return make_op(std::move(out), {x}, [x, start, C](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data() + static_cast<int64_t>(start) * C;
    par_for(self.grad.numel(), [&](int64_t i) { gx[i] += g[i]; });
  });
}

Value gather_rows(const Value& x, std::vector<int> idx) {
  check(x->val.rank() == 2, "gather_rows: rank");
  const int T = x->val.dim(0), C = x->val.dim(1);
  Tensor out({static_cast<int>(idx.size()), C});
  const float* px = x->val.data();
  float* po = out.data();
  for (size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < T, "gather_rows: index out of range");
    std::memcpy(po + i * C, px + static_cast<int64_t>(idx[i]) * C, sizeof(float) * C);
  }
  return make_op(std::move(out), {x}, [x, idx = std::move(idx), C](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    // Serial scatter: duplicate indices must accumulate deterministically.
    for (size_t i = 0; i < idx.size(); ++i) {
      float* dst = gx + static_cast<int64_t>(idx[i]) * C;
      const float* src = g + i * C;
      for (int c = 0; c < C; ++c) dst[c] += src[c];
    }
  });
}

Value concat_channels(const Value& a, const Value& b) {
  check(a->val.rank() == 4 && b->val.rank() == 4, "concat_channels: rank");
  const int N = a->val.dim(0), Ca = a->val.dim(1), Cb = b->val.dim(1);
  const int H = a->val.dim(2), W = a->val.dim(3);
  check(b->val.dim(0) == N && b->val.dim(2) == H && b->val.dim(3) == W,
        "concat_channels: shape");
  const int64_t HW = static_cast<int64_t>(H) * W;
  Tensor out({N, Ca + Cb, H, W});
  float* po = out.data();
  const float* pa = a->val.data();
  const float* pb = b->val.data();
  par_for(N, [&](int64_t n) {
    std::memcpy(po + n * (Ca + Cb) * HW, pa + n * Ca * HW, sizeof(float) * Ca * HW);
    std::memcpy(po + n * (Ca + Cb) * HW + Ca * HW, pb + n * Cb * HW,
                sizeof(float) * Cb * HW);
  });
  return make_op(std::move(out), {a, b}, [a, b, N, Ca, Cb, HW](Node& self) {
    const float* g = self.grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      float* ga = a->grad.data();
      par_for(N, [&](int64_t n) {
        const float* src = g + n * (Ca + Cb) * HW;
        float* dst = ga + n * Ca * HW;
        for (int64_t i = 0; i < Ca * HW; ++i) dst[i] += src[i];
      });
    }
    if (b->requires_grad) {
      b->ensure_grad();
      float* gb = b->grad.data();
      par_for(N, [&](int64_t n) {
        const float* src = g + n * (Ca + Cb) * HW + Ca * HW;
        float* dst = gb + n * Cb * HW;
        for (int64_t i = 0; i < Cb * HW; ++i) dst[i] += src[i];
      });
    }
  });
}

Value concat_cols(const Value& a, const Value& b) {
  check(a->val.rank() == 2 && b->val.rank() == 2 && a->val.dim(0) == b->val.dim(0),
        "concat_cols: shape");
  const int T = a->val.dim(0), Ca = a->val.dim(1), Cb = b->val.dim(1);
  Tensor out({T, Ca + Cb});
  const float* pa = a->val.data();
  const float* pb = b->val.data();
  float* po = out.data();
  par_for(T, [&](int64_t t) {
    std::memcpy(po + t * (Ca + Cb), pa + t * Ca, sizeof(float) * Ca);
    std::memcpy(po + t * (Ca + Cb) + Ca, pb + t * Cb, sizeof(float) * Cb);
  });
  return make_op(std::move(out), {a, b}, [a, b, T, Ca, Cb](Node& self) {
    const float* g = self.grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      float* ga = a->grad.data();
      par_for(T, [&](int64_t t) {
        for (int c = 0; c < Ca; ++c) ga[t * Ca + c] += g[t * (Ca + Cb) + c];
      });
    }
    if (b->requires_grad) {
      b->ensure_grad();
      float* gb = b->grad.data();
      par_for(T, [&](int64_t t) {
        for (int c = 0; c < Cb; ++c) gb[t * Cb + c] += g[t * (Ca + Cb) + Ca + c];
      });
    }
  });
}

Value stack_batch(const std::vector<Value>& xs) {
  check(!xs.empty() && xs[0]->val.rank() == 3, "stack_batch: expected [C,H,W] inputs");
  const int C = xs[0]->val.dim(0), H = xs[0]->val.dim(1), W = xs[0]->val.dim(2);
  const int64_t plane = static_cast<int64_t>(C) * H * W;
  Tensor out({static_cast<int>(xs.size()), C, H, W});
  float* po = out.data();
  for (size_t i = 0; i < xs.size(); ++i) {
    check(xs[i]->val.rank() == 3 && xs[i]->val.dim(0) == C && xs[i]->val.dim(1) == H &&
              xs[i]->val.dim(2) == W,
          "stack_batch: shape mismatch");
    std::memcpy(po + i * plane, xs[i]->val.data(), sizeof(float) * plane);
  }
  std::vector<Value> parents = xs;
  return make_op(std::move(out), std::move(parents), [xs, plane](Node& self) {
    const float* g = self.grad.data();
    for (size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i]->requires_grad) continue;
      xs[i]->ensure_grad();
      float* gx = xs[i]->grad.data();
      const float* src = g + i * plane;
      par_for(plane, [&](int64_t j) { gx[j] += src[j]; });
    }
  });
}

Value rows_to_channel_map(const Value& x, const std::vector<int>& cols, int total) {
  check(x->val.rank() == 2 && x->val.dim(0) == static_cast<int>(cols.size()),
        "rows_to_channel_map: shape");
  const int M = x->val.dim(0), K = x->val.dim(1);
  Tensor out({K, total});
  const float* px = x->val.data();
  float* po = out.data();
  for (int i = 0; i < M; ++i) {
    check(cols[i] >= 0 && cols[i] < total, "rows_to_channel_map: column out of range");
    for (int k = 0; k < K; ++k)
      po[static_cast<int64_t>(k) * total + cols[i]] = px[static_cast<int64_t>(i) * K + k];
  }
  return make_op(std::move(out), {x}, [x, cols, total, K](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* g = self.grad.data();
    float* gx = x->grad.data();
    for (size_t i = 0; i < cols.size(); ++i)
      for (int k = 0; k < K; ++k)
        gx[i * K + k] += g[static_cast<int64_t>(k) * total + cols[i]];
  });
}

Value mean_all(const Value& x) {
  const int64_t n = x->val.numel();
  double acc = 0.0;
  const float* px = x->val.data();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
  return make_op(std::move(out), {x}, [x, n](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float g = self.grad[0] / static_cast<float>(n);
    float* gx = x->grad.data();
    par_for(n, [&](int64_t i) { gx[i] += g; });
  });
}

Value mse(const Value& a, const Value& b) {
  check(a->val.same_shape(b->val), "mse: shape mismatch");
  const int64_t n = a->val.numel();
  const float* pa = a->val.data();
  const float* pb = b->val.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
  return make_op(std::move(out), {a, b}, [a, b, n](Node& self) {
    const float g = self.grad[0] * 2.0f / static_cast<float>(n);
    const float* pa = a->val.data();
    const float* pb = b->val.data();
    if (a->requires_grad) {
      a->ensure_grad();
      float* ga = a->grad.data();
      par_for(n, [&](int64_t i) { ga[i] += g * (pa[i] - pb[i]); });
    }
    if (b->requires_grad) {
      b->ensure_grad();
      float* gb = b->grad.data();
      par_for(n, [&](int64_t i) { gb[i] -= g * (pa[i] - pb[i]); });
    }
  });
}

Value weighted_sum(const std::vector<std::pair<float, Value>>& terms) {
  check(!terms.empty(), "weighted_sum: empty");
  double acc = 0.0;
  std::vector<Value> parents;
  for (const auto& [c, v] : terms) {
    check(v->val.numel() == 1, "weighted_sum: non-scalar term");
    acc += static_cast<double>(c) * v->val[0];
    parents.push_back(v);
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  return make_op(std::move(out), std::move(parents), [terms](Node& self) {
    const float g = self.grad[0];
    for (const auto& [c, v] : terms) {
      if (!v->requires_grad) continue;
      v->ensure_grad();
      v->grad[0] += g * c;
    }
  });
}

Value scale_by(const Value& x, const Value& s) {
  check(s->val.numel() == 1, "scale_by: scale must be scalar");
  const float sv = s->val[0];
  Tensor out(x->val.shape());
  const float* px = x->val.data();
  float* po = out.data();
  par_for(out.numel(), [&](int64_t i) { po[i] = px[i] * sv; });
  return make_op(std::move(out), {x, s}, [x, s, sv](Node& self) {
    const float* g = self.grad.data();
    if (x->requires_grad) {
      x->ensure_grad();
      float* gx = x->grad.data();
      par_for(self.grad.numel(), [&](int64_t i) { gx[i] += g[i] * sv; });
    }
    if (s->requires_grad) {
      s->ensure_grad();
      const float* px = x->val.data();
      double acc = 0.0;
      for (int64_t i = 0; i < self.grad.numel(); ++i)
        acc += static_cast<double>(g[i]) * px[i];
      s->grad[0] += static_cast<float>(acc);
    }
  });
}

}  // namespace gsav::nn
