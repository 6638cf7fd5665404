// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "nn/ops.h"
#include "nn/params.h"

namespace gsav::nn {

struct Linear {
  Value w, b;  // w [out,in]

  static Linear make(Init ctx, const std::string& name, int in, int out,
                     bool bias = true, bool zero_init = false) {
    Init c = ctx.sub(name);
    Linear l;
    const float bound = zero_init ? 0.0f : 1.0f / std::sqrt(static_cast<float>(in));
    l.w = c.param("w", {out, in}, bound);
    l.b = bias ? c.param("b", {out}, 0.0f) : Value{};
    return l;
  }

  Value fwd(const Value& x) const { return linear(x, w, b); }
};

struct Conv2d {
  Value w, b;  // w [out,in,k,k]
  int stride = 1, pad = 0;

  static Conv2d make(Init ctx, const std::string& name, int in, int out, int k,
                     int stride, int pad, bool bias = true, bool zero_init = false) {
    Init c = ctx.sub(name);
    Conv2d l;
    const float bound =
        zero_init ? 0.0f : 1.0f / std::sqrt(static_cast<float>(in * k * k));
    l.w = c.param("w", {out, in, k, k}, bound);
    l.b = bias ? c.param("b", {out}, 0.0f) : Value{};
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Value fwd(const Value& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LayerNormL {
  Value g, b;

  static LayerNormL make(Init ctx, const std::string& name, int C) {
    Init c = ctx.sub(name);
    return {c.param_full("g", {C}, 1.0f), c.param_full("b", {C}, 0.0f)};
  }

  Value fwd(const Value& x) const { return layer_norm(x, g, b); }
};

struct GroupNormL {
  Value g, b;
  int groups = 8;

  static GroupNormL make(Init ctx, const std::string& name, int C, int groups = 8) {
    Init c = ctx.sub(name);
    GroupNormL l;
    l.g = c.param_full("g", {C}, 1.0f);
    l.b = c.param_full("b", {C}, 0.0f);
    l.groups = groups;
    return l;
  }

  Value fwd(const Value& x) const { return group_norm(x, groups, g, b); }
};

// Projected single/multi-head attention: query tokens x attend over context
// tokens. zero_out makes the output projection an exact no-op at init (the
// adapter convention used throughout).
struct AttnBlock {
  Linear wq, wk, wv, wo;
  int heads = 1;

  static AttnBlock make(Init ctx, const std::string& name, int dim, int kv_dim,
                        int heads, bool zero_out = false) {
    Init c = ctx.sub(name);
    AttnBlock a;
    a.wq = Linear::make(c, "q", dim, dim, false);
    a.wk = Linear::make(c, "k", kv_dim, dim, false);
    a.wv = Linear::make(c, "v", kv_dim, dim, false);
    a.wo = Linear::make(c, "o", dim, dim, true, zero_out);
    a.heads = heads;
    return a;
  }

  Value fwd(const Value& x, const Value& context) const {
    return wo.fwd(attention(wq.fwd(x), wk.fwd(context), wv.fwd(context), heads));
  }
};

// Two-layer MLP with SiLU, hidden = mult * dim.
struct FeedForward {
  Linear fc1, fc2;

  static FeedForward make(Init ctx, const std::string& name, int dim, int mult = 2) {
    Init c = ctx.sub(name);
    return {Linear::make(c, "fc1", dim, dim * mult),
            Linear::make(c, "fc2", dim * mult, dim)};
  }

  Value fwd(const Value& x) const { return fc2.fwd(silu(fc1.fwd(x))); }
};

}  // namespace gsav::nn
