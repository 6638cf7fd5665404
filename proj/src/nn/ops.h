// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "nn/graph.h"

namespace gsav::nn {

// Shapes in comments use T/S for token counts, C for channels, and
// [N,C,H,W] for image-like maps (N = views or batch).

// -- elementwise ------------------------------------------------------------
Value add(const Value& a, const Value& b);           // same shape
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value affine(const Value& x, float scale, float shift);  // scale*x + shift
Value silu(const Value& x);
Value tanh_v(const Value& x);
Value sigmoid_v(const Value& x);
Value exp_v(const Value& x);

// -- broadcast adds ----------------------------------------------------------
Value add_row_bias(const Value& x, const Value& b);      // [T,C] + [C]
Value add_channel_bias(const Value& x, const Value& b);  // [N,C,H,W] + [C]

// -- linear algebra ----------------------------------------------------------
// matmul(a [m,k], b [k,n]) -> [m,n]; trans flags use the stored shapes.
Value matmul(const Value& a, const Value& b, bool transA = false, bool transB = false);
// x [T,in] * W^T [in,out] + b -> [T,out]; b may be null.
Value linear(const Value& x, const Value& w, const Value& b);

// -- convolutions ------------------------------------------------------------
// x [N,C,H,W], w [O,C,kh,kw], b [O] (optional: pass nullptr Value).
Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad);
Value upsample_nearest2(const Value& x);
Value avgpool2(const Value& x);

// -- normalization -----------------------------------------------------------
Value group_norm(const Value& x, int groups, const Value& gamma, const Value& beta,
                 float eps = 1e-5f);
Value layer_norm(const Value& x, const Value& gamma, const Value& beta,
                 float eps = 1e-5f);
// Unit L2 norm across channels per (n,h,w); used by the perceptual distance.
Value normalize_channels(const Value& x, float eps = 1e-8f);

// -- attention ---------------------------------------------------------------
// Fused scaled dot-product attention. q [T,C], k/v [S,C]; memory stays
// O(T+S) per head: softmax statistics are streamed forward and probabilities
// recomputed in backward.
Value attention(const Value& q, const Value& k, const Value& v, int heads);

// -- shape movement ----------------------------------------------------------
Value reshape(const Value& x, std::vector<int> shape);
Value chw_to_tokens(const Value& x);   // [N,C,H,W] -> [N*H*W, C]
Value tokens_to_chw(const Value& x, int N, int C, int H, int W);
Value concat_rows(const std::vector<Value>& xs);       // [Ti,C] -> [sum T, C]
Value slice_rows(const Value& x, int start, int len);  // rows [start, start+len)
Value gather_rows(const Value& x, std::vector<int> idx);
Value concat_channels(const Value& a, const Value& b);  // along C of [N,C,H,W]
Value concat_cols(const Value& a, const Value& b);      // [T,C1],[T,C2] -> [T,C1+C2]
Value stack_batch(const std::vector<Value>& xs);        // k of [C,H,W] -> [k,C,H,W]
// Scatter rows [M,K] into a dense [K,total] map at the given columns;
// untouched columns stay zero.
Value rows_to_channel_map(const Value& x, const std::vector<int>& cols, int total);

// -- reductions / losses -----------------------------------------------------
Value mean_all(const Value& x);                  // -> scalar
Value mse(const Value& a, const Value& b);       // mean squared difference
Value weighted_sum(const std::vector<std::pair<float, Value>>& terms);  // scalars
Value scale_by(const Value& x, const Value& s);  // x * s, s a scalar Value

}  // namespace gsav::nn
