// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "metrics/perceptual.h"

#include <cmath>
#include <stdexcept>

#include "core/rng.h"

namespace gsav::metrics {

using nn::Value;

PerceptualNet::PerceptualNet(uint64_t seed) {
  Rng rng(seed);
  auto conv_init = [&](int out, int in) {
    return nn::make_const(
        Tensor::randn({out, in, 3, 3}, rng, 1.0f / std::sqrt(static_cast<float>(in * 9))));
  };
  w1_ = conv_init(8, 3);
  w2_ = conv_init(16, 8);
  w3_ = conv_init(32, 16);
}

std::vector<Value> PerceptualNet::features(const Value& x) const {
  if (x->val.rank() != 4 || x->val.dim(1) != 3)
    throw std::runtime_error("perceptual: expected [N,3,H,W]");
  std::vector<Value> feats;
  Value h = nn::tanh_v(nn::conv2d(x, w1_, nullptr, 1, 1));
  feats.push_back(nn::normalize_channels(h));
  h = nn::tanh_v(nn::conv2d(nn::avgpool2(h), w2_, nullptr, 1, 1));
  feats.push_back(nn::normalize_channels(h));
  h = nn::tanh_v(nn::conv2d(nn::avgpool2(h), w3_, nullptr, 1, 1));
  feats.push_back(nn::normalize_channels(h));
  return feats;
}

Value PerceptualNet::distance_val(const Value& a, const Value& b) const {
  const std::vector<Value> fa = features(a);
  const std::vector<Value> fb = features(b);
  std::vector<std::pair<float, Value>> terms;
  const float w = 1.0f / static_cast<float>(fa.size());
  for (size_t i = 0; i < fa.size(); ++i) terms.emplace_back(w, nn::mse(fa[i], fb[i]));
  return nn::weighted_sum(terms);
}

double PerceptualNet::distance(const Tensor& a, const Tensor& b) const {
  nn::NoGradGuard ng;
  auto shape4 = [](const Tensor& t) {
    if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
    return t;
  };
  return distance_val(nn::make_const(shape4(a)), nn::make_const(shape4(b)))->val.item();
}

}  // namespace gsav::metrics
