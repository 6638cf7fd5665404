// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "nn/optimizer.h"

#include <cmath>

#include "kernels/kernels.h"

namespace gsav::nn {

void AdamW::step(ParamStore& store) {
  auto& entries = store.entries();
  if (m_.size() < entries.size()) {
    m_.resize(entries.size());
    v_.resize(entries.size());
  }
  ++t_;
  const float b1 = cfg_.beta1, b2 = cfg_.beta2;
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  for (size_t ei = 0; ei < entries.size(); ++ei) {
    auto& e = entries[ei];
    if (!e.trainable || !e.v->grad.defined()) continue;
    if (!m_[ei].defined()) {
      m_[ei] = Tensor::zeros(e.v->val.shape());
      v_[ei] = Tensor::zeros(e.v->val.shape());
    }
    float* w = e.v->val.data();
    const float* g = e.v->grad.data();
    float* m = m_[ei].data();
    float* v = v_[ei].data();
    const float lr = cfg_.lr, eps = cfg_.eps, wd = cfg_.weight_decay;
    kernels::par_for(e.v->val.numel(), [&](int64_t i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float mh = m[i] / bc1;
      const float vh = v[i] / bc2;
      w[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * w[i]);
    });
  }
}

}  // namespace gsav::nn
