// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nn/params.h"

namespace gsav::nn {

// AdamW. State vectors are aligned with ParamStore registration order.
class AdamW {
 public:
  struct Config {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
  };

  explicit AdamW(Config cfg) : cfg_(cfg) {}

  void step(ParamStore& store);
  void zero_grad(ParamStore& store) { store.zero_grads(); }

  Config& config() { return cfg_; }
  int64_t step_count() const { return t_; }

  // Serialization hooks for resumable training.
  std::vector<Tensor>& moment1() { return m_; }
  std::vector<Tensor>& moment2() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  Config cfg_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace gsav::nn
