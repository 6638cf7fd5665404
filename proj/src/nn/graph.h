// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/tensor.h"

namespace gsav::nn {

// Reverse-mode tape. Every op allocates a fresh output node; backward
// closures pull from node.grad and accumulate into the parents' grads.
struct Node;
using Value = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily, same shape as val
  bool requires_grad = false;
  std::vector<Value> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(val.shape());
  }
};

Value make_leaf(Tensor t);   // trainable: participates in grad flow
Value make_const(Tensor t);  // data: no gradient

// Output node for an op. Drops the tape when gradients are globally off or
// no parent needs them.
Value make_op(Tensor out, std::vector<Value> parents,
              std::function<void(Node&)> backward_fn);

bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Accumulates d(root)/d(leaf) into every reachable node's grad. root must be
// a scalar (numel 1) unless seed is supplied.
void backward(const Value& root, const Tensor* seed = nullptr);

}  // namespace gsav::nn
