// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "nn/graph.h"

#include <stdexcept>
#include <unordered_set>

namespace gsav::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Value make_leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = true;
  return n;
}

Value make_const(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = false;
  return n;
}

Value make_op(Tensor out, std::vector<Value> parents,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->val = std::move(out);
  bool need = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p && p->requires_grad) { need = true; break; }
  }
  if (need) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Value& root, const Tensor* seed) {
  if (!root) throw std::runtime_error("backward: null root");
  if (!root->requires_grad) return;
  if (!seed && root->val.numel() != 1)
    throw std::runtime_error("backward: root is not a scalar and no seed given");

  // Iterative post-order DFS; recursion depth would blow up on deep graphs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  if (seed) {
    if (!seed->same_shape(root->val))
      throw std::runtime_error("backward: seed shape mismatch");
    float* g = root->grad.data();
    const float* s = seed->data();
    for (int64_t i = 0; i < seed->numel(); ++i) g[i] += s[i];
  } else {
    root->grad[0] += 1.0f;
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
  }
}

}  // namespace gsav::nn
