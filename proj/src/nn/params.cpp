// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "nn/params.h"

#include <stdexcept>

namespace gsav::nn {

Value ParamStore::add(const std::string& group, const std::string& name, Tensor init,
                      bool trainable) {
  if (index_.count(name))
    throw std::runtime_error("ParamStore: duplicate parameter name: " + name);
  Value v = make_leaf(std::move(init));
  index_[name] = entries_.size();
  entries_.push_back({group, name, v, trainable});
  return v;
}

ParamStore::Entry* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& e : entries_)
    if (e.v->grad.defined()) e.v->grad.zero();
}

void ParamStore::set_group_trainable(const std::string& group, bool trainable) {
  for (auto& e : entries_)
    if (e.group == group) e.trainable = trainable;
}

std::unordered_map<std::string, Tensor> ParamStore::snapshot_group(
    const std::string& group) const {
  std::unordered_map<std::string, Tensor> out;
  for (const auto& e : entries_)
    if (e.group == group) out.emplace(e.name, e.v->val.clone());
  return out;
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.v->val.numel();
  return n;
}

}  // namespace gsav::nn
