// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.h"
#include "nn/graph.h"

namespace gsav::nn {

// Registry of named parameters. Registration order is the canonical order
// for optimizer state and checkpoints; names are "<prefix><local>" and must
// be unique. Groups tag checkpoint sections and the freeze boundary.
class ParamStore {
 public:
  struct Entry {
    std::string group;
    std::string name;
    Value v;
    bool trainable = true;
  };

  Value add(const std::string& group, const std::string& name, Tensor init,
            bool trainable = true);

  Entry* find(const std::string& name);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  void zero_grads();
  void set_group_trainable(const std::string& group, bool trainable);

  // Deep copies of every tensor in a group, keyed by name.
  std::unordered_map<std::string, Tensor> snapshot_group(const std::string& group) const;

  int64_t total_params() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Threaded through module constructors: parameter registration context.
struct Init {
  ParamStore& store;
  Rng& rng;
  std::string group;
  std::string prefix;

  Init sub(const std::string& p) const { return {store, rng, group, prefix + p + "."}; }
  Init in_group(const std::string& g) const { return {store, rng, g, prefix}; }

  Value param(const std::string& name, std::vector<int> shape, float uniform_bound,
              bool trainable = true) {
    Tensor t = uniform_bound == 0.0f
                   ? Tensor::zeros(std::move(shape))
                   : Tensor::rand_uniform(std::move(shape), rng, -uniform_bound, uniform_bound);
    return store.add(group, prefix + name, std::move(t), trainable);
  }
  Value param_full(const std::string& name, std::vector<int> shape, float fill,
                   bool trainable = true) {
    return store.add(group, prefix + name, Tensor::full(std::move(shape), fill), trainable);
  }
  Value param_randn(const std::string& name, std::vector<int> shape, float stddev,
                    bool trainable = true) {
    return store.add(group, prefix + name, Tensor::randn(std::move(shape), rng, stddev),
                     trainable);
  }
};

}  // namespace gsav::nn
