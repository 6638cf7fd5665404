// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "core/tensor.h"

namespace gsav::nn {

class ParamStore;
class AdamW;

// Single-file training archive: named parameter groups, optional optimizer
// moments, and a free-form JSON meta block (schedule, step counter, RNG
// state). Layout: magic, u64 JSON header length, header, raw float32 blobs
// in header order.
struct Checkpoint {
  struct Item {
    std::string group;
    std::string name;
    std::string kind;  // "param", "opt_m", "opt_v", "extra"
    Tensor t;
  };

  nlohmann::json meta;
  std::vector<Item> items;

  void add(const std::string& group, const std::string& name, const std::string& kind,
           Tensor t) {
    items.push_back({group, name, kind, std::move(t)});
  }
  const Item* find(const std::string& name, const std::string& kind) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Bridges to the runtime objects.
  static Checkpoint capture(const ParamStore& store, const AdamW* opt);
  // Copies values into matching parameters; throws on missing name or shape
  // mismatch. Returns the list of restored names.
  std::vector<std::string> restore(ParamStore& store, AdamW* opt) const;
};

}  // namespace gsav::nn
