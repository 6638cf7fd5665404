// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "nn/checkpoint.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "nn/optimizer.h"
#include "nn/params.h"

namespace gsav::nn {

namespace {
constexpr char kMagic[8] = {'G', 'S', 'A', 'V', 'C', 'K', 'P', '1'};
}

const Checkpoint::Item* Checkpoint::find(const std::string& name,
                                         const std::string& kind) const {
  for (const auto& it : items)
    if (it.name == name && it.kind == kind) return &it;
  return nullptr;
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  auto& jitems = header["items"] = nlohmann::json::array();
  for (const auto& it : items) {
    jitems.push_back({{"group", it.group},
                      {"name", it.name},
                      {"kind", it.kind},
                      {"shape", it.t.shape()}});
  }
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, 8);
  const uint64_t hlen = hs.size();
  os.write(reinterpret_cast<const char*>(&hlen), 8);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& it : items)
    os.write(reinterpret_cast<const char*>(it.t.data()),
             static_cast<std::streamsize>(it.t.numel() * sizeof(float)));
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("checkpoint: truncated header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& ji : header.at("items")) {
    Item it;
    it.group = ji.at("group").get<std::string>();
    it.name = ji.at("name").get<std::string>();
    it.kind = ji.at("kind").get<std::string>();
    std::vector<int> shape = ji.at("shape").get<std::vector<int>>();
    it.t = Tensor::zeros(shape);
    is.read(reinterpret_cast<char*>(it.t.data()),
            static_cast<std::streamsize>(it.t.numel() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated data: " + path);
    ck.items.push_back(std::move(it));
  }
  return ck;
}

Checkpoint Checkpoint::capture(const ParamStore& store, const AdamW* opt) {
  Checkpoint ck;
  const auto& entries = store.entries();
  for (const auto& e : entries) ck.add(e.group, e.name, "param", e.v->val.clone());
  if (opt) {
    auto* mut = const_cast<AdamW*>(opt);
    for (size_t i = 0; i < entries.size(); ++i) {
      if (i < mut->moment1().size() && mut->moment1()[i].defined()) {
        ck.add(entries[i].group, entries[i].name, "opt_m", mut->moment1()[i].clone());
        ck.add(entries[i].group, entries[i].name, "opt_v", mut->moment2()[i].clone());
      }
    }
    ck.meta["opt_step"] = opt->step_count();
  }
  return ck;
}

std::vector<std::string> Checkpoint::restore(ParamStore& store, AdamW* opt) const {
  std::vector<std::string> restored;
  auto& entries = store.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    const Item* it = find(e.name, "param");
    if (!it) throw std::runtime_error("checkpoint: missing parameter: " + e.name);
    if (!(it->t.same_shape(e.v->val)))
      throw std::runtime_error("checkpoint: shape mismatch for " + e.name + ": " +
                               it->t.shape_str() + " vs " + e.v->val.shape_str());
    std::memcpy(e.v->val.data(), it->t.data(), sizeof(float) * it->t.numel());
    restored.push_back(e.name);
    if (opt) {
      const Item* im = find(e.name, "opt_m");
      const Item* iv = find(e.name, "opt_v");
      if (im && iv) {
        if (opt->moment1().size() < entries.size()) {
          opt->moment1().resize(entries.size());
          opt->moment2().resize(entries.size());
        }
        opt->moment1()[i] = im->t.clone();
        opt->moment2()[i] = iv->t.clone();
      }
    }
  }
  if (opt && meta.contains("opt_step")) opt->set_step_count(meta["opt_step"].get<int64_t>());
  return restored;
}

}  // namespace gsav::nn
