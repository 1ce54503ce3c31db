#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mafn/adamw.hpp"
#include "mafn/nn.hpp"
#include "mafn/tensor.hpp"

// Checkpoint file: magic "MAFN", version u32, entry count u32, then per entry
// (name length u32, name bytes, rank u32, dims u32 each, raw little-endian
// 32-bit floats). Optimizer moments, the step counter, training progress and
// the config snapshot travel as reserved "__..." entries in the same format
// (text is byte-per-float, which round-trips exactly).

namespace mafn {

struct CheckpointEntry {
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  // insertion order preserved for byte-identical rewrites
  std::vector<std::pair<std::string, CheckpointEntry>> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& [n, e] : entries)
      if (n == name) return &e;
    return nullptr;
  }

  void add(const std::string& name, Shape shape, std::vector<float> data) {
    entries.emplace_back(name, CheckpointEntry{std::move(shape), std::move(data)});
  }

  void add_scalar(const std::string& name, double v) { add(name, {1}, {float(v)}); }

  void add_text(const std::string& name, const std::string& text) {
    std::vector<float> buf(text.size());
    for (size_t i = 0; i < text.size(); ++i) buf[i] = float(uint8_t(text[i]));
    add(name, {int(text.size())}, std::move(buf));
  }

  std::string text(const std::string& name) const {
    const auto* e = find(name);
    if (!e) return {};
    std::string out;
    for (float v : e->data) out.push_back(char(uint8_t(v)));
    return out;
  }

  double scalar(const std::string& name, double fallback = 0.0) const {
    const auto* e = find(name);
    return e && !e->data.empty() ? double(e->data[0]) : fallback;
  }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write("MAFN", 4);
  auto put_u32 = [&out](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(1);  // version
  put_u32(uint32_t(ckpt.entries.size()));
  for (const auto& [name, e] : ckpt.entries) {
    put_u32(uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put_u32(uint32_t(e.shape.size()));
    for (int d : e.shape) put_u32(uint32_t(d));
    out.write(reinterpret_cast<const char*>(e.data.data()),
              std::streamsize(e.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open checkpoint");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "MAFN", 4) != 0)
    throw std::runtime_error(path + ": not a MAFN checkpoint");
  auto get_u32 = [&in, &path]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (in.gcount() != 4) throw std::runtime_error(path + ": truncated checkpoint");
    return v;
  };
  const uint32_t version = get_u32();
  if (version != 1) throw std::runtime_error(path + ": unsupported version");
  const uint32_t count = get_u32();
  Checkpoint ckpt;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32();
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rank = get_u32();
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = int(get_u32());
      numel *= shape[d];
    }
    std::vector<float> data(size_t(numel), 0.0f);
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(numel * 4));
    if (in.gcount() != std::streamsize(numel * 4))
      throw std::runtime_error(path + ": truncated checkpoint");
    ckpt.add(name, std::move(shape), std::move(data));
  }
  return ckpt;
}

// model + optimizer snapshot
template <typename T>
Checkpoint make_checkpoint(const ParamRegistry<T>& params, const AdamW<T>* opt, int epoch,
                           double best_miou, const std::string& config_text) {
  Checkpoint ckpt;
  for (const auto& [name, t] : params.items()) {
    std::vector<float> data(t.data().begin(), t.data().end());
    ckpt.add(name, t.shape(), std::move(data));
  }
  if (opt) {
    auto& m = const_cast<AdamW<T>*>(opt)->first_moments();
    auto& v = const_cast<AdamW<T>*>(opt)->second_moments();
    for (size_t p = 0; p < params.items().size(); ++p) {
      const auto& name = params.items()[p].first;
      ckpt.add("__opt_m__/" + name, params.items()[p].second.shape(),
               std::vector<float>(m[p].begin(), m[p].end()));
      ckpt.add("__opt_v__/" + name, params.items()[p].second.shape(),
               std::vector<float>(v[p].begin(), v[p].end()));
    }
    ckpt.add_scalar("__step__", double(const_cast<AdamW<T>*>(opt)->step_count()));
  }
  ckpt.add_scalar("__epoch__", double(epoch));
  ckpt.add_scalar("__best_miou__", best_miou);
  ckpt.add_text("__config__", config_text);
  return ckpt;
}

template <typename T>
void restore_params(const Checkpoint& ckpt, ParamRegistry<T>& params) {
  for (auto& [name, t] : params.items()) {
    const auto* e = ckpt.find(name);
    if (!e) throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
    if (e->shape != t.shape())
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                               shape_str(e->shape) + ", expected " + shape_str(t.shape()));
    for (size_t i = 0; i < e->data.size(); ++i) t.data()[i] = T(e->data[i]);
  }
}

template <typename T>
void restore_optimizer(const Checkpoint& ckpt, const ParamRegistry<T>& params, AdamW<T>& opt) {
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  for (size_t p = 0; p < params.items().size(); ++p) {
    const auto& name = params.items()[p].first;
    const auto* em = ckpt.find("__opt_m__/" + name);
    const auto* ev = ckpt.find("__opt_v__/" + name);
    if (!em || !ev) throw std::runtime_error("checkpoint lacks optimizer state for '" + name + "'");
    for (size_t i = 0; i < em->data.size(); ++i) m[p][i] = T(em->data[i]);
    for (size_t i = 0; i < ev->data.size(); ++i) v[p][i] = T(ev->data[i]);
  }
  opt.set_step_count(int64_t(ckpt.scalar("__step__")));
}

}  // namespace mafn
