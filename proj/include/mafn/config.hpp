#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mafn/model.hpp"

namespace mafn {

struct TrainConfig {
  double lr = 3e-4;
  double weight_decay = 0.01;
  int batch = 8;
  int epochs = 40;
  uint64_t seed = 0;
  double early_stop_miou = 0.0;  // 0 disables early stopping
};

struct DataConfig {
  std::string dir;
  int image_size = 48;
};

// Flat "section.key = value" text config. Unknown keys are rejected so typos
// cannot silently fall back to defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  static RunConfig parse_text(const std::string& text);
  static RunConfig parse_file(const std::string& path);
  void apply_override(const std::string& key, const std::string& value);

  // normalized form: every key, one per line, deterministic order
  std::string to_text() const;
};

}  // namespace mafn
