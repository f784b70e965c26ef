#pragma once

#include <string>

#include "dcdm/model.hpp"

namespace dcdm {

// Everything a training run needs beyond the model architecture.
struct TrainConfig {
  int batch_size = 8;
  int max_steps = 2000;
  int warmup_steps = 100;
  double peak_lr = 3e-4;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double eps_t = 1e-3;
  double eta_b = 1e-3;
  int bias_interval = 1;
  int checkpoint_every = 1000;
  std::string corpus;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  void validate() const;
};

// Flat key=value lines; '#' starts a comment; blank lines ignored. Unknown or
// duplicate keys are rejected by name. Values are type-checked per key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical round-trippable rendering (every key, one per line, sorted layout).
std::string serialize_config(const RunConfig& cfg);

}  // namespace dcdm
