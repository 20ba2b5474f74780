#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/dit.hpp"
#include "core/fusion.hpp"

namespace lb {

const char* tool_version();

struct TrainParams {
  double lr_base = 3e-3;   // phase A, base weights
  double lr_lora = 1e-2;   // phase B, adapter group
  double lr_mod = 2e-3;    // phase B, modulation group (1:5 vs adapter)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double lambda_rad = 1.0;
  double lambda_bracket = 0.5;
  int pretrain_steps = 400;
  int finetune_steps = 500;
  int batch = 8;
  void validate() const;
};

struct DataParams {
  int scenes = 64;  // training scenes; the held-out stream entries are skipped
  uint64_t seed = 2024;
  void validate() const;
};

// Every knob as a dotted key. apply() rejects unknown keys; serialize()
// echoes the full configuration in registry order for provenance, and
// apply(serialize()) is the identity.
struct RunConfig {
  ModelConfig model;
  FusionConfig fusion;
  TrainParams train;
  DataParams data;
  uint64_t seed = 1;           // master seed: model init and training noise
  int sample_steps = 8;        // Euler steps at generation time
  double tonemap_gamma = 2.2;  // display gamma for previews

  void apply(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void apply_pairs(const std::vector<std::pair<std::string, std::string>>& kv);
  std::string serialize() const;
  void validate() const;
};

std::vector<std::string> known_config_keys();

}  // namespace lb
