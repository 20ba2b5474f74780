#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/io.hpp"
#include "core/synth.hpp"

namespace lb {

struct LossRecord {
  uint64_t step = 0;  // global step, pretrain and finetune phases combined
  Phase phase = Phase::Pretrain;
  double l_img = 0.0;
  double l_rad = 0.0;
  double l_bracket = 0.0;
  double total = 0.0;
};

std::string loss_csv_header();
std::string loss_csv_line(const LossRecord& r);

// Two-phase trainer: phase A fits the base weights on EV0 frames only, then
// phase B freezes them and fits the modulation branch, LoRA pairs, and codec
// on full bracket sets. Every random draw is keyed by (seed, site, step,
// sample), so state is exactly (params, optimizer moments, step counter) and
// resuming from a checkpoint is bit-identical to never having stopped.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  const RunConfig& config() const { return cfg_; }
  FlowDiT& model() { return model_; }
  const FlowDiT& model() const { return model_; }
  uint64_t step_count() const { return step_; }
  uint64_t total_steps() const;
  Phase phase() const;  // phase the NEXT step will run in

  LossRecord train_step();

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ck);  // config echo must match exactly

  const std::vector<DatasetRecord>& train_set() const { return train_set_; }

 private:
  double moment(const std::string& kind, const std::string& name, int64_t i) const;
  RunConfig cfg_;
  FlowDiT model_;
  std::vector<DatasetRecord> train_set_;
  // first/second adaptive moments, keyed "m.<param>" / "v.<param>"
  ParamStore moments_;
  uint64_t step_ = 0;
};

// First `scenes` non-held-out records of the dataset stream.
std::vector<DatasetRecord> training_scenes(const DataParams& data,
                                           const std::vector<double>& ev_list, int image_size);

// Space-separated vocabulary words to token ids; unknown words throw.
std::vector<int> parse_prompt(const std::string& prompt);

// Bracket-set sampling with the canonical noise-stream keying, so a
// (seed, steps, caption) triple names one reproducible output everywhere.
FlowDiT::SampleOut sample_prompt(const FlowDiT& model, const std::vector<int>& caption,
                                 uint64_t seed, int steps);

}  // namespace lb
