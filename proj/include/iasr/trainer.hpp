// Copyright 2026 the iasr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "iasr/instructions.hpp"
#include "iasr/model.hpp"
#include "iasr/synth.hpp"
#include "iasr/text.hpp"
#include "iasr/tokenizer.hpp"

namespace iasr {

struct AugmentConfig {
  bool enabled = true;
  int time_masks = 2;
  int freq_masks = 1;
  int max_t = 10;
  int max_f = 4;
};

struct TrainConfig {
  int steps = 4000;
  int batch_size = 16;
  double peak_lr = 1e-3;
  int warmup_steps = 800;
  int decay_steps = 3200;
  double final_fraction = 0.05;
  double clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool target_only_loss = false;
  // Trains [BOS] transcript [EOS] with no instruction at all, the
  // plain-transcription baseline.
  bool transcribe_only = false;
  std::uint64_t seed = 1234;
  int log_every = 200;
  AugmentConfig augment;

  void validate() const;
};

// Linear ramp from 0 at step 0 to peak_lr at warmup_steps, then
// geometric decay that reaches peak_lr * final_fraction after
// decay_steps more and holds there.
double learning_rate_at(const TrainConfig& cfg, int step);

struct TrainData {
  const std::vector<Utterance>* utterances = nullptr;
  const InstructionBank* bank = nullptr;
  const Vocabulary* vocab = nullptr;
  SamplerConfig sampler;
  const CorpusStats* stats = nullptr;
  const SummaryOverrides* overrides = nullptr;
};

// Adam over per-sample tape gradients. Each step draws its own RNG
// stream from (seed, step), so step N is reproducible regardless of
// how the steps before it were executed or logged.
class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& cfg, const TrainData& data);

  // One batch: sample utterances and instructions, accumulate
  // gradients, clip, apply Adam. Returns the mean batch loss; throws
  // std::runtime_error when the loss stops being finite.
  double run_step();
  // Runs until cfg.steps, logging every cfg.log_every steps. The
  // callback fires after every step with (step, loss); training state
  // does not depend on it.
  void run(const std::function<void(int, double)>& on_step = {});

  int step() const { return step_; }
  double last_loss() const { return last_loss_; }
  double current_lr() const;
  Model& model() { return model_; }

 private:
  std::vector<int> draw_composed(const Utterance& u, Rng& rng) const;

  Model& model_;
  TrainConfig cfg_;
  TrainData data_;
  int step_ = 0;
  double last_loss_ = 0.0;
  std::vector<Mat> adam_m_;
  std::vector<Mat> adam_v_;
};

}  // namespace iasr
