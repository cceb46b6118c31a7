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

#include "iasr/trainer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace iasr {

void TrainConfig::validate() const {
  if (steps < 1 || batch_size < 1 || warmup_steps < 1 || decay_steps < 1) {
    throw std::invalid_argument("training step counts must be positive");
  }
  if (!(peak_lr > 0.0)) {
    throw std::invalid_argument("peak_lr must be positive");
  }
  if (!(final_fraction > 0.0) || final_fraction > 1.0) {
    throw std::invalid_argument("final_fraction must be in (0, 1]");
  }
  if (clip_norm < 0.0) {
    throw std::invalid_argument("clip_norm must be >= 0");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 ||
      !(adam_eps > 0.0)) {
    throw std::invalid_argument("bad Adam hyperparameters");
  }
  if (log_every < 1) {
    throw std::invalid_argument("log_every must be >= 1");
  }
}

double learning_rate_at(const TrainConfig& cfg, int step) {
  if (step < 0) {
    throw std::invalid_argument("step must be >= 0");
  }
  if (step <= cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  }
  const double progress =
      std::min(1.0, static_cast<double>(step - cfg.warmup_steps) /
                        static_cast<double>(cfg.decay_steps));
  return cfg.peak_lr * std::pow(cfg.final_fraction, progress);
}

Trainer::Trainer(Model& model, const TrainConfig& cfg, const TrainData& data)
    : model_(model), cfg_(cfg), data_(data) {
  cfg_.validate();
  if (data_.utterances == nullptr || data_.utterances->empty()) {
    throw std::invalid_argument("trainer needs a non-empty utterance list");
  }
  if (data_.vocab == nullptr) {
    throw std::invalid_argument("trainer needs a vocabulary");
  }
  if (!cfg_.transcribe_only && data_.bank == nullptr) {
    throw std::invalid_argument("trainer needs an instruction bank");
  }
  data_.sampler.validate();
  adam_m_.reserve(model_.params().size());
  adam_v_.reserve(model_.params().size());
  for (const Parameter& prm : model_.params()) {
    adam_m_.push_back(Mat::Zero(prm.value.rows(), prm.value.cols()));
    adam_v_.push_back(Mat::Zero(prm.value.rows(), prm.value.cols()));
  }
}

std::vector<int> Trainer::draw_composed(const Utterance& u, Rng& rng) const {
  if (cfg_.transcribe_only) {
    std::vector<int> out = data_.vocab->encode(u.transcript.text());
    out.push_back(Vocabulary::kEos);
    return out;
  }
  const Skill skill = sample_skill(data_.sampler, rng);
  const InstructionTemplate& tmpl =
      sample_instruction(*data_.bank, skill, rng);
  SummarizeContext ctx;
  ctx.stats = data_.stats;
  ctx.overrides = data_.overrides;
  const TrainingSample sample =
      build_sample(u.id, u.transcript, tmpl, *data_.vocab, ctx);
  return sample.composed;
}

double Trainer::run_step() {
  step_ += 1;
  Rng rng(derive_seed(cfg_.seed, "step", static_cast<std::uint64_t>(step_)));
  const std::vector<Utterance>& utts = *data_.utterances;

  std::vector<Mat> gsum;
  gsum.reserve(model_.params().size());
  for (const Parameter& prm : model_.params()) {
    gsum.push_back(Mat::Zero(prm.value.rows(), prm.value.cols()));
  }

  double loss_sum = 0.0;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const Utterance& u = utts[rng.below(utts.size())];
    const std::vector<int> composed = draw_composed(u, rng);
    FeatMat features = u.features;
    if (cfg_.augment.enabled) {
      const int rows = static_cast<int>(features.rows());
      const int cols = static_cast<int>(features.cols());
      const int mt = std::min(cfg_.augment.max_t, rows - 1);
      const int mf = std::min(cfg_.augment.max_f, cols - 1);
      features = spec_augment(features, rng, cfg_.augment.time_masks,
                              cfg_.augment.freq_masks, std::max(0, mt),
                              std::max(0, mf));
    }
    LossGraph g = model_.build_composed_loss(features, composed,
                                             cfg_.target_only_loss, &rng);
    g.tape->backward(g.loss);
    loss_sum += g.loss_value();
    for (std::size_t i = 0; i < gsum.size(); ++i) {
      gsum[i] += g.tape->grad(g.param_vars[i]);
    }
  }

  const double loss = loss_sum / static_cast<double>(cfg_.batch_size);
  if (!std::isfinite(loss)) {
    throw std::runtime_error("training diverged at step " +
                             std::to_string(step_) + " (non-finite loss)");
  }
  last_loss_ = loss;

  double sq_norm = 0.0;
  for (Mat& gm : gsum) {
    gm /= static_cast<double>(cfg_.batch_size);
    sq_norm += gm.squaredNorm();
  }
  const double norm = std::sqrt(sq_norm);
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
    const double scale = cfg_.clip_norm / norm;
    for (Mat& gm : gsum) {
      gm *= scale;
    }
  }

  const double lr = learning_rate_at(cfg_, step_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  std::vector<Parameter>& params = model_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_m_[i] = cfg_.beta1 * adam_m_[i] + (1.0 - cfg_.beta1) * gsum[i];
    adam_v_[i] = cfg_.beta2 * adam_v_[i] +
                 (1.0 - cfg_.beta2) * gsum[i].cwiseProduct(gsum[i]);
    const Mat mhat = adam_m_[i] / bc1;
    const Mat vhat = adam_v_[i] / bc2;
    params[i].value.array() -=
        lr * mhat.array() / (vhat.array().sqrt() + cfg_.adam_eps);
  }
  return loss;
}

void Trainer::run(const std::function<void(int, double)>& on_step) {
  while (step_ < cfg_.steps) {
    const double loss = run_step();
    if (step_ % cfg_.log_every == 0 || step_ == cfg_.steps) {
      std::ostringstream msg;
      msg << "step " << step_ << "/" << cfg_.steps << " loss " << loss
          << " lr " << learning_rate_at(cfg_, step_);
      log_info(msg.str());
    }
    if (on_step) {
      on_step(step_, loss);
    }
  }
}

double Trainer::current_lr() const {
  return learning_rate_at(cfg_, std::max(1, step_));
}

}  // namespace iasr
