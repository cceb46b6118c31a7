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
#include <filesystem>
#include <string>
#include <vector>

#include "iasr/common.hpp"
#include "iasr/text.hpp"
#include "iasr/tokenizer.hpp"

namespace iasr {

enum class Split { Seen, Unseen };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// One natural-language prompt plus the transform it asks for.
struct InstructionTemplate {
  std::string text;
  SkillSpec spec;
  Split split = Split::Seen;
};

// Prompt collection grouped by skill and by seen/unseen split.
//
// File format: JSONL, one template per line with fields
//   skill: transcribe | ignore | replace | manipulate | summarize
//   text:  the prompt (lowercase a-z and spaces)
//   split: seen | unseen
// plus per-skill arguments: replace has mode (common|ood|delete), src
// and (for common/ood) dst; manipulate has mode (repeat|first_half|
// second_half) and optional count for repeat.
class InstructionBank {
 public:
  static InstructionBank load(const std::filesystem::path& path);

  std::size_t size() const { return templates_.size(); }
  const std::vector<InstructionTemplate>& templates() const {
    return templates_;
  }
  const std::vector<const InstructionTemplate*>& seen(Skill s) const;
  const std::vector<const InstructionTemplate*>& unseen(Skill s) const;

 private:
  void index();

  std::vector<InstructionTemplate> templates_;
  std::vector<std::vector<const InstructionTemplate*>> seen_;
  std::vector<std::vector<const InstructionTemplate*>> unseen_;
};

// Full-scale prompt counts per skill, for reference when scaling the
// bundled bank up.
int reference_template_count(Skill s);

// Skill mixture: Transcribe carries weight alpha, Ignore / Replace /
// Manipulate weight 1 each, Summarize weight beta. Probabilities are
// the weights over (alpha + 3 + beta). Weights may be zero but not
// negative.
struct SamplerConfig {
  double alpha = 56.0;
  double beta = 4.0;

  void validate() const;
  double probability(Skill s) const;
};

Skill sample_skill(const SamplerConfig& cfg, Rng& rng);

// Uniform draw over the bank's Seen templates for one skill.
const InstructionTemplate& sample_instruction(const InstructionBank& bank,
                                              Skill s, Rng& rng);

// One supervised pair. `composed` lays out instruction [EOT] target
// [EOS]; the decoder's [BOS] start token is added by the model, not
// stored here.
struct TrainingSample {
  std::string utterance_id;
  SkillSpec spec;
  std::string instruction_text;
  std::string target_text;
  std::vector<int> instruction_tokens;
  std::vector<int> target_tokens;
  std::vector<int> composed;
};

std::vector<int> compose_tokens(const std::vector<int>& instruction_tokens,
                                const std::vector<int>& target_tokens);

TrainingSample build_sample(const std::string& utterance_id,
                            const Transcript& transcript,
                            const InstructionTemplate& tmpl,
                            const Vocabulary& vocab,
                            const SummarizeContext& ctx);

}  // namespace iasr
