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

#include "iasr/instructions.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace iasr {

using nlohmann::json;

std::string split_name(Split s) {
  return s == Split::Seen ? "seen" : "unseen";
}

Split split_from_name(const std::string& name) {
  if (name == "seen") {
    return Split::Seen;
  }
  if (name == "unseen") {
    return Split::Unseen;
  }
  throw std::invalid_argument("unknown split: " + name);
}

namespace {

constexpr int kNumSkills = 5;

void check_prompt_text(const std::string& text, int line_no) {
  if (text.empty()) {
    throw std::runtime_error("bank line " + std::to_string(line_no) +
                             ": empty prompt text");
  }
  for (char c : text) {
    if (!((c >= 'a' && c <= 'z') || c == ' ')) {
      throw std::runtime_error("bank line " + std::to_string(line_no) +
                               ": prompt must use only a-z and spaces");
    }
  }
}

InstructionTemplate parse_template(const json& j, int line_no) {
  auto fail = [line_no](const std::string& msg) -> std::runtime_error {
    return std::runtime_error("bank line " + std::to_string(line_no) + ": " +
                              msg);
  };
  if (!j.is_object()) {
    throw fail("expected a JSON object");
  }
  if (!j.contains("skill") || !j.contains("text") || !j.contains("split")) {
    throw fail("missing skill/text/split field");
  }
  InstructionTemplate t;
  t.text = j["text"].get<std::string>();
  check_prompt_text(t.text, line_no);
  t.split = split_from_name(j["split"].get<std::string>());
  const std::string skill_str = j["skill"].get<std::string>();
  const std::optional<Skill> skill = skill_from_name(skill_str);
  if (!skill) {
    throw fail("unknown skill: " + skill_str);
  }
  try {
    switch (*skill) {
      case Skill::Transcribe:
        t.spec = SkillSpec::transcribe();
        break;
      case Skill::Ignore:
        t.spec = SkillSpec::ignore();
        break;
      case Skill::Replace: {
        if (!j.contains("mode") || !j.contains("src")) {
          throw fail("replace template needs mode and src");
        }
        const std::string mode_str = j["mode"].get<std::string>();
        const std::optional<ReplaceMode> mode =
            replace_mode_from_name(mode_str);
        if (!mode) {
          throw fail("unknown replace mode: " + mode_str);
        }
        const std::string src = j["src"].get<std::string>();
        std::optional<std::string> dst;
        if (*mode != ReplaceMode::Delete) {
          if (!j.contains("dst")) {
            throw fail("replace template needs dst for common/ood mode");
          }
          dst = j["dst"].get<std::string>();
        }
        t.spec = SkillSpec::replace(*mode, src, dst);
        break;
      }
      case Skill::Manipulate: {
        if (!j.contains("mode")) {
          throw fail("manipulate template needs mode");
        }
        const std::string mode_str = j["mode"].get<std::string>();
        const std::optional<ManipulateMode> mode =
            manipulate_mode_from_name(mode_str);
        if (!mode) {
          throw fail("unknown manipulate mode: " + mode_str);
        }
        int count = 2;
        if (j.contains("count")) {
          count = j["count"].get<int>();
        }
        t.spec = SkillSpec::manipulate(*mode, count);
        break;
      }
      case Skill::Summarize:
        t.spec = SkillSpec::summarize();
        break;
    }
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  return t;
}

}  // namespace

InstructionBank InstructionBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open instruction bank: " + path.string());
  }
  InstructionBank bank;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("bank line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    bank.templates_.push_back(parse_template(j, line_no));
  }
  if (bank.templates_.empty()) {
    throw std::runtime_error("instruction bank has no templates: " +
                             path.string());
  }
  bank.index();
  for (int s = 0; s < kNumSkills; ++s) {
    const Skill skill = static_cast<Skill>(s);
    if (bank.seen(skill).empty()) {
      throw std::runtime_error("instruction bank has no seen templates for " +
                               std::string(skill_name(skill)));
    }
    if (bank.unseen(skill).empty()) {
      log_warn("instruction bank has no unseen templates for " +
               std::string(skill_name(skill)));
    }
  }
  return bank;
}

void InstructionBank::index() {
  seen_.assign(kNumSkills, {});
  unseen_.assign(kNumSkills, {});
  for (const InstructionTemplate& t : templates_) {
    const int s = static_cast<int>(t.spec.skill);
    (t.split == Split::Seen ? seen_ : unseen_)[s].push_back(&t);
  }
}

const std::vector<const InstructionTemplate*>& InstructionBank::seen(
    Skill s) const {
  return seen_.at(static_cast<std::size_t>(s));
}

const std::vector<const InstructionTemplate*>& InstructionBank::unseen(
    Skill s) const {
  return unseen_.at(static_cast<std::size_t>(s));
}

int reference_template_count(Skill s) {
  switch (s) {
    case Skill::Transcribe:
      return 500;
    case Skill::Ignore:
      return 500;
    case Skill::Replace:
      return 600;
    case Skill::Manipulate:
      return 300;
    case Skill::Summarize:
      return 100;
  }
  throw std::invalid_argument("unknown skill");
}

void SamplerConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0) {
    throw std::invalid_argument("sampler weights must be nonnegative");
  }
}

double SamplerConfig::probability(Skill s) const {
  validate();
  const double total = alpha + 3.0 + beta;
  switch (s) {
    case Skill::Transcribe:
      return alpha / total;
    case Skill::Ignore:
    case Skill::Replace:
    case Skill::Manipulate:
      return 1.0 / total;
    case Skill::Summarize:
      return beta / total;
  }
  throw std::invalid_argument("unknown skill");
}

Skill sample_skill(const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const double weights[kNumSkills] = {cfg.alpha, 1.0, 1.0, 1.0, cfg.beta};
  const double total = cfg.alpha + 3.0 + cfg.beta;
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (int s = 0; s < kNumSkills; ++s) {
    cum += weights[s];
    if (u < cum) {
      return static_cast<Skill>(s);
    }
  }
  return Skill::Summarize;
}

const InstructionTemplate& sample_instruction(const InstructionBank& bank,
                                              Skill s, Rng& rng) {
  const auto& pool = bank.seen(s);
  if (pool.empty()) {
    throw std::runtime_error("no seen templates for skill " +
                             std::string(skill_name(s)));
  }
  return *pool[rng.below(pool.size())];
}

std::vector<int> compose_tokens(const std::vector<int>& instruction_tokens,
                                const std::vector<int>& target_tokens) {
  std::vector<int> out;
  out.reserve(instruction_tokens.size() + target_tokens.size() + 2);
  out.insert(out.end(), instruction_tokens.begin(), instruction_tokens.end());
  out.push_back(Vocabulary::kEot);
  out.insert(out.end(), target_tokens.begin(), target_tokens.end());
  out.push_back(Vocabulary::kEos);
  return out;
}

TrainingSample build_sample(const std::string& utterance_id,
                            const Transcript& transcript,
                            const InstructionTemplate& tmpl,
                            const Vocabulary& vocab,
                            const SummarizeContext& ctx) {
  TrainingSample s;
  s.utterance_id = utterance_id;
  s.spec = tmpl.spec;
  s.instruction_text = tmpl.text;
  SummarizeContext local = ctx;
  local.utterance_id = utterance_id;
  const Transcript target = apply_skill(tmpl.spec, transcript, local);
  s.target_text = target.text();
  s.instruction_tokens = vocab.encode(s.instruction_text);
  s.target_tokens = vocab.encode(s.target_text);
  s.composed = compose_tokens(s.instruction_tokens, s.target_tokens);
  return s;
}

}  // namespace iasr
