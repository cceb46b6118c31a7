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

#include "iasr/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "iasr/common.hpp"
#include "json.hpp"

namespace iasr {

Transcript Transcript::from_text(std::string_view text) {
  return Transcript{split_words(text)};
}

std::string Transcript::text() const { return join_words(words); }

const char* skill_name(Skill s) {
  switch (s) {
    case Skill::Transcribe: return "transcribe";
    case Skill::Ignore: return "ignore";
    case Skill::Replace: return "replace";
    case Skill::Manipulate: return "manipulate";
    case Skill::Summarize: return "summarize";
  }
  return "?";
}

std::optional<Skill> skill_from_name(std::string_view name) {
  if (name == "transcribe") return Skill::Transcribe;
  if (name == "ignore") return Skill::Ignore;
  if (name == "replace") return Skill::Replace;
  if (name == "manipulate") return Skill::Manipulate;
  if (name == "summarize") return Skill::Summarize;
  return std::nullopt;
}

const char* replace_mode_name(ReplaceMode m) {
  switch (m) {
    case ReplaceMode::CommonWord: return "common_word";
    case ReplaceMode::OodWord: return "ood_word";
    case ReplaceMode::Delete: return "delete";
  }
  return "?";
}

const char* manipulate_mode_name(ManipulateMode m) {
  switch (m) {
    case ManipulateMode::Repeat: return "repeat";
    case ManipulateMode::FirstHalf: return "first_half";
    case ManipulateMode::SecondHalf: return "second_half";
  }
  return "?";
}

std::optional<ReplaceMode> replace_mode_from_name(std::string_view name) {
  if (name == "common_word") return ReplaceMode::CommonWord;
  if (name == "ood_word") return ReplaceMode::OodWord;
  if (name == "delete") return ReplaceMode::Delete;
  return std::nullopt;
}

std::optional<ManipulateMode> manipulate_mode_from_name(
    std::string_view name) {
  if (name == "repeat") return ManipulateMode::Repeat;
  if (name == "first_half") return ManipulateMode::FirstHalf;
  if (name == "second_half") return ManipulateMode::SecondHalf;
  return std::nullopt;
}

void SkillSpec::validate() const {
  const bool has_subtask = replace_mode.has_value() ||
                           manipulate_mode.has_value();
  if (skill == Skill::Replace) {
    if (!replace_mode || manipulate_mode)
      throw std::invalid_argument("replace skill requires a replace sub-task");
    if (!src_word)
      throw std::invalid_argument("replace skill requires src_word");
    const bool wants_dst = *replace_mode != ReplaceMode::Delete;
    if (wants_dst != dst_word.has_value())
      throw std::invalid_argument(
          "dst_word must be present exactly for common/ood replacement");
  } else if (skill == Skill::Manipulate) {
    if (!manipulate_mode || replace_mode)
      throw std::invalid_argument(
          "manipulate skill requires a manipulate sub-task");
    if (src_word || dst_word)
      throw std::invalid_argument("manipulate skill takes no word arguments");
    if (*manipulate_mode == ManipulateMode::Repeat && repeat_count < 1)
      throw std::invalid_argument("repeat count must be >= 1");
  } else {
    if (has_subtask || src_word || dst_word)
      throw std::invalid_argument(
          std::string(skill_name(skill)) +
          " skill takes no sub-task or word arguments");
  }
}

int SkillSpec::order_key() const {
  int sub = 0;
  if (replace_mode) sub = static_cast<int>(*replace_mode);
  if (manipulate_mode) sub = static_cast<int>(*manipulate_mode);
  return static_cast<int>(skill) * 8 + sub;
}

std::string SkillSpec::describe() const {
  std::string out = skill_name(skill);
  if (replace_mode) {
    out += "/";
    out += replace_mode_name(*replace_mode);
    out += " '" + (src_word ? *src_word : "") + "'";
    if (dst_word) out += "->'" + *dst_word + "'";
  }
  if (manipulate_mode) {
    out += "/";
    out += manipulate_mode_name(*manipulate_mode);
    if (*manipulate_mode == ManipulateMode::Repeat)
      out += " x" + std::to_string(repeat_count);
  }
  return out;
}

bool SkillSpec::same_behavior(const SkillSpec& other) const {
  if (skill != other.skill) return false;
  if (replace_mode != other.replace_mode) return false;
  if (manipulate_mode != other.manipulate_mode) return false;
  if (src_word != other.src_word || dst_word != other.dst_word) return false;
  if (manipulate_mode == ManipulateMode::Repeat &&
      repeat_count != other.repeat_count)
    return false;
  return true;
}

SkillSpec SkillSpec::transcribe() { return SkillSpec{}; }

SkillSpec SkillSpec::ignore() {
  SkillSpec s;
  s.skill = Skill::Ignore;
  return s;
}

SkillSpec SkillSpec::replace(ReplaceMode mode, std::string src,
                             std::optional<std::string> dst) {
  SkillSpec s;
  s.skill = Skill::Replace;
  s.replace_mode = mode;
  s.src_word = std::move(src);
  s.dst_word = std::move(dst);
  return s;
}

SkillSpec SkillSpec::manipulate(ManipulateMode mode, int repeat_count) {
  SkillSpec s;
  s.skill = Skill::Manipulate;
  s.manipulate_mode = mode;
  s.repeat_count = repeat_count;
  return s;
}

SkillSpec SkillSpec::summarize() {
  SkillSpec s;
  s.skill = Skill::Summarize;
  return s;
}

Transcript transform_transcribe(const Transcript& t) { return t; }

Transcript transform_ignore(const Transcript&) { return Transcript{}; }

Transcript replace_word(const Transcript& t, const std::string& src,
                        const std::optional<std::string>& dst) {
  Transcript out;
  out.words.reserve(t.words.size());
  for (const auto& w : t.words) {
    if (w == src) {
      if (dst) out.words.push_back(*dst);
    } else {
      out.words.push_back(w);
    }
  }
  return out;
}

Transcript repeat_transcript(const Transcript& t, int n) {
  if (n < 1) throw std::invalid_argument("repeat count must be >= 1");
  Transcript out;
  out.words.reserve(t.words.size() * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.words.insert(out.words.end(), t.words.begin(), t.words.end());
  return out;
}

Transcript first_half(const Transcript& t) {
  const std::size_t keep = (t.words.size() + 1) / 2;
  return Transcript{{t.words.begin(), t.words.begin() + keep}};
}

Transcript second_half(const Transcript& t) {
  const std::size_t skip = (t.words.size() + 1) / 2;
  return Transcript{{t.words.begin() + skip, t.words.end()}};
}

long long CorpusStats::count(const std::string& word) const {
  auto it = counts.find(word);
  return it == counts.end() ? 0 : it->second;
}

void CorpusStats::add_transcript(const Transcript& t) {
  for (const auto& w : t.words) ++counts[w];
}

CorpusStats CorpusStats::from_transcripts(const std::vector<Transcript>& ts) {
  CorpusStats stats;
  for (const auto& t : ts) stats.add_transcript(t);
  return stats;
}

bool is_stopword(const std::string& word) {
  static const std::set<std::string> kStopwords = {
      "a",     "an",    "and",   "are",   "as",    "at",    "be",    "been",
      "but",   "by",    "did",   "do",    "does",  "for",   "from",  "had",
      "has",   "have",  "he",    "her",   "his",   "i",     "if",    "in",
      "is",    "it",    "its",   "me",    "my",    "no",    "not",   "of",
      "on",    "or",    "our",   "she",   "so",    "that",  "the",   "their",
      "them",  "then",  "there", "these", "they",  "this",  "those", "to",
      "upon",  "was",   "we",    "were",  "who",   "will",  "with",  "would",
      "you",   "your"};
  return kStopwords.count(word) > 0;
}

Transcript extractive_summary(const Transcript& t, int max_keywords,
                              const CorpusStats& stats) {
  if (max_keywords < 1)
    throw std::invalid_argument("max_keywords must be >= 1");
  if (t.empty()) return Transcript{};

  // Distinct content words with their earliest position.
  struct Candidate {
    std::string word;
    std::size_t position;
    long long count;
  };
  std::vector<Candidate> candidates;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.words.size(); ++i) {
    const auto& w = t.words[i];
    if (is_stopword(w) || seen.count(w)) continue;
    seen.insert(w);
    candidates.push_back({w, i, stats.count(w)});
  }
  if (candidates.empty()) return Transcript{{t.words.front()}};

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.count != b.count) return a.count < b.count;
                     return a.position < b.position;
                   });
  if (candidates.size() > static_cast<std::size_t>(max_keywords))
    candidates.resize(static_cast<std::size_t>(max_keywords));
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.position < b.position;
            });

  Transcript out;
  for (const auto& c : candidates) out.words.push_back(c.word);
  return out;
}

SummaryOverrides SummaryOverrides::load(const std::filesystem::path& path) {
  SummaryOverrides overrides;
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open summary overrides: " +
                             path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": bad record: " + e.what());
    }
    if (!j.contains("utterance_id") || !j.contains("summary_text"))
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": record needs utterance_id and summary_text");
    overrides.set(j.at("utterance_id").get<std::string>(),
                  Transcript::from_text(
                      to_lower(j.at("summary_text").get<std::string>())));
  }
  return overrides;
}

const Transcript* SummaryOverrides::find(
    const std::string& utterance_id) const {
  auto it = by_id_.find(utterance_id);
  return it == by_id_.end() ? nullptr : &it->second;
}

void SummaryOverrides::set(const std::string& utterance_id,
                           Transcript summary) {
  by_id_[utterance_id] = std::move(summary);
}

Transcript apply_skill(const SkillSpec& spec, const Transcript& t,
                       const SummarizeContext& ctx) {
  spec.validate();
  switch (spec.skill) {
    case Skill::Transcribe:
      return transform_transcribe(t);
    case Skill::Ignore:
      return transform_ignore(t);
    case Skill::Replace:
      return replace_word(t, *spec.src_word, spec.dst_word);
    case Skill::Manipulate:
      switch (*spec.manipulate_mode) {
        case ManipulateMode::Repeat:
          return repeat_transcript(t, spec.repeat_count);
        case ManipulateMode::FirstHalf:
          return first_half(t);
        case ManipulateMode::SecondHalf:
          return second_half(t);
      }
      break;
    case Skill::Summarize: {
      if (ctx.overrides && !ctx.utterance_id.empty()) {
        if (const Transcript* s = ctx.overrides->find(ctx.utterance_id))
          return *s;
      }
      static const CorpusStats kUniform;
      return extractive_summary(t, ctx.max_keywords,
                                ctx.stats ? *ctx.stats : kUniform);
    }
  }
  throw std::logic_error("unreachable skill dispatch");
}

}  // namespace iasr
