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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace iasr {

// A lowercase, whitespace-tokenized transcript. Words never contain
// whitespace and are never empty, so text() / from_text() round-trip.
struct Transcript {
  std::vector<std::string> words;

  static Transcript from_text(std::string_view text);
  std::string text() const;
  std::size_t size() const { return words.size(); }
  bool empty() const { return words.empty(); }
  bool operator==(const Transcript&) const = default;
};

// The five output behaviors an instruction can request, in taxonomy
// order. The order doubles as the tie-break priority when classifying
// decoded outputs.
enum class Skill { Transcribe = 0, Ignore, Replace, Manipulate, Summarize };

enum class ReplaceMode { CommonWord = 0, OodWord, Delete };
enum class ManipulateMode { Repeat = 0, FirstHalf, SecondHalf };

const char* skill_name(Skill s);
std::optional<Skill> skill_from_name(std::string_view name);
const char* replace_mode_name(ReplaceMode m);
const char* manipulate_mode_name(ManipulateMode m);
std::optional<ReplaceMode> replace_mode_from_name(std::string_view name);
std::optional<ManipulateMode> manipulate_mode_from_name(std::string_view name);

// A fully resolved target-construction recipe: which skill, which
// sub-task, and the word arguments for replacement.
struct SkillSpec {
  Skill skill = Skill::Transcribe;
  std::optional<ReplaceMode> replace_mode;
  std::optional<ManipulateMode> manipulate_mode;
  std::optional<std::string> src_word;
  std::optional<std::string> dst_word;
  int repeat_count = 2;

  // Throws std::invalid_argument when the sub-task/argument shape does
  // not match the skill (e.g. Replace without src, Transcribe with a
  // sub-task).
  void validate() const;

  // (skill, subtask) ordering used for deterministic tie-breaking.
  int order_key() const;
  std::string describe() const;
  bool same_behavior(const SkillSpec& other) const;

  static SkillSpec transcribe();
  static SkillSpec ignore();
  static SkillSpec replace(ReplaceMode mode, std::string src,
                           std::optional<std::string> dst);
  static SkillSpec manipulate(ManipulateMode mode, int repeat_count = 2);
  static SkillSpec summarize();
};

Transcript transform_transcribe(const Transcript& t);
Transcript transform_ignore(const Transcript& t);

// Replaces every word exactly equal to `src` with `dst`; removes it
// when `dst` is absent. Substring occurrences are left alone.
Transcript replace_word(const Transcript& t, const std::string& src,
                        const std::optional<std::string>& dst);

// Concatenates t with itself so the result holds n copies total.
// Rejects n < 1.
Transcript repeat_transcript(const Transcript& t, int n);

// First ceil(n/2) words; second_half returns the complement, so
// first_half(t) + second_half(t) == t.
Transcript first_half(const Transcript& t);
Transcript second_half(const Transcript& t);

// Word-frequency table for the summary heuristic's rarity ranking.
struct CorpusStats {
  std::map<std::string, long long> counts;

  long long count(const std::string& word) const;
  void add_transcript(const Transcript& t);
  static CorpusStats from_transcripts(const std::vector<Transcript>& ts);
};

bool is_stopword(const std::string& word);

// Deterministic extractive stand-in for the offline summary oracle:
// keep up to max_keywords distinct content words, ranked by corpus
// rarity then earliest position, emitted in original order. Falls back
// to the first word when every word is a stopword.
Transcript extractive_summary(const Transcript& t, int max_keywords,
                              const CorpusStats& stats);

// Optional per-utterance summary targets, loaded from JSON Lines
// records {"utterance_id": ..., "summary_text": ...}. Consulted before
// the extractive heuristic.
class SummaryOverrides {
 public:
  static SummaryOverrides load(const std::filesystem::path& path);

  const Transcript* find(const std::string& utterance_id) const;
  void set(const std::string& utterance_id, Transcript summary);
  std::size_t size() const { return by_id_.size(); }

 private:
  std::map<std::string, Transcript> by_id_;
};

struct SummarizeContext {
  const CorpusStats* stats = nullptr;
  const SummaryOverrides* overrides = nullptr;
  std::string utterance_id;
  int max_keywords = 5;
};

// Dispatches to the transform matching `spec`. Summarize consults
// ctx.overrides (keyed by utterance id) before the extractive
// heuristic.
Transcript apply_skill(const SkillSpec& spec, const Transcript& t,
                       const SummarizeContext& ctx = {});

}  // namespace iasr
