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

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "iasr/decode.hpp"
#include "iasr/instructions.hpp"
#include "iasr/model.hpp"
#include "iasr/synth.hpp"
#include "iasr/text.hpp"
#include "iasr/tokenizer.hpp"

namespace iasr {

inline constexpr int kSkillCount = 5;
inline constexpr int kSplitCount = 2;

// Word-level Levenshtein alignment counts. Equal-cost ties prefer
// substitution, then deletion, then insertion.
struct WerCounts {
  long long substitutions = 0;
  long long deletions = 0;
  long long insertions = 0;
  long long ref_words = 0;
  // Set when a non-empty hypothesis was scored against an empty
  // reference; the counts stand but the rate has no real denominator.
  bool rate_undefined = false;

  long long edits() const { return substitutions + deletions + insertions; }
  // Fraction, not percent, over a denominator floored at one word.
  double wer() const;
  WerCounts& operator+=(const WerCounts& o);
};

WerCounts word_errors(const Transcript& ref, const Transcript& hyp);

// Word edit distance over max(|a|, |b|, 1), always in [0, 1].
double normalized_distance(const Transcript& a, const Transcript& b);

// Summary acceptance heuristic: output at most `brevity` of the source
// length and at least `overlap` of its words drawn from the source.
bool summary_plausible(const Transcript& source, const Transcript& output,
                       double brevity = 0.40, double overlap = 0.60);

struct BehaviorCall {
  SkillSpec spec;
  double distance = 0.0;
};

// Nearest-transform classification: applies every candidate recipe to
// the source and picks the one whose result is closest to the output
// under normalized_distance. Summarize candidates use a 0/1 pseudo
// distance from summary_plausible. Empty output is Ignore at distance
// zero. Ties go to the lower (skill, sub-task) order key.
BehaviorCall classify_behavior(const Transcript& source,
                               const Transcript& output,
                               const std::vector<SkillSpec>& candidates,
                               const SummarizeContext& ctx = {});

// Deduplicated candidate list from a set of task recipes, with plain
// transcription and empty output always present, sorted by order key.
std::vector<SkillSpec> candidate_set(const std::vector<SkillSpec>& specs);

struct EvalTask {
  const Utterance* utt = nullptr;
  const InstructionTemplate* tmpl = nullptr;
};

// For each skill, crosses the first `templates_per_skill` templates of
// `split` (bank order) with the first `utterances_per_template`
// utterances. Throws if some skill has no templates in the split.
std::vector<EvalTask> build_suite_tasks(const std::vector<Utterance>& utts,
                                        const InstructionBank& bank,
                                        Split split, int templates_per_skill,
                                        int utterances_per_template);

struct EvalOptions {
  DecodeConfig decode;
  double delta = 0.1;
  SummarizeContext ctx;
  // When set, replaces model decoding with a canned responder; grading
  // is unchanged. Lets the suite be driven without a trained model.
  std::function<std::string(const Utterance&, const InstructionTemplate&)>
      decode_override;
};

struct EvalItem {
  std::string utterance_id;
  std::string instruction;
  Split split = Split::Seen;
  SkillSpec expected;
  std::string expected_text;
  std::string output_text;
  // Distance between the decoded output and the expected transform.
  double distance = 0.0;
  SkillSpec classified;
  // Classifier distance for the winning candidate; this is what the
  // delta gate reads, so Summarize grading stays 0/1.
  double classified_distance = 0.0;
  // Expected transform collides with a different candidate's result on
  // this utterance, so the classifier cannot tell them apart.
  bool degenerate = false;
  bool decode_failed = false;
  bool correct = false;
};

struct SkillReport {
  int total = 0;
  int correct = 0;
  double accuracy() const { return total == 0 ? 0.0 : 1.0 * correct / total; }
};

struct EvalReport {
  std::vector<EvalItem> items;
  // Keyed by SkillSpec::describe().
  std::map<std::string, SkillReport> by_recipe;
  // Indexed [skill][split].
  std::array<std::array<SkillReport, kSplitCount>, kSkillCount> by_skill{};
  // confusion[expected][classified]; each row sums to the number of
  // evaluated pairs whose template carries that expected skill.
  std::array<std::array<int, kSkillCount>, kSkillCount> confusion{};
  // Accumulated over pairs whose expected skill is Transcribe.
  WerCounts transcribe_wer;
  int decode_failures = 0;

  const SkillReport& skill(Skill s, Split sp) const;
  SkillReport skill_total(Skill s) const;
};

// Human-readable accuracy table plus the confusion matrix.
std::string format_report(const EvalReport& report);

// Decodes every task and grades it. An item is correct when the
// classifier distance is within delta and either the classifier agrees
// with the expected recipe or the winning candidate's transform is the
// same string as the expected one (degenerate collision). A decode
// failure marks the row failed and incorrect instead of aborting.
EvalReport evaluate_suite(const Model& model, const Vocabulary& vocab,
                          const std::vector<EvalTask>& tasks,
                          const EvalOptions& opts);

// Corpus WER of beam-decoded transcriptions under one fixed prompt.
WerCounts transcription_wer(const Model& model, const Vocabulary& vocab,
                            const std::vector<Utterance>& utts,
                            const std::string& prompt,
                            const DecodeConfig& decode);

// Same measurement decoding from a bare [BOS], for models trained on
// plain transcription without instructions.
WerCounts plain_transcription_wer(const Model& model, const Vocabulary& vocab,
                                  const std::vector<Utterance>& utts,
                                  const DecodeConfig& decode);

}  // namespace iasr
