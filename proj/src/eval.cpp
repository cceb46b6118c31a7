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

#include "iasr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace iasr {

namespace {

// Edit-distance DP table over words; dp(i, j) is the cost of aligning
// the first i reference words with the first j hypothesis words.
std::vector<std::vector<long long>> edit_table(
    const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::vector<long long>> dp(
      n + 1, std::vector<long long>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) {
    dp[i][0] = static_cast<long long>(i);
  }
  for (std::size_t j = 0; j <= m; ++j) {
    dp[0][j] = static_cast<long long>(j);
  }
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const long long sub = dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const long long del = dp[i - 1][j] + 1;
      const long long ins = dp[i][j - 1] + 1;
      dp[i][j] = std::min(sub, std::min(del, ins));
    }
  }
  return dp;
}

}  // namespace

double WerCounts::wer() const {
  const long long denom = std::max<long long>(ref_words, 1);
  return static_cast<double>(edits()) / static_cast<double>(denom);
}

WerCounts& WerCounts::operator+=(const WerCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_words += o.ref_words;
  rate_undefined = rate_undefined || o.rate_undefined;
  return *this;
}

WerCounts word_errors(const Transcript& ref, const Transcript& hyp) {
  const auto dp = edit_table(ref.words, hyp.words);
  WerCounts c;
  c.ref_words = static_cast<long long>(ref.size());
  c.rate_undefined = ref.empty() && !hyp.empty();
  std::size_t i = ref.size();
  std::size_t j = hyp.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const long long step = ref.words[i - 1] == hyp.words[j - 1] ? 0 : 1;
      if (dp[i][j] == dp[i - 1][j - 1] + step) {
        c.substitutions += step;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      c.deletions += 1;
      --i;
      continue;
    }
    c.insertions += 1;
    --j;
  }
  return c;
}

double normalized_distance(const Transcript& a, const Transcript& b) {
  const auto dp = edit_table(a.words, b.words);
  const long long edits = dp[a.size()][b.size()];
  const std::size_t denom = std::max<std::size_t>(std::max(a.size(), b.size()), 1);
  return static_cast<double>(edits) / static_cast<double>(denom);
}

bool summary_plausible(const Transcript& source, const Transcript& output,
                       double brevity, double overlap) {
  if (output.empty()) {
    return false;
  }
  const double len_ratio = static_cast<double>(output.size()) /
                           static_cast<double>(std::max<std::size_t>(
                               source.size(), 1));
  if (len_ratio > brevity) {
    return false;
  }
  const std::set<std::string> src_words(source.words.begin(),
                                        source.words.end());
  std::size_t hits = 0;
  for (const std::string& w : output.words) {
    if (src_words.count(w) > 0) {
      ++hits;
    }
  }
  const double frac =
      static_cast<double>(hits) / static_cast<double>(output.size());
  return frac >= overlap;
}

BehaviorCall classify_behavior(const Transcript& source,
                               const Transcript& output,
                               const std::vector<SkillSpec>& candidates,
                               const SummarizeContext& ctx) {
  if (candidates.empty()) {
    throw std::invalid_argument("classify_behavior needs candidates");
  }
  if (output.empty()) {
    return BehaviorCall{SkillSpec::ignore(), 0.0};
  }
  std::vector<SkillSpec> ordered = candidates;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SkillSpec& a, const SkillSpec& b) {
                     return a.order_key() < b.order_key();
                   });
  bool have = false;
  BehaviorCall best;
  for (const SkillSpec& cand : ordered) {
    double d;
    if (cand.skill == Skill::Summarize) {
      d = summary_plausible(source, output) ? 0.0 : 1.0;
    } else {
      d = normalized_distance(apply_skill(cand, source, ctx), output);
    }
    if (!have || d < best.distance) {
      have = true;
      best.spec = cand;
      best.distance = d;
    }
  }
  return best;
}

std::vector<SkillSpec> candidate_set(const std::vector<SkillSpec>& specs) {
  std::vector<SkillSpec> out;
  out.push_back(SkillSpec::transcribe());
  out.push_back(SkillSpec::ignore());
  out.insert(out.end(), specs.begin(), specs.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const SkillSpec& a, const SkillSpec& b) {
                     if (a.order_key() != b.order_key()) {
                       return a.order_key() < b.order_key();
                     }
                     return a.describe() < b.describe();
                   });
  std::vector<SkillSpec> dedup;
  for (const SkillSpec& s : out) {
    if (dedup.empty() || dedup.back().describe() != s.describe()) {
      dedup.push_back(s);
    }
  }
  return dedup;
}

std::vector<EvalTask> build_suite_tasks(const std::vector<Utterance>& utts,
                                        const InstructionBank& bank,
                                        Split split, int templates_per_skill,
                                        int utterances_per_template) {
  if (templates_per_skill < 1 || utterances_per_template < 1) {
    throw std::invalid_argument("suite sizes must be positive");
  }
  if (utts.empty()) {
    throw std::invalid_argument("suite needs utterances");
  }
  const std::size_t n_utts = std::min<std::size_t>(
      utts.size(), static_cast<std::size_t>(utterances_per_template));
  std::vector<EvalTask> tasks;
  for (int s = 0; s < kSkillCount; ++s) {
    const Skill skill = static_cast<Skill>(s);
    const auto& tmpls =
        split == Split::Seen ? bank.seen(skill) : bank.unseen(skill);
    if (tmpls.empty()) {
      throw std::invalid_argument(std::string("no ") + split_name(split) +
                                  " templates for skill " +
                                  skill_name(skill));
    }
    const std::size_t n_tmpls = std::min<std::size_t>(
        tmpls.size(), static_cast<std::size_t>(templates_per_skill));
    for (std::size_t t = 0; t < n_tmpls; ++t) {
      for (std::size_t u = 0; u < n_utts; ++u) {
        tasks.push_back(EvalTask{&utts[u], tmpls[t]});
      }
    }
  }
  return tasks;
}

const SkillReport& EvalReport::skill(Skill s, Split sp) const {
  return by_skill[static_cast<std::size_t>(s)][static_cast<std::size_t>(sp)];
}

SkillReport EvalReport::skill_total(Skill s) const {
  SkillReport r;
  for (const SkillReport& part : by_skill[static_cast<std::size_t>(s)]) {
    r.total += part.total;
    r.correct += part.correct;
  }
  return r;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s\n", "skill", "seen",
                "unseen", "overall");
  out += line;
  for (int s = 0; s < kSkillCount; ++s) {
    const Skill skill = static_cast<Skill>(s);
    const SkillReport& seen = report.skill(skill, Split::Seen);
    const SkillReport& unseen = report.skill(skill, Split::Unseen);
    const SkillReport total = report.skill_total(skill);
    if (total.total == 0) {
      continue;
    }
    auto cell = [](const SkillReport& r) {
      if (r.total == 0) {
        return std::string("   -");
      }
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%6.1f%%", 100.0 * r.accuracy());
      return std::string(buf);
    };
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s\n",
                  skill_name(skill), cell(seen).c_str(),
                  cell(unseen).c_str(), cell(total).c_str());
    out += line;
  }
  if (report.transcribe_wer.ref_words > 0) {
    std::snprintf(line, sizeof(line),
                  "transcribe wer %.2f%% (%lld sub %lld del %lld ins / %lld)\n",
                  100.0 * report.transcribe_wer.wer(),
                  report.transcribe_wer.substitutions,
                  report.transcribe_wer.deletions,
                  report.transcribe_wer.insertions,
                  report.transcribe_wer.ref_words);
    out += line;
  }
  if (report.decode_failures > 0) {
    std::snprintf(line, sizeof(line), "decode failures: %d\n",
                  report.decode_failures);
    out += line;
  }
  out += "confusion (rows expected, cols classified):\n";
  std::snprintf(line, sizeof(line), "%-12s", "");
  out += line;
  for (int c = 0; c < kSkillCount; ++c) {
    std::snprintf(line, sizeof(line), " %10s",
                  skill_name(static_cast<Skill>(c)));
    out += line;
  }
  out += "\n";
  for (int r = 0; r < kSkillCount; ++r) {
    std::snprintf(line, sizeof(line), "%-12s", skill_name(static_cast<Skill>(r)));
    out += line;
    for (int c = 0; c < kSkillCount; ++c) {
      std::snprintf(line, sizeof(line), " %10d",
                    report.confusion[static_cast<std::size_t>(r)]
                                    [static_cast<std::size_t>(c)]);
      out += line;
    }
    out += "\n";
  }
  return out;
}

EvalReport evaluate_suite(const Model& model, const Vocabulary& vocab,
                          const std::vector<EvalTask>& tasks,
                          const EvalOptions& opts) {
  if (tasks.empty()) {
    throw std::invalid_argument("evaluation suite is empty");
  }
  std::vector<SkillSpec> task_specs;
  task_specs.reserve(tasks.size());
  for (const EvalTask& t : tasks) {
    if (t.utt == nullptr || t.tmpl == nullptr) {
      throw std::invalid_argument("evaluation task missing utterance/template");
    }
    task_specs.push_back(t.tmpl->spec);
  }
  const std::vector<SkillSpec> candidates = candidate_set(task_specs);

  EvalReport report;
  report.items.reserve(tasks.size());
  for (const EvalTask& t : tasks) {
    SummarizeContext ctx = opts.ctx;
    ctx.utterance_id = t.utt->id;

    EvalItem item;
    item.utterance_id = t.utt->id;
    item.instruction = t.tmpl->text;
    item.split = t.tmpl->split;
    item.expected = t.tmpl->spec;
    const Transcript expected = apply_skill(t.tmpl->spec, t.utt->transcript, ctx);
    item.expected_text = expected.text();

    Transcript output;
    try {
      if (opts.decode_override) {
        output = Transcript::from_text(opts.decode_override(*t.utt, *t.tmpl));
      } else {
        const DecodeResult dr = decode_utterance(model, vocab, t.utt->features,
                                                 t.tmpl->text, opts.decode);
        output = Transcript::from_text(dr.text);
      }
    } catch (const std::exception& e) {
      item.decode_failed = true;
      report.decode_failures += 1;
      log_warn(std::string("decode failed for ") + t.utt->id + ": " +
               e.what());
    }
    item.output_text = output.text();
    item.distance = normalized_distance(expected, output);

    const BehaviorCall call =
        classify_behavior(t.utt->transcript, output, candidates, ctx);
    item.classified = call.spec;
    item.classified_distance = call.distance;

    for (const SkillSpec& cand : candidates) {
      if (cand.same_behavior(t.tmpl->spec)) {
        continue;
      }
      const Transcript r = apply_skill(cand, t.utt->transcript, ctx);
      if (r.text() == item.expected_text) {
        item.degenerate = true;
        break;
      }
    }

    bool behavior_ok = call.spec.same_behavior(t.tmpl->spec);
    if (!behavior_ok) {
      const Transcript winner =
          apply_skill(call.spec, t.utt->transcript, ctx);
      behavior_ok = winner.text() == item.expected_text;
    }
    item.correct = !item.decode_failed && behavior_ok &&
                   call.distance <= opts.delta + 1e-12;

    const std::size_t row = static_cast<std::size_t>(t.tmpl->spec.skill);
    const std::size_t col = static_cast<std::size_t>(call.spec.skill);
    report.confusion[row][col] += 1;
    auto& recipe = report.by_recipe[t.tmpl->spec.describe()];
    recipe.total += 1;
    auto& per_skill = report.by_skill[row][static_cast<std::size_t>(
        t.tmpl->split)];
    per_skill.total += 1;
    if (item.correct) {
      recipe.correct += 1;
      per_skill.correct += 1;
    }
    if (t.tmpl->spec.skill == Skill::Transcribe) {
      report.transcribe_wer += word_errors(t.utt->transcript, output);
    }
    report.items.push_back(std::move(item));
  }
  return report;
}

WerCounts transcription_wer(const Model& model, const Vocabulary& vocab,
                            const std::vector<Utterance>& utts,
                            const std::string& prompt,
                            const DecodeConfig& decode) {
  WerCounts total;
  for (const Utterance& u : utts) {
    const DecodeResult dr =
        decode_utterance(model, vocab, u.features, prompt, decode);
    total += word_errors(u.transcript, Transcript::from_text(dr.text));
  }
  return total;
}

WerCounts plain_transcription_wer(const Model& model, const Vocabulary& vocab,
                                  const std::vector<Utterance>& utts,
                                  const DecodeConfig& decode) {
  WerCounts total;
  const std::vector<int> prefix{Vocabulary::kBos};
  for (const Utterance& u : utts) {
    DecodeConfig cfg = decode;
    if (cfg.max_len == 0) {
      const int bound =
          static_cast<int>(u.features.rows()) / model.config().subsample;
      cfg.max_len = 2 * std::max(1, bound) + 16;
    }
    const Mat memory = model.encode(u.features);
    const std::vector<Hypothesis> nbest =
        beam_search(model, memory, prefix, cfg);
    const Transcript hyp =
        Transcript::from_text(vocab.decode(nbest.front().tokens));
    total += word_errors(u.transcript, hyp);
  }
  return total;
}

}  // namespace iasr
