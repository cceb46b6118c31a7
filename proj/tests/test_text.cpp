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

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "iasr/common.hpp"
#include "iasr/text.hpp"

namespace iasr {
namespace {

// 15-word reference sentence used across the transform golden tests.
const char* kLong =
    "the influence with the timaeus has exercised upon posterity is due "
    "partly to a misunderstanding";

Transcript T(const std::string& s) { return Transcript::from_text(s); }

Transcript random_transcript(Rng& rng, int min_words, int max_words) {
  static const std::vector<std::string> pool = {
      "the", "a",  "storm", "horizon", "river", "quiet", "signal",
      "two", "of", "wind",  "lantern", "echo",  "its",   "gray"};
  const int n = rng.uniform_int(min_words, max_words);
  Transcript t;
  for (int i = 0; i < n; ++i) {
    t.words.push_back(pool[rng.below(pool.size())]);
  }
  return t;
}

TEST_CASE("transcript parsing collapses whitespace") {
  CHECK(T("  hello   world ").text() == "hello world");
  CHECK(to_lower("Hello WORLD") == "hello world");
  CHECK(T("").empty());
  CHECK(T("   ").empty());
  const Transcript t = T(kLong);
  CHECK(t.size() == 15);
  CHECK(Transcript::from_text(t.text()) == t);
}

TEST_CASE("transcribe is the identity") {
  CHECK(transform_transcribe(T(kLong)) == T(kLong));
  CHECK(transform_transcribe(T("")).empty());
  CHECK(transform_transcribe(T("hello")).text() == "hello");
}

TEST_CASE("ignore always yields the empty transcript") {
  CHECK(transform_ignore(T(kLong)).empty());
  CHECK(transform_ignore(T("")).empty());
  CHECK(transform_ignore(T("a b c")).empty());
}

TEST_CASE("replace_word golden outputs") {
  CHECK(replace_word(T(kLong), "the", "a").text() ==
        "a influence with a timaeus has exercised upon posterity is due "
        "partly to a misunderstanding");
  CHECK(replace_word(T(kLong), "the", "quokka").text() ==
        "quokka influence with quokka timaeus has exercised upon posterity "
        "is due partly to a misunderstanding");
  CHECK(replace_word(T(kLong), "the", std::nullopt).text() ==
        "influence with timaeus has exercised upon posterity is due partly "
        "to a misunderstanding");
}

TEST_CASE("replace_word touches whole words only") {
  CHECK(replace_word(T("there the"), "the", "a").text() == "there a");
  CHECK(replace_word(T("breathe the"), "the", "x").text() == "breathe x");
  // Zero occurrences is a valid no-op.
  CHECK(replace_word(T("a b c"), "zzz", "y") == T("a b c"));
}

TEST_CASE("replace_word soundness over random inputs") {
  Rng rng(101);
  for (int it = 0; it < 300; ++it) {
    const Transcript t = random_transcript(rng, 0, 10);
    const std::string src = "the";
    long long occurrences = 0;
    for (const auto& w : t.words) occurrences += w == src;

    const Transcript swapped = replace_word(t, src, "gray");
    CHECK(swapped.size() == t.size());
    for (const auto& w : swapped.words) CHECK(w != src);

    const Transcript dropped = replace_word(t, src, std::nullopt);
    CHECK(static_cast<long long>(dropped.size()) ==
          static_cast<long long>(t.size()) - occurrences);
    for (const auto& w : dropped.words) CHECK(w != src);
  }
}

TEST_CASE("repeat_transcript doubles and unrolls") {
  const std::string twice = std::string(kLong) + " " + kLong;
  CHECK(repeat_transcript(T(kLong), 2).text() == twice);
  CHECK(repeat_transcript(T(kLong), 2).size() == 30);
  CHECK(repeat_transcript(T("a b"), 1) == T("a b"));
  CHECK(repeat_transcript(T("a b"), 3).text() == "a b a b a b");
  CHECK_THROWS_AS(repeat_transcript(T("a"), 0), std::invalid_argument);
}

TEST_CASE("repeat_transcript length law") {
  Rng rng(7);
  for (int it = 0; it < 100; ++it) {
    const Transcript t = random_transcript(rng, 0, 6);
    const int n = rng.uniform_int(1, 4);
    CHECK(repeat_transcript(t, n).size() == t.size() * static_cast<size_t>(n));
  }
}

TEST_CASE("halves split at the word ceiling") {
  CHECK(first_half(T(kLong)).text() ==
        "the influence with the timaeus has exercised upon");
  CHECK(second_half(T(kLong)).text() ==
        "posterity is due partly to a misunderstanding");
  CHECK(first_half(T("hello")).text() == "hello");
  CHECK(second_half(T("hello")).empty());
  CHECK(first_half(T("a b c d")).text() == "a b");
  CHECK(second_half(T("a b c d")).text() == "c d");
  CHECK(first_half(T("")).empty());
  CHECK(second_half(T("")).empty());
}

TEST_CASE("halves partition every transcript") {
  Rng rng(13);
  for (int it = 0; it < 300; ++it) {
    const Transcript t = random_transcript(rng, 0, 11);
    Transcript joined = first_half(t);
    const Transcript tail = second_half(t);
    joined.words.insert(joined.words.end(), tail.words.begin(),
                        tail.words.end());
    CHECK(joined == t);
    CHECK(first_half(t).size() == (t.size() + 1) / 2);
  }
}

TEST_CASE("extractive_summary ranks rare content words in order") {
  CorpusStats stats;
  SUBCASE("stopword-only input falls back to the first word") {
    CHECK(extractive_summary(T("a a a"), 5, stats).text() == "a");
  }
  SUBCASE("duplicates collapse and order is kept") {
    stats.add_transcript(T("storm storm horizon"));
    CHECK(extractive_summary(T("storm storm horizon"), 2, stats).text() ==
          "storm horizon");
  }
  SUBCASE("output is a short in-order subset of the input") {
    const Transcript t =
        T("there's a heavy storm coming on i cried pointing towards the "
          "horizon");
    stats.add_transcript(t);
    const Transcript s = extractive_summary(t, 5, stats);
    CHECK(s.size() >= 1);
    CHECK(s.size() <= 5);
    // Every summary word appears in the source, in source order.
    std::size_t cursor = 0;
    for (const auto& w : s.words) {
      while (cursor < t.size() && t.words[cursor] != w) ++cursor;
      CHECK(cursor < t.size());
      ++cursor;
    }
  }
}

TEST_CASE("skill spec validation rejects mismatched shapes") {
  CHECK_NOTHROW(SkillSpec::transcribe().validate());
  CHECK_NOTHROW(SkillSpec::ignore().validate());
  CHECK_NOTHROW(
      SkillSpec::replace(ReplaceMode::CommonWord, "the", "a").validate());
  CHECK_NOTHROW(
      SkillSpec::replace(ReplaceMode::Delete, "the", std::nullopt).validate());
  CHECK_NOTHROW(SkillSpec::manipulate(ManipulateMode::Repeat, 2).validate());
  CHECK_NOTHROW(SkillSpec::summarize().validate());

  SkillSpec bad = SkillSpec::transcribe();
  bad.manipulate_mode = ManipulateMode::Repeat;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  SkillSpec no_src = SkillSpec::replace(ReplaceMode::CommonWord, "the", "a");
  no_src.src_word.reset();
  CHECK_THROWS_AS(no_src.validate(), std::invalid_argument);

  SkillSpec no_dst = SkillSpec::replace(ReplaceMode::OodWord, "the", "q");
  no_dst.dst_word.reset();
  CHECK_THROWS_AS(no_dst.validate(), std::invalid_argument);

  SkillSpec extra_dst =
      SkillSpec::replace(ReplaceMode::Delete, "the", std::nullopt);
  extra_dst.dst_word = "a";
  CHECK_THROWS_AS(extra_dst.validate(), std::invalid_argument);

  SkillSpec bad_repeat = SkillSpec::manipulate(ManipulateMode::Repeat, 0);
  CHECK_THROWS_AS(bad_repeat.validate(), std::invalid_argument);
}

TEST_CASE("skill specs order by taxonomy and compare by behavior") {
  const SkillSpec a = SkillSpec::transcribe();
  const SkillSpec b = SkillSpec::ignore();
  const SkillSpec c = SkillSpec::replace(ReplaceMode::CommonWord, "the", "a");
  const SkillSpec d = SkillSpec::manipulate(ManipulateMode::FirstHalf);
  const SkillSpec e = SkillSpec::summarize();
  CHECK(a.order_key() < b.order_key());
  CHECK(b.order_key() < c.order_key());
  CHECK(c.order_key() < d.order_key());
  CHECK(d.order_key() < e.order_key());

  CHECK(c.same_behavior(SkillSpec::replace(ReplaceMode::CommonWord, "the", "a")));
  CHECK_FALSE(c.same_behavior(
      SkillSpec::replace(ReplaceMode::OodWord, "the", "quokka")));
  CHECK_FALSE(c.same_behavior(
      SkillSpec::replace(ReplaceMode::CommonWord, "a", "the")));
  CHECK(a.same_behavior(SkillSpec::transcribe()));
  CHECK_FALSE(d.same_behavior(SkillSpec::manipulate(ManipulateMode::Repeat)));
  CHECK(!c.describe().empty());
  CHECK(c.describe() != d.describe());
}

TEST_CASE("apply_skill dispatches to the matching transform") {
  CHECK(apply_skill(SkillSpec::replace(ReplaceMode::CommonWord, "the", "a"),
                    T(kLong))
            .text() ==
        "a influence with a timaeus has exercised upon posterity is due "
        "partly to a misunderstanding");
  CHECK(apply_skill(SkillSpec::transcribe(), T("a b c")) == T("a b c"));
  CHECK(apply_skill(SkillSpec::ignore(), T(kLong)).empty());
  CHECK(apply_skill(SkillSpec::manipulate(ManipulateMode::FirstHalf),
                    T("a b c d"))
            .text() == "a b");
  CHECK(apply_skill(SkillSpec::manipulate(ManipulateMode::Repeat, 2),
                    T("x y"))
            .text() == "x y x y");
}

TEST_CASE("summaries come from overrides first, then the heuristic") {
  CorpusStats stats;
  stats.add_transcript(T(kLong));
  SummaryOverrides ov;
  ov.set("utt-1", T("forced summary"));

  SummarizeContext ctx;
  ctx.stats = &stats;
  ctx.overrides = &ov;
  ctx.utterance_id = "utt-1";
  CHECK(apply_skill(SkillSpec::summarize(), T(kLong), ctx).text() ==
        "forced summary");

  ctx.utterance_id = "utt-2";
  const Transcript heuristic = apply_skill(SkillSpec::summarize(), T(kLong), ctx);
  CHECK(heuristic.size() >= 1);
  CHECK(heuristic.size() <= 5);
}

TEST_CASE("summary overrides load from line-delimited records") {
  const auto dir = std::filesystem::temp_directory_path() / "iasr_text_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "overrides.jsonl";
  write_text_file(path,
                  "{\"utterance_id\": \"u1\", \"summary_text\": \"storm "
                  "horizon\"}\n"
                  "{\"utterance_id\": \"u2\", \"summary_text\": \"echo\"}\n");
  const SummaryOverrides ov = SummaryOverrides::load(path);
  CHECK(ov.size() == 2);
  REQUIRE(ov.find("u1") != nullptr);
  CHECK(ov.find("u1")->text() == "storm horizon");
  CHECK(ov.find("missing") == nullptr);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corpus stats count words across transcripts") {
  CorpusStats stats = CorpusStats::from_transcripts({T("a b a"), T("b c")});
  CHECK(stats.count("a") == 2);
  CHECK(stats.count("b") == 2);
  CHECK(stats.count("c") == 1);
  CHECK(stats.count("zzz") == 0);
}

}  // namespace
}  // namespace iasr
