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

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "iasr/common.hpp"
#include "iasr/instructions.hpp"

#ifndef IASR_BANK_PATH
#error "IASR_BANK_PATH must point at the bundled instruction bank"
#endif

namespace iasr {
namespace {

const char* kLong =
    "the influence with the timaeus has exercised upon posterity is due "
    "partly to a misunderstanding";

const InstructionBank& bundled_bank() {
  static const InstructionBank bank = InstructionBank::load(IASR_BANK_PATH);
  return bank;
}

Vocabulary test_vocab() {
  std::vector<std::string> lines = {kLong, "quokka storm gray horizon"};
  for (const auto& t : bundled_bank().templates()) lines.push_back(t.text);
  return Vocabulary::build(lines, 160);
}

std::filesystem::path write_temp_bank(const std::string& name,
                                      const std::string& content) {
  const auto dir = std::filesystem::temp_directory_path() / "iasr_bank_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  write_text_file(path, content);
  return path;
}

TEST_CASE("bundled bank populates every skill in both splits") {
  const InstructionBank& bank = bundled_bank();
  CHECK(bank.size() >= 100);
  for (Skill s : {Skill::Transcribe, Skill::Ignore, Skill::Replace,
                  Skill::Manipulate, Skill::Summarize}) {
    CHECK(bank.seen(s).size() >= 10);
    CHECK(bank.unseen(s).size() >= 10);
    for (const InstructionTemplate* t : bank.seen(s)) {
      CHECK(t->split == Split::Seen);
      CHECK(t->spec.skill == s);
      CHECK_FALSE(t->text.empty());
      CHECK_NOTHROW(t->spec.validate());
    }
  }
  // The default transcription prompt ships as a Seen template.
  bool found = false;
  for (const InstructionTemplate* t : bank.seen(Skill::Transcribe)) {
    found = found || t->text == "please transcribe the speech";
  }
  CHECK(found);
}

TEST_CASE("bank loading reports malformed records by line") {
  const auto bad = write_temp_bank(
      "bad.jsonl",
      "{\"skill\": \"transcribe\", \"text\": \"ok\", \"split\": \"seen\"}\n"
      "{\"skill\": \"Transcrbe\", \"text\": \"typo\", \"split\": \"seen\"}\n");
  try {
    InstructionBank::load(bad);
    FAIL("expected a schema error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
  }

  const auto empty = write_temp_bank("empty.jsonl", "");
  try {
    InstructionBank::load(empty);
    FAIL("expected an empty-bank error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("no templates") != std::string::npos);
  }

  const auto no_src = write_temp_bank(
      "nosrc.jsonl",
      "{\"skill\": \"replace\", \"text\": \"x\", \"split\": \"seen\", "
      "\"mode\": \"common_word\", \"dst\": \"a\"}\n");
  CHECK_THROWS(InstructionBank::load(no_src));
}

TEST_CASE("reference template counts match the published taxonomy") {
  CHECK(reference_template_count(Skill::Transcribe) == 500);
  CHECK(reference_template_count(Skill::Ignore) == 500);
  CHECK(reference_template_count(Skill::Replace) == 600);
  CHECK(reference_template_count(Skill::Manipulate) == 300);
  CHECK(reference_template_count(Skill::Summarize) == 100);
}

TEST_CASE("sampler probabilities follow the weight ratios") {
  SamplerConfig cfg;
  CHECK(cfg.alpha == 56.0);
  CHECK(cfg.beta == 4.0);
  CHECK(cfg.probability(Skill::Transcribe) == doctest::Approx(56.0 / 63.0));
  CHECK(cfg.probability(Skill::Ignore) == doctest::Approx(1.0 / 63.0));
  CHECK(cfg.probability(Skill::Replace) == doctest::Approx(1.0 / 63.0));
  CHECK(cfg.probability(Skill::Manipulate) == doctest::Approx(1.0 / 63.0));
  CHECK(cfg.probability(Skill::Summarize) == doctest::Approx(4.0 / 63.0));

  SamplerConfig flat;
  flat.alpha = 1.0;
  flat.beta = 1.0;
  for (Skill s : {Skill::Transcribe, Skill::Ignore, Skill::Replace,
                  Skill::Manipulate, Skill::Summarize}) {
    CHECK(flat.probability(s) == doctest::Approx(0.2));
  }

  SamplerConfig middle;
  middle.alpha = 0.0;
  middle.beta = 0.0;
  CHECK(middle.probability(Skill::Transcribe) == 0.0);
  CHECK(middle.probability(Skill::Summarize) == 0.0);
  CHECK(middle.probability(Skill::Ignore) == doctest::Approx(1.0 / 3.0));

  SamplerConfig bad;
  bad.alpha = -0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("empirical skill frequencies match the mixture") {
  SamplerConfig cfg;
  Rng rng(20260814);
  const int n = 100000;
  std::array<int, 5> counts{};
  for (int i = 0; i < n; ++i) {
    counts[static_cast<int>(sample_skill(cfg, rng))] += 1;
  }
  for (Skill s : {Skill::Transcribe, Skill::Ignore, Skill::Replace,
                  Skill::Manipulate, Skill::Summarize}) {
    const double freq =
        static_cast<double>(counts[static_cast<int>(s)]) / n;
    CHECK(std::abs(freq - cfg.probability(s)) <= 0.005);
  }
}

TEST_CASE("zero weights never sample their skills") {
  SamplerConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  Rng rng(9);
  std::array<int, 5> counts{};
  for (int i = 0; i < 10000; ++i) {
    counts[static_cast<int>(sample_skill(cfg, rng))] += 1;
  }
  CHECK(counts[static_cast<int>(Skill::Transcribe)] == 0);
  CHECK(counts[static_cast<int>(Skill::Summarize)] == 0);
  for (Skill s : {Skill::Ignore, Skill::Replace, Skill::Manipulate}) {
    CHECK(std::abs(counts[static_cast<int>(s)] / 10000.0 - 1.0 / 3.0) < 0.02);
  }
}

TEST_CASE("instruction draws are uniform over the seen templates") {
  const InstructionBank& bank = bundled_bank();
  const auto& seen = bank.seen(Skill::Transcribe);
  const int k = static_cast<int>(seen.size());
  REQUIRE(k >= 2);

  Rng rng(31);
  const int n = 12000;
  std::map<std::string, int> counts;
  for (int i = 0; i < n; ++i) {
    const InstructionTemplate& t = sample_instruction(bank, Skill::Transcribe, rng);
    CHECK(t.split == Split::Seen);
    counts[t.text] += 1;
  }
  CHECK(static_cast<int>(counts.size()) == k);
  const double expected = static_cast<double>(n) / k;
  double chi2 = 0.0;
  for (const auto& [text, c] : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // 99.9th percentile of chi-square with k-1 <= 11 dof is ~31.3.
  CHECK(chi2 < 35.0);
}

TEST_CASE("unseen templates never appear in sampled training streams") {
  const InstructionBank& bank = bundled_bank();
  std::set<std::string> unseen_texts;
  for (const auto& t : bank.templates()) {
    if (t.split == Split::Unseen) unseen_texts.insert(t.text);
  }
  REQUIRE_FALSE(unseen_texts.empty());

  SamplerConfig cfg;
  Rng rng(77);
  for (int i = 0; i < 20000; ++i) {
    const Skill s = sample_skill(cfg, rng);
    const InstructionTemplate& t = sample_instruction(bank, s, rng);
    CHECK(unseen_texts.count(t.text) == 0);
  }
}

TEST_CASE("a bank missing seen coverage for some skill fails to load") {
  const auto only_ignore = write_temp_bank(
      "ignore_only.jsonl",
      "{\"skill\": \"ignore\", \"text\": \"mute recognition\", "
      "\"split\": \"seen\"}\n");
  CHECK_THROWS_WITH_AS(InstructionBank::load(only_ignore),
                       doctest::Contains("no seen templates"),
                       std::runtime_error);
}

TEST_CASE("same seed reproduces the identical sample stream") {
  const InstructionBank& bank = bundled_bank();
  SamplerConfig cfg;
  auto draw = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> stream;
    for (int i = 0; i < 500; ++i) {
      const Skill s = sample_skill(cfg, rng);
      stream.push_back(sample_instruction(bank, s, rng).text);
    }
    return stream;
  };
  CHECK(draw(123) == draw(123));
  CHECK(draw(123) != draw(124));
}

TEST_CASE("composed sequences carry one turn break and one terminator") {
  const Vocabulary vocab = test_vocab();
  const std::vector<int> instr = vocab.encode("please transcribe the speech");
  const std::vector<int> target = vocab.encode(kLong);
  const std::vector<int> composed = compose_tokens(instr, target);

  REQUIRE(composed.size() == instr.size() + target.size() + 2);
  int eot = 0, eos = 0, pad = 0, bos = 0;
  for (int id : composed) {
    eot += id == Vocabulary::kEot;
    eos += id == Vocabulary::kEos;
    pad += id == Vocabulary::kPad;
    bos += id == Vocabulary::kBos;
  }
  CHECK(eot == 1);
  CHECK(eos == 1);
  CHECK(pad == 0);
  CHECK(bos == 0);
  CHECK(composed.back() == Vocabulary::kEos);
  CHECK(composed[instr.size()] == Vocabulary::kEot);
}

TEST_CASE("build_sample realizes the template transform") {
  const Vocabulary vocab = test_vocab();
  const Transcript t = Transcript::from_text(kLong);
  SummarizeContext ctx;

  InstructionTemplate ignore;
  ignore.text = "mute recognition";
  ignore.spec = SkillSpec::ignore();
  const TrainingSample s1 = build_sample("u1", t, ignore, vocab, ctx);
  CHECK(s1.target_tokens.empty());
  REQUIRE(s1.composed.size() >= 2);
  CHECK(s1.composed[s1.composed.size() - 2] == Vocabulary::kEot);
  CHECK(s1.composed.back() == Vocabulary::kEos);

  InstructionTemplate transcribe;
  transcribe.text = "please transcribe the speech";
  transcribe.spec = SkillSpec::transcribe();
  const TrainingSample s2 = build_sample("u2", t, transcribe, vocab, ctx);
  CHECK(vocab.decode(s2.target_tokens) == t.text());
  CHECK(vocab.decode(s2.instruction_tokens) == transcribe.text);

  InstructionTemplate repl;
  repl.text = "replace the with a as you listen";
  repl.spec = SkillSpec::replace(ReplaceMode::CommonWord, "the", "a");
  const TrainingSample s3 = build_sample("u3", t, repl, vocab, ctx);
  CHECK(vocab.decode(s3.target_tokens) ==
        "a influence with a timaeus has exercised upon posterity is due "
        "partly to a misunderstanding");
}

TEST_CASE("every sampled training pair decodes back to its texts") {
  const InstructionBank& bank = bundled_bank();
  const Vocabulary vocab = test_vocab();
  const Transcript t = Transcript::from_text(kLong);
  CorpusStats stats;
  stats.add_transcript(t);
  SummarizeContext ctx;
  ctx.stats = &stats;

  SamplerConfig cfg;
  cfg.alpha = 1.0;
  cfg.beta = 1.0;
  Rng rng(55);
  for (int i = 0; i < 200; ++i) {
    const Skill s = sample_skill(cfg, rng);
    const InstructionTemplate& tmpl = sample_instruction(bank, s, rng);
    SummarizeContext local = ctx;
    local.utterance_id = "u";
    const TrainingSample sample = build_sample("u", t, tmpl, vocab, local);

    CHECK(vocab.decode(sample.instruction_tokens) == tmpl.text);
    CHECK(vocab.decode(sample.target_tokens) ==
          apply_skill(tmpl.spec, t, local).text());

    int eot = 0;
    for (int id : sample.composed) {
      CHECK(id != Vocabulary::kPad);
      eot += id == Vocabulary::kEot;
    }
    CHECK(eot == 1);
    CHECK(sample.composed.back() == Vocabulary::kEos);
    CHECK(std::count(sample.composed.begin(), sample.composed.end(),
                     Vocabulary::kEos) == 1);
  }
}

TEST_CASE("split names round-trip") {
  CHECK(split_name(Split::Seen) == "seen");
  CHECK(split_name(Split::Unseen) == "unseen");
  CHECK(split_from_name("seen") == Split::Seen);
  CHECK(split_from_name("unseen") == Split::Unseen);
  CHECK_THROWS(split_from_name("nope"));
}

}  // namespace
}  // namespace iasr
