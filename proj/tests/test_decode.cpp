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

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "iasr/common.hpp"
#include "iasr/decode.hpp"

namespace iasr {
namespace {

constexpr int kEos = Vocabulary::kEos;

ModelConfig toy_config(int vocab) {
  ModelConfig cfg;
  cfg.feature_dim = 4;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.ffn = 8;
  cfg.vocab = vocab;
  cfg.subsample = 2;
  cfg.max_target_len = 32;
  cfg.dropout = 0.0;
  return cfg;
}

FeatMat random_features(Rng& rng, int rows, int dim) {
  FeatMat f(rows, dim);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dim; ++j) {
      f(i, j) = static_cast<float>(rng.gaussian());
    }
  }
  return f;
}

// Sharpened random toy model: scaling the output projection spreads
// the per-token log-probs so searches are not near-ties everywhere.
Model toy_model(int vocab, std::uint64_t seed, double sharpen = 4.0) {
  Model model(toy_config(vocab), seed);
  for (Parameter& p : model.params()) {
    if (p.name == "out_w" || p.name == "out_b") p.value *= sharpen;
  }
  return model;
}

Model forced_model(int vocab, double eos_bias) {
  Model model(toy_config(vocab), 1);
  for (Parameter& p : model.params()) p.value.setZero();
  for (Parameter& p : model.params()) {
    if (p.name == "out_b") p.value(0, kEos) = eos_bias;
  }
  return model;
}

// Exhaustive search over every decodable sequence, sharing decoder
// state along the prefix tree exactly like the production search.
void enumerate_all(const Model& model, const DecodeState& state,
                   const Eigen::RowVectorXd& next_lp, std::vector<int>& tokens,
                   double logprob, int max_len, double lp_power,
                   std::vector<Hypothesis>& out) {
  const int vocab = model.config().vocab;
  const int len = static_cast<int>(tokens.size());
  for (int tok = 0; tok < vocab; ++tok) {
    const double lp2 = logprob + next_lp(tok);
    if (tok == kEos) {
      Hypothesis h;
      h.tokens = tokens;
      h.tokens.push_back(kEos);
      h.logprob = lp2;
      h.score = lp2 / length_penalty(len + 1, lp_power);
      h.finished = true;
      out.push_back(std::move(h));
    } else if (len + 1 < max_len) {
      DecodeState child = state;
      const Eigen::RowVectorXd child_lp = model.step_log_probs(child, tok);
      tokens.push_back(tok);
      enumerate_all(model, child, child_lp, tokens, lp2, max_len, lp_power,
                    out);
      tokens.pop_back();
    }
  }
}

std::vector<Hypothesis> oracle_nbest(const Model& model, const Mat& memory,
                                     const std::vector<int>& prefix,
                                     int max_len, double lp_power) {
  DecodeState state = model.begin_decode(memory);
  Eigen::RowVectorXd next_lp;
  for (int tok : prefix) next_lp = model.step_log_probs(state, tok);
  std::vector<Hypothesis> all;
  std::vector<int> tokens;
  enumerate_all(model, state, next_lp, tokens, 0.0, max_len, lp_power, all);
  std::sort(all.begin(), all.end(), better_hypothesis);
  return all;
}

TEST_CASE("length penalty closed form") {
  CHECK(length_penalty(1) == 1.0);
  CHECK(length_penalty(7) == doctest::Approx(std::pow(2.0, 0.8)).epsilon(1e-12));
  CHECK(length_penalty(13) ==
        doctest::Approx(std::pow(3.0, 0.8)).epsilon(1e-12));
  CHECK(length_penalty(0) == doctest::Approx(std::pow(5.0 / 6.0, 0.8)));
  // Larger exponents penalize length more.
  CHECK(length_penalty(13, 1.0) > length_penalty(13, 0.8));
}

TEST_CASE("hypothesis ordering breaks ties by length then tokens") {
  Hypothesis a, b;
  a.score = 1.0;
  b.score = 2.0;
  CHECK(better_hypothesis(b, a));
  a.score = b.score = 1.0;
  a.tokens = {5, 3};
  b.tokens = {5, 6, 3};
  CHECK(better_hypothesis(a, b));
  b.tokens = {6, 3};
  CHECK(better_hypothesis(a, b));
  CHECK_FALSE(better_hypothesis(b, a));
}

TEST_CASE("config validation") {
  DecodeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.beam = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.beam = 4;
  cfg.max_len = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("a certain terminator yields the empty hypothesis at score zero") {
  const Model model = forced_model(4, 1e4);
  Rng rng(2);
  const Mat memory = model.encode(random_features(rng, 5, 4));
  DecodeConfig cfg;
  cfg.beam = 3;
  cfg.max_len = 6;
  const auto nbest = beam_search(model, memory, {Vocabulary::kBos}, cfg);
  REQUIRE_FALSE(nbest.empty());
  CHECK(nbest[0].tokens == std::vector<int>{kEos});
  CHECK(nbest[0].logprob == 0.0);
  CHECK(nbest[0].score == 0.0);
  CHECK(nbest[0].finished);
}

TEST_CASE("searches that never finish return truncated survivors") {
  const Model model = forced_model(4, -1e4);
  Rng rng(3);
  const Mat memory = model.encode(random_features(rng, 5, 4));
  DecodeConfig cfg;
  cfg.beam = 2;
  cfg.max_len = 5;
  const auto nbest = beam_search(model, memory, {Vocabulary::kBos}, cfg);
  REQUIRE(nbest.size() == 2);
  for (const Hypothesis& h : nbest) {
    CHECK_FALSE(h.finished);
    CHECK(h.tokens.size() == 5);
    for (int tok : h.tokens) CHECK(tok != kEos);
    CHECK(h.score ==
          doctest::Approx(h.logprob / length_penalty(5)).epsilon(1e-15));
  }
  // All extensions tie in logprob, so the survivors are the
  // lexicographically smallest strings.
  CHECK(nbest[0].tokens == std::vector<int>{0, 0, 0, 0, 0});
  CHECK(nbest[1].tokens == std::vector<int>{0, 0, 0, 0, 1});
}

TEST_CASE("beam one reproduces the greedy trace exactly") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const int vocab = 4 + static_cast<int>(seed % 2);
    const Model model = toy_model(vocab, seed);
    Rng rng(seed * 31);
    const Mat memory = model.encode(random_features(rng, 6, 4));
    DecodeConfig cfg;
    cfg.beam = 1;
    cfg.max_len = 8;
    const auto nbest = beam_search(model, memory, {Vocabulary::kBos}, cfg);
    const Hypothesis greedy =
        greedy_decode(model, memory, {Vocabulary::kBos}, 8);
    REQUIRE(nbest.size() == 1);
    CHECK(nbest[0].tokens == greedy.tokens);
    CHECK(nbest[0].finished == greedy.finished);
    CHECK(nbest[0].logprob == doctest::Approx(greedy.logprob).epsilon(1e-12));
    CHECK(nbest[0].score == doctest::Approx(greedy.score).epsilon(1e-12));
  }
}

TEST_CASE("wide beams equal exhaustive enumeration") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int vocab = 4 + static_cast<int>(seed % 2);
    const int max_len = 3 + static_cast<int>(seed % 2);
    const Model model = toy_model(vocab, seed * 7);
    Rng rng(seed * 13);
    const Mat memory = model.encode(random_features(rng, 5, 4));

    DecodeConfig cfg;
    cfg.beam = 1;
    for (int i = 0; i < max_len; ++i) cfg.beam *= vocab;
    cfg.max_len = max_len;

    const auto got = beam_search(model, memory, {Vocabulary::kBos}, cfg);
    const auto want =
        oracle_nbest(model, memory, {Vocabulary::kBos}, max_len, cfg.lp_power);

    REQUIRE_FALSE(got.empty());
    REQUIRE_FALSE(want.empty());
    const std::size_t n = std::min<std::size_t>(
        {got.size(), want.size(), static_cast<std::size_t>(5)});
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(got[i].tokens == want[i].tokens);
      CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
      CHECK(got[i].finished);
    }
    checked += 1;
  }
  CHECK(checked == 20);
}

TEST_CASE("early stopping never changes the result") {
  for (std::uint64_t seed = 50; seed < 65; ++seed) {
    const Model model = toy_model(5, seed);
    Rng rng(seed);
    const Mat memory = model.encode(random_features(rng, 6, 4));
    DecodeConfig eager;
    eager.beam = 4;
    eager.max_len = 10;
    eager.early_stop = true;
    DecodeConfig full = eager;
    full.early_stop = false;
    const auto a = beam_search(model, memory, {Vocabulary::kBos}, eager);
    const auto b = beam_search(model, memory, {Vocabulary::kBos}, full);
    REQUIRE_FALSE(a.empty());
    REQUIRE_FALSE(b.empty());
    CHECK(a[0].tokens == b[0].tokens);
    CHECK(a[0].score == b[0].score);
  }
}

TEST_CASE("score invariant holds for every returned hypothesis") {
  const Model model = toy_model(5, 77);
  Rng rng(78);
  const Mat memory = model.encode(random_features(rng, 6, 4));
  DecodeConfig cfg;
  cfg.beam = 6;
  cfg.max_len = 8;
  const auto nbest = beam_search(model, memory, {Vocabulary::kBos}, cfg);
  REQUIRE_FALSE(nbest.empty());
  CHECK(nbest.size() <= 6);
  for (const Hypothesis& h : nbest) {
    CHECK(h.score == h.logprob / length_penalty(
                                     static_cast<int>(h.tokens.size()),
                                     cfg.lp_power));
    if (h.finished) {
      CHECK(h.tokens.back() == kEos);
      CHECK(std::count(h.tokens.begin(), h.tokens.end(), kEos) == 1);
    }
  }
  for (std::size_t i = 1; i < nbest.size(); ++i) {
    CHECK_FALSE(better_hypothesis(nbest[i], nbest[i - 1]));
  }
}

TEST_CASE("searches reject empty prefixes and bad beams") {
  const Model model = toy_model(4, 5);
  Rng rng(6);
  const Mat memory = model.encode(random_features(rng, 5, 4));
  DecodeConfig cfg;
  CHECK_THROWS_AS(beam_search(model, memory, {}, cfg), std::invalid_argument);
  cfg.beam = 0;
  CHECK_THROWS_AS(beam_search(model, memory, {Vocabulary::kBos}, cfg),
                  std::invalid_argument);
}

TEST_CASE("utterance decoding forces the instruction invisibly") {
  // A model that must emit [EOS] first: the output never repeats the
  // instruction tokens and carries no prefix log-probability.
  const Model model = forced_model(12, 1e4);
  const Vocabulary vocab = Vocabulary::build({"ab ba", "abba"}, 12);
  Rng rng(7);
  const FeatMat feats = random_features(rng, 9, 4);
  DecodeConfig cfg;
  cfg.beam = 2;
  const DecodeResult res = decode_utterance(model, vocab, feats, "ab", cfg);
  CHECK(res.text == "");
  CHECK(res.best.tokens == std::vector<int>{kEos});
  CHECK(res.best.logprob == 0.0);
  CHECK(res.best.finished);
  // Mixed-case instructions are folded before encoding.
  const DecodeResult upper = decode_utterance(model, vocab, feats, "AB", cfg);
  CHECK(upper.text == res.text);
}

TEST_CASE("greedy decoding truncates at the cap") {
  const Model model = forced_model(4, -1e4);
  Rng rng(8);
  const Mat memory = model.encode(random_features(rng, 5, 4));
  const Hypothesis h = greedy_decode(model, memory, {Vocabulary::kBos}, 4);
  CHECK_FALSE(h.finished);
  CHECK(h.tokens.size() == 4);
}

}  // namespace
}  // namespace iasr
