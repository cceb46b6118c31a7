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

#include <string>
#include <vector>

#include "iasr/model.hpp"
#include "iasr/tokenizer.hpp"

namespace iasr {

// ((5 + len) / 6) ^ power.
double length_penalty(int len, double power = 0.8);

struct DecodeConfig {
  int beam = 10;
  double lp_power = 0.8;
  // Cap on |tokens| including the closing [EOS]; 0 means use the
  // model's max_target_len.
  int max_len = 0;
  // Stop once no live prefix can strictly beat the worst kept
  // finished hypothesis even with a free ride to max_len.
  bool early_stop = true;

  void validate() const;
};

// One decode result. `tokens` covers generated output only (the
// forced prefix is excluded) and ends with [EOS] when `finished`;
// otherwise the search hit max_len and the hypothesis is truncated.
// The forced prefix contributes nothing to logprob.
struct Hypothesis {
  std::vector<int> tokens;
  double logprob = 0.0;
  double score = 0.0;
  bool finished = true;
};

// Ordering for hypotheses: higher score first, then fewer tokens,
// then lexicographically smaller token string.
bool better_hypothesis(const Hypothesis& a, const Hypothesis& b);

// Beam search over the decoder, forcing `prefix` first. Hypotheses
// close on [EOS]; score is logprob / lp(|tokens|). Live prefixes are
// ranked by raw logprob, normalization applies on finish. Returns up
// to cfg.beam finished results best first; if nothing finished within
// max_len, the surviving prefixes are returned truncated.
std::vector<Hypothesis> beam_search(const Model& model, const Mat& memory,
                                    const std::vector<int>& prefix,
                                    const DecodeConfig& cfg);

// Argmax decoding with the same termination rules; ties pick the
// lowest token id.
Hypothesis greedy_decode(const Model& model, const Mat& memory,
                         const std::vector<int>& prefix, int max_len = 0,
                         double lp_power = 0.8);

struct DecodeResult {
  std::string text;
  Hypothesis best;
  std::vector<Hypothesis> nbest;
};

// Runs the whole pipeline for one utterance: encode features, force
// [BOS] instruction [EOT], beam-decode, detokenize the best result.
// With cfg.max_len == 0 the cap is derived from the feature length
// (twice the frame-implied symbol count plus slack).
DecodeResult decode_utterance(const Model& model, const Vocabulary& vocab,
                              const FeatMat& features,
                              const std::string& instruction_text,
                              const DecodeConfig& cfg);

}  // namespace iasr
