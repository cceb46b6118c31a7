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

#include "iasr/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iasr {

double length_penalty(int len, double power) {
  if (len < 0) {
    throw std::invalid_argument("length must be >= 0");
  }
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, power);
}

void DecodeConfig::validate() const {
  if (beam < 1) {
    throw std::invalid_argument("beam must be >= 1");
  }
  if (max_len < 0) {
    throw std::invalid_argument("max_len must be >= 0");
  }
}

bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) {
    return a.score > b.score;
  }
  if (a.tokens.size() != b.tokens.size()) {
    return a.tokens.size() < b.tokens.size();
  }
  return a.tokens < b.tokens;
}

namespace {

struct Partial {
  DecodeState state;
  std::vector<int> tokens;
  double logprob = 0.0;
  Eigen::RowVectorXd next_lp;
};

struct Cand {
  int parent = 0;
  int token = 0;
  double logprob = 0.0;
};

// Raw log-probability ranking for live prefixes; ties resolve to the
// lexicographically smaller token string. All candidates in one round
// share the same length.
bool better_cand(const Cand& a, const Cand& b,
                 const std::vector<Partial>& parents) {
  if (a.logprob != b.logprob) {
    return a.logprob > b.logprob;
  }
  const std::vector<int>& ta =
      parents[static_cast<std::size_t>(a.parent)].tokens;
  const std::vector<int>& tb =
      parents[static_cast<std::size_t>(b.parent)].tokens;
  const std::size_t n = std::min(ta.size(), tb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ta[i] != tb[i]) {
      return ta[i] < tb[i];
    }
  }
  if (ta.size() != tb.size()) {
    return ta.size() < tb.size();
  }
  return a.token < b.token;
}

void prune(std::vector<Hypothesis>& pool, int limit) {
  std::sort(pool.begin(), pool.end(), better_hypothesis);
  if (static_cast<int>(pool.size()) > limit) {
    pool.resize(static_cast<std::size_t>(limit));
  }
}

Partial make_root(const Model& model, const Mat& memory,
                  const std::vector<int>& prefix) {
  if (prefix.empty()) {
    throw std::invalid_argument("decode prefix must contain at least [BOS]");
  }
  Partial root;
  root.state = model.begin_decode(memory);
  for (int tok : prefix) {
    root.next_lp = model.step_log_probs(root.state, tok);
  }
  return root;
}

}  // namespace

std::vector<Hypothesis> beam_search(const Model& model, const Mat& memory,
                                    const std::vector<int>& prefix,
                                    const DecodeConfig& cfg) {
  cfg.validate();
  const int vocab = model.config().vocab;
  const int max_len =
      cfg.max_len > 0 ? cfg.max_len : model.config().max_target_len;
  const int eos = Vocabulary::kEos;

  std::vector<Partial> live;
  live.push_back(make_root(model, memory, prefix));
  std::vector<Hypothesis> finished;

  for (int step = 1; step <= max_len && !live.empty(); ++step) {
    // [EOS] competes for beam slots like any token; extensions that
    // win a slot with it move to the finished pool.
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(vocab));
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Partial& par = live[i];
      for (int v = 0; v < vocab; ++v) {
        cands.push_back(
            Cand{static_cast<int>(i), v, par.logprob + par.next_lp(v)});
      }
    }
    const std::size_t keep = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.beam), cands.size());
    std::partial_sort(cands.begin(),
                      cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), [&live](const Cand& a, const Cand& b) {
                        return better_cand(a, b, live);
                      });
    cands.resize(keep);

    std::vector<Partial> next;
    for (const Cand& c : cands) {
      const Partial& par = live[static_cast<std::size_t>(c.parent)];
      if (c.token == eos) {
        Hypothesis h;
        h.tokens = par.tokens;
        h.tokens.push_back(eos);
        h.logprob = c.logprob;
        h.score = h.logprob / length_penalty(
                                  static_cast<int>(h.tokens.size()),
                                  cfg.lp_power);
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      Partial child;
      child.tokens = par.tokens;
      child.tokens.push_back(c.token);
      child.logprob = c.logprob;
      // The last step's survivors are kept only as truncation
      // fallbacks, so they skip the decoder feed.
      if (step < max_len) {
        child.state = par.state;
        child.next_lp = model.step_log_probs(child.state, c.token);
      }
      next.push_back(std::move(child));
    }
    prune(finished, cfg.beam);
    live.swap(next);
    if (step == max_len) {
      break;
    }

    if (cfg.early_stop && static_cast<int>(finished.size()) >= cfg.beam) {
      const double worst = finished.back().score;
      bool can_improve = false;
      for (const Partial& par : live) {
        const double bound =
            par.logprob / length_penalty(max_len, cfg.lp_power);
        if (bound >= worst) {
          can_improve = true;
          break;
        }
      }
      if (!can_improve) {
        break;
      }
    }
  }

  if (finished.empty()) {
    for (const Partial& par : live) {
      Hypothesis h;
      h.tokens = par.tokens;
      h.logprob = par.logprob;
      h.score = par.logprob / length_penalty(
                                  static_cast<int>(par.tokens.size()),
                                  cfg.lp_power);
      h.finished = false;
      finished.push_back(std::move(h));
    }
    prune(finished, cfg.beam);
  }
  return finished;
}

Hypothesis greedy_decode(const Model& model, const Mat& memory,
                         const std::vector<int>& prefix, int max_len,
                         double lp_power) {
  const int limit = max_len > 0 ? max_len : model.config().max_target_len;
  const int eos = Vocabulary::kEos;
  Partial cur = make_root(model, memory, prefix);
  Hypothesis h;
  h.finished = false;
  for (int step = 1; step <= limit; ++step) {
    int best = 0;
    for (int v = 1; v < model.config().vocab; ++v) {
      if (cur.next_lp(v) > cur.next_lp(best)) {
        best = v;
      }
    }
    cur.logprob += cur.next_lp(best);
    h.tokens.push_back(best);
    if (best == eos) {
      h.finished = true;
      break;
    }
    if (step < limit) {
      cur.next_lp = model.step_log_probs(cur.state, best);
    }
  }
  h.logprob = cur.logprob;
  h.score = h.logprob / length_penalty(static_cast<int>(h.tokens.size()),
                                       lp_power);
  return h;
}

DecodeResult decode_utterance(const Model& model, const Vocabulary& vocab,
                              const FeatMat& features,
                              const std::string& instruction_text,
                              const DecodeConfig& cfg) {
  std::vector<int> prefix;
  prefix.push_back(Vocabulary::kBos);
  const std::vector<int> ins = vocab.encode(to_lower(instruction_text));
  prefix.insert(prefix.end(), ins.begin(), ins.end());
  prefix.push_back(Vocabulary::kEot);

  DecodeConfig effective = cfg;
  if (effective.max_len == 0) {
    const int symbol_bound =
        static_cast<int>(features.rows()) / model.config().subsample;
    effective.max_len = 2 * std::max(1, symbol_bound) + 16;
  }

  const Mat memory = model.encode(features);
  DecodeResult res;
  res.nbest = beam_search(model, memory, prefix, effective);
  if (res.nbest.empty()) {
    throw std::runtime_error("beam search returned no hypotheses");
  }
  res.best = res.nbest.front();
  res.text = vocab.decode(res.best.tokens);
  return res;
}

}  // namespace iasr
