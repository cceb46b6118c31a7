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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "iasr/autodiff.hpp"
#include "iasr/common.hpp"
#include "iasr/synth.hpp"

namespace iasr {

struct ModelConfig {
  int feature_dim = 16;
  int hidden = 64;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn = 128;
  int vocab = 256;
  int subsample = 3;
  int max_target_len = 160;
  double dropout = 0.1;

  void validate() const;
  bool operator==(const ModelConfig& o) const;
};

// Sinusoidal position table: rows x dim, position offset applied to
// the row index.
Mat sinusoidal_positions(int rows, int dim, int offset = 0);

struct Parameter {
  std::string name;
  Mat value;
};

// Everything needed to read gradients after backward(): the tape owns
// the graph, param_vars[i] is the leaf for Model::params()[i].
struct LossGraph {
  std::unique_ptr<Tape> tape;
  Var loss;
  std::vector<Var> param_vars;

  double loss_value() const { return tape->value(loss)(0, 0); }
};

// Incremental decoding cursor. Cross-attention keys/values are fixed
// per utterance; self-attention caches grow one row per fed token.
struct DecodeState {
  std::vector<Mat> self_k;
  std::vector<Mat> self_v;
  std::vector<Mat> cross_k;
  std::vector<Mat> cross_v;
  int steps = 0;
};

// Listen-attend-spell style pair: a pre-norm transformer encoder over
// pooled feature frames and a pre-norm transformer decoder over token
// embeddings with cross-attention into the encoder output.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::size_t param_count() const;
  std::uint64_t weights_hash() const;

  // Training graph over one utterance. `labels[t]` is scored from
  // decoder position t; mask entries weight each position's loss.
  // Dropout fires only when train_rng is non-null.
  LossGraph build_loss(const FeatMat& features,
                       const std::vector<int>& decoder_inputs,
                       const std::vector<int>& labels,
                       const std::vector<double>& mask,
                       Rng* train_rng) const;

  // Convenience for composed sequences ending in [EOS]: feeds [BOS]
  // then composed[0..n-2] and scores every composed token. When
  // target_only is set, loss covers only labels after the first [EOT].
  LossGraph build_composed_loss(const FeatMat& features,
                                const std::vector<int>& composed,
                                bool target_only, Rng* train_rng) const;

  // Inference path, plain arithmetic, no dropout.
  Mat encode(const FeatMat& features) const;
  DecodeState begin_decode(const Mat& memory) const;
  // Feeds one token, returns log-probabilities for the next position.
  Eigen::RowVectorXd step_log_probs(DecodeState& state, int token) const;
  // Teacher-forced scoring. Row t holds next-token log-probs after
  // feeding tokens[0..t]. Runs the incremental path, so outputs for a
  // prefix are bit-identical regardless of later tokens.
  Mat decoder_log_probs(const Mat& memory, const std::vector<int>& tokens) const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  void register_params(std::uint64_t seed);
  const Mat& p(const std::string& name) const;
  int index_of(const std::string& name) const;

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, int> idx_;
};

}  // namespace iasr
