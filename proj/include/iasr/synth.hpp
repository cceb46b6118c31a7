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

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iasr/common.hpp"
#include "iasr/text.hpp"

namespace iasr {

// Frames-by-dims feature matrix, the synthetic stand-in for filterbank
// audio features.
using FeatMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SynthConfig {
  int frames_per_symbol = 3;
  double noise_std = 0.1;
  int feature_dim = 16;

  void validate() const;
};

// Characters the synthesizer can emit frames for.
bool synth_alphabet_char(char c);

// Fixed per-character codebook row. Depends only on (symbol, dim), not
// on any run seed, so zero-noise synthesis is invertible forever.
Eigen::RowVectorXf codebook_vector(char symbol, int dim);

// One codebook row per character of the transcript text (spaces
// included), each repeated frames_per_symbol times, plus i.i.d.
// Gaussian noise. Throws on characters outside the synth alphabet and
// on empty transcripts.
FeatMat synthesize(const Transcript& t, const SynthConfig& cfg, Rng& rng);

// Nearest-codebook frame decoding; collapses frame groups back to the
// character string. Test/inspection helper.
std::string nearest_codebook_decode(const FeatMat& features,
                                    const SynthConfig& cfg);

// Zeroes `time_masks` random time bands of width <= max_t and
// `freq_masks` random feature bands of width <= max_f. Returns a new
// matrix; requires max_t < rows and max_f < cols.
FeatMat spec_augment(const FeatMat& features, Rng& rng, int time_masks,
                     int freq_masks, int max_t, int max_f);

struct Utterance {
  std::string id;
  FeatMat features;
  Transcript transcript;
};

struct CorpusSpec {
  std::vector<std::string> lexicon;
  int n_utts = 0;
  int min_words = 3;
  int max_words = 8;
  SynthConfig synth;

  void validate() const;
};

// Writes <id>.feat files plus manifest.jsonl under out_dir and returns
// the utterances. Fully determined by (spec, id_prefix, seed).
std::vector<Utterance> build_corpus(const CorpusSpec& spec,
                                    const std::filesystem::path& out_dir,
                                    const std::string& id_prefix,
                                    std::uint64_t seed);

// Feature file layout: u32 frames, u32 dim (little endian), then
// frames*dim float32 values row-major.
void write_features(const std::filesystem::path& path, const FeatMat& m);
FeatMat read_features(const std::filesystem::path& path);

std::vector<Utterance> load_manifest(const std::filesystem::path& manifest,
                                     bool load_feature_files = true);

// The default 20-word lexicon for desk-scale corpora.
const std::vector<std::string>& default_lexicon();

}  // namespace iasr
