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

#include "iasr/synth.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace iasr {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthConfig::validate() const {
  if (frames_per_symbol < 1) {
    throw std::invalid_argument("frames_per_symbol must be >= 1");
  }
  if (noise_std < 0.0) {
    throw std::invalid_argument("noise_std must be >= 0");
  }
  if (feature_dim < 1) {
    throw std::invalid_argument("feature_dim must be >= 1");
  }
}

bool synth_alphabet_char(char c) {
  return (c >= 'a' && c <= 'z') || c == ' ';
}

Eigen::RowVectorXf codebook_vector(char symbol, int dim) {
  if (!synth_alphabet_char(symbol)) {
    throw std::invalid_argument(std::string("symbol outside synth alphabet: '") +
                                symbol + "'");
  }
  if (dim < 1) {
    throw std::invalid_argument("codebook dim must be >= 1");
  }
  Rng rng(derive_seed(0x636f6465626f6f6bULL, "codebook",
                      static_cast<std::uint64_t>(symbol)));
  Eigen::RowVectorXf v(dim);
  for (int j = 0; j < dim; ++j) {
    v(j) = static_cast<float>(rng.gaussian());
  }
  return v;
}

FeatMat synthesize(const Transcript& t, const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  if (t.empty()) {
    throw std::invalid_argument("cannot synthesize an empty transcript");
  }
  const std::string text = t.text();
  const int frames =
      static_cast<int>(text.size()) * cfg.frames_per_symbol;
  FeatMat m(frames, cfg.feature_dim);
  int row = 0;
  for (char c : text) {
    const Eigen::RowVectorXf base = codebook_vector(c, cfg.feature_dim);
    for (int k = 0; k < cfg.frames_per_symbol; ++k) {
      for (int j = 0; j < cfg.feature_dim; ++j) {
        m(row, j) = base(j) + static_cast<float>(cfg.noise_std * rng.gaussian());
      }
      ++row;
    }
  }
  return m;
}

std::string nearest_codebook_decode(const FeatMat& features,
                                    const SynthConfig& cfg) {
  cfg.validate();
  if (features.cols() != cfg.feature_dim) {
    throw std::invalid_argument("feature dim mismatch in decode");
  }
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ";
  std::vector<Eigen::RowVectorXf> book;
  book.reserve(alphabet.size());
  for (char c : alphabet) {
    book.push_back(codebook_vector(c, cfg.feature_dim));
  }
  std::string out;
  const int rows = static_cast<int>(features.rows());
  for (int start = 0; start < rows; start += cfg.frames_per_symbol) {
    const int end = std::min(rows, start + cfg.frames_per_symbol);
    Eigen::RowVectorXf mean = Eigen::RowVectorXf::Zero(cfg.feature_dim);
    for (int r = start; r < end; ++r) {
      mean += features.row(r);
    }
    mean /= static_cast<float>(end - start);
    int best = 0;
    float best_d = (mean - book[0]).squaredNorm();
    for (std::size_t i = 1; i < book.size(); ++i) {
      const float d = (mean - book[i]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    out.push_back(alphabet[static_cast<std::size_t>(best)]);
  }
  return out;
}

FeatMat spec_augment(const FeatMat& features, Rng& rng, int time_masks,
                     int freq_masks, int max_t, int max_f) {
  if (time_masks < 0 || freq_masks < 0 || max_t < 0 || max_f < 0) {
    throw std::invalid_argument("spec_augment parameters must be >= 0");
  }
  const int rows = static_cast<int>(features.rows());
  const int cols = static_cast<int>(features.cols());
  if (max_t >= rows) {
    throw std::invalid_argument("time mask width must be < frame count");
  }
  if (max_f >= cols) {
    throw std::invalid_argument("freq mask width must be < feature dim");
  }
  FeatMat out = features;
  for (int i = 0; i < time_masks; ++i) {
    const int width = rng.uniform_int(0, max_t);
    const int start = rng.uniform_int(0, rows - width);
    out.middleRows(start, width).setZero();
  }
  for (int i = 0; i < freq_masks; ++i) {
    const int width = rng.uniform_int(0, max_f);
    const int start = rng.uniform_int(0, cols - width);
    out.middleCols(start, width).setZero();
  }
  return out;
}

void CorpusSpec::validate() const {
  if (lexicon.empty()) {
    throw std::invalid_argument("corpus lexicon is empty");
  }
  for (const std::string& w : lexicon) {
    if (w.empty()) {
      throw std::invalid_argument("corpus lexicon contains an empty word");
    }
    for (char c : w) {
      if (!(c >= 'a' && c <= 'z')) {
        throw std::invalid_argument("lexicon word outside a-z: " + w);
      }
    }
  }
  if (n_utts < 1) {
    throw std::invalid_argument("corpus needs at least one utterance");
  }
  if (min_words < 1 || max_words < min_words) {
    throw std::invalid_argument("bad corpus word-count range");
  }
  synth.validate();
}

void write_features(const fs::path& path, const FeatMat& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for write: " + path.string());
  }
  const std::uint32_t frames = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t dim = static_cast<std::uint32_t>(m.cols());
  auto put_u32 = [&out](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(frames);
  put_u32(dim);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * frames * dim));
  if (!out) {
    throw std::runtime_error("short write to " + path.string());
  }
}

FeatMat read_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open feature file: " + path.string());
  }
  auto get_u32 = [&in, &path]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) {
      throw std::runtime_error("truncated feature file: " + path.string());
    }
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t frames = get_u32();
  const std::uint32_t dim = get_u32();
  if (frames == 0 || dim == 0 || frames > (1u << 24) || dim > (1u << 16)) {
    throw std::runtime_error("implausible feature header in " + path.string());
  }
  FeatMat m(frames, dim);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * frames * dim));
  if (!in) {
    throw std::runtime_error("truncated feature payload in " + path.string());
  }
  return m;
}

std::vector<Utterance> build_corpus(const CorpusSpec& spec,
                                    const fs::path& out_dir,
                                    const std::string& id_prefix,
                                    std::uint64_t seed) {
  spec.validate();
  fs::create_directories(out_dir);
  std::vector<Utterance> utts;
  utts.reserve(static_cast<std::size_t>(spec.n_utts));
  std::ofstream manifest(out_dir / "manifest.jsonl");
  if (!manifest) {
    throw std::runtime_error("cannot write manifest under " +
                             out_dir.string());
  }
  for (int i = 0; i < spec.n_utts; ++i) {
    Rng rng(derive_seed(seed, "utt", static_cast<std::uint64_t>(i)));
    const int n_words = rng.uniform_int(spec.min_words, spec.max_words);
    std::vector<std::string> words;
    words.reserve(static_cast<std::size_t>(n_words));
    for (int w = 0; w < n_words; ++w) {
      words.push_back(spec.lexicon[rng.below(spec.lexicon.size())]);
    }
    Utterance u;
    std::ostringstream id;
    id << id_prefix << "-" << std::setw(4) << std::setfill('0') << i;
    u.id = id.str();
    u.transcript = Transcript{words};
    u.features = synthesize(u.transcript, spec.synth, rng);
    const std::string feat_name = u.id + ".feat";
    write_features(out_dir / feat_name, u.features);
    json line;
    line["id"] = u.id;
    line["transcript"] = u.transcript.text();
    line["feature_file"] = feat_name;
    line["n_frames"] = static_cast<int>(u.features.rows());
    line["dim"] = static_cast<int>(u.features.cols());
    manifest << line.dump() << "\n";
    utts.push_back(std::move(u));
  }
  if (!manifest) {
    throw std::runtime_error("short write to manifest under " +
                             out_dir.string());
  }
  return utts;
}

std::vector<Utterance> load_manifest(const fs::path& manifest_path,
                                     bool load_feature_files) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  }
  const fs::path base = manifest_path.parent_path();
  std::vector<Utterance> utts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("transcript") ||
        !j.contains("feature_file")) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) +
                               ": missing id/transcript/feature_file");
    }
    Utterance u;
    u.id = j["id"].get<std::string>();
    u.transcript = Transcript::from_text(j["transcript"].get<std::string>());
    if (load_feature_files) {
      u.features = read_features(base / j["feature_file"].get<std::string>());
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

const std::vector<std::string>& default_lexicon() {
  static const std::vector<std::string> words = {
      "the",  "a",     "storm",    "horizon", "window", "march", "copper",
      "little", "red", "cap",      "children", "merry", "tree",  "sight",
      "silk", "gold",  "king",     "garden",  "river",  "stone"};
  return words;
}

}  // namespace iasr
