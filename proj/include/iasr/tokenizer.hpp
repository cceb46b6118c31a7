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
#include <string>
#include <unordered_map>
#include <vector>

namespace iasr {

// Subword vocabulary with reserved special tokens. Pieces are learned
// by frequency-greedy pair merging over the training lines; the space
// character is an ordinary symbol, so merged pieces can span word
// boundaries and decoding is plain concatenation.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEot = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }
  static const char* special_name(int id);

  // Trains a vocabulary of at most `size` pieces (specials included).
  // Merging stops early when no adjacent pair occurs twice, so the
  // result holds min(size, attainable) pieces. Ties in pair frequency
  // break lexicographically. Throws when the corpus is empty or `size`
  // cannot hold the alphabet plus specials.
  static Vocabulary build(const std::vector<std::string>& corpus_lines,
                          int size);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(pieces_.size()); }
  const std::string& piece(int id) const;
  std::uint64_t corpus_hash() const { return corpus_hash_; }

  // Greedy longest-match segmentation. Never emits special ids.
  // Characters with no piece (text outside the training alphabet) are
  // dropped.
  std::vector<int> encode(std::string_view text) const;

  // Concatenates pieces, skipping specials. Throws std::out_of_range
  // on an invalid id.
  std::string decode(const std::vector<int>& ids) const;

 private:
  Vocabulary() = default;
  void index_pieces();

  std::vector<std::string> pieces_;  // id -> piece; first four are specials
  std::unordered_map<std::string, int> piece_ids_;  // non-special pieces
  std::size_t max_piece_len_ = 1;
  std::uint64_t corpus_hash_ = 0;
};

}  // namespace iasr
