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

#include "iasr/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "iasr/common.hpp"

namespace iasr {

const char* Vocabulary::special_name(int id) {
  switch (id) {
    case kPad: return "[PAD]";
    case kBos: return "[BOS]";
    case kEot: return "[EOT]";
    case kEos: return "[EOS]";
  }
  return "?";
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus_lines,
                             int size) {
  std::vector<std::string> lines;
  for (const auto& l : corpus_lines)
    if (!l.empty()) lines.push_back(l);
  if (lines.empty()) throw std::invalid_argument("empty corpus");

  std::set<char> alphabet;
  for (const auto& l : lines)
    for (char c : l) {
      if (c == '\n' || c == '\r')
        throw std::invalid_argument("corpus lines must not contain newlines");
      alphabet.insert(c);
    }
  const int min_size = static_cast<int>(alphabet.size()) + kNumSpecials;
  if (size < min_size)
    throw std::invalid_argument(
        "vocabulary size " + std::to_string(size) + " too small; alphabet " +
        "plus specials needs " + std::to_string(min_size));

  Vocabulary v;
  for (int i = 0; i < kNumSpecials; ++i) v.pieces_.emplace_back(special_name(i));
  std::map<std::string, int> piece_of;  // spelling -> id
  for (char c : alphabet) {
    piece_of[std::string(1, c)] = static_cast<int>(v.pieces_.size());
    v.pieces_.emplace_back(1, c);
  }

  // Lines as sequences of piece ids, initially one id per character.
  std::vector<std::vector<int>> seqs;
  seqs.reserve(lines.size());
  for (const auto& l : lines) {
    std::vector<int> seq;
    seq.reserve(l.size());
    for (char c : l) seq.push_back(piece_of.at(std::string(1, c)));
    seqs.push_back(std::move(seq));
  }

  while (static_cast<int>(v.pieces_.size()) < size) {
    std::map<std::pair<int, int>, long long> pair_counts;
    for (const auto& seq : seqs)
      for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        ++pair_counts[{seq[i], seq[i + 1]}];

    // Highest count wins; ties fall to the lexicographically smallest
    // (left piece, right piece) spelling pair.
    long long best_count = 0;
    std::pair<int, int> best{-1, -1};
    for (const auto& [pair, count] : pair_counts) {
      if (count < 2 || count < best_count) continue;
      if (count > best_count) {
        best_count = count;
        best = pair;
        continue;
      }
      const auto spelling = [&](const std::pair<int, int>& p) {
        return std::pair<const std::string&, const std::string&>(
            v.pieces_[p.first], v.pieces_[p.second]);
      };
      if (spelling(pair) < spelling(best)) best = pair;
    }
    if (best_count < 2) break;  // nothing left worth merging

    const int merged_id = static_cast<int>(v.pieces_.size());
    v.pieces_.push_back(v.pieces_[best.first] + v.pieces_[best.second]);
    for (auto& seq : seqs) {
      std::vector<int> out;
      out.reserve(seq.size());
      std::size_t i = 0;
      while (i < seq.size()) {
        if (i + 1 < seq.size() && seq[i] == best.first &&
            seq[i + 1] == best.second) {
          out.push_back(merged_id);
          i += 2;
        } else {
          out.push_back(seq[i]);
          ++i;
        }
      }
      seq = std::move(out);
    }
  }

  std::string joined;
  for (const auto& l : lines) {
    joined += l;
    joined += '\n';
  }
  v.corpus_hash_ = fnv1a64(joined);
  v.index_pieces();
  return v;
}

void Vocabulary::index_pieces() {
  piece_ids_.clear();
  max_piece_len_ = 1;
  for (int id = kNumSpecials; id < size(); ++id) {
    piece_ids_[pieces_[id]] = id;
    max_piece_len_ = std::max(max_piece_len_, pieces_[id].size());
  }
}

const std::string& Vocabulary::piece(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("piece id " + std::to_string(id) +
                            " outside vocabulary of size " +
                            std::to_string(size()));
  return pieces_[id];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t longest =
        std::min(max_piece_len_, text.size() - pos);
    int match = -1;
    std::size_t match_len = 0;
    for (std::size_t len = longest; len >= 1; --len) {
      auto it = piece_ids_.find(std::string(text.substr(pos, len)));
      if (it != piece_ids_.end()) {
        match = it->second;
        match_len = len;
        break;
      }
    }
    if (match < 0) {
      log_debug("encode: dropping character outside vocabulary alphabet");
      ++pos;
      continue;
    }
    ids.push_back(match);
    pos += match_len;
  }
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size())
      throw std::out_of_range("decode: id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(size()));
    if (is_special(id)) continue;
    out += pieces_[id];
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "iasr-vocab v1 size=" << size() << " corpus=" << std::hex
      << corpus_hash_ << "\n";
  for (const auto& p : pieces_) out << p << "\n";
  write_text_file(path, out.str());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path.string());
  std::string header;
  if (!std::getline(in, header) || header.rfind("iasr-vocab v1 ", 0) != 0)
    throw std::runtime_error("bad vocabulary header in " + path.string());

  Vocabulary v;
  const auto corpus_pos = header.find("corpus=");
  if (corpus_pos != std::string::npos)
    v.corpus_hash_ =
        std::stoull(header.substr(corpus_pos + 7), nullptr, 16);

  std::string line;
  while (std::getline(in, line)) v.pieces_.push_back(line);
  if (v.pieces_.size() < kNumSpecials)
    throw std::runtime_error("vocabulary misses special tokens: " +
                             path.string());
  for (int i = 0; i < kNumSpecials; ++i)
    if (v.pieces_[i] != special_name(i))
      throw std::runtime_error("vocabulary special token mismatch at id " +
                               std::to_string(i));
  v.index_pieces();
  return v;
}

}  // namespace iasr
