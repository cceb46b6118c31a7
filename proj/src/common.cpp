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

#include "iasr/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace iasr {

std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64_bytes(s.data(), s.size());
}

std::uint64_t fnv1a64_bytes(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<std::uint64_t>(p[i]);
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  return splitmix64(root ^ fnv1a64(tag));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::uint64_t n) {
  return splitmix64(derive_seed(root, tag) ^ splitmix64(n));
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Multiply-shift; bias is O(n / 2^64) and irrelevant at these ranges.
  const auto x = next_u64();
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(x) * n) >> 64);
}

int Rng::uniform_int(int lo, int hi) {
  if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
  const auto span = static_cast<std::uint64_t>(hi) - lo + 1;
  return lo + static_cast<int>(below(span));
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + spare_ * stddev;
  }
  const double two_pi = 6.283185307179586476925286766559;
  const double angle = uniform() * two_pi;
  const double radius = std::sqrt(-2.0 * std::log(1.0 - uniform()));
  spare_ = std::sin(angle) * radius;
  has_spare_ = true;
  return mean + std::cos(angle) * radius * stddev;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t start = i;
    while (i < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  return fnv1a64(read_text_file(path));
}

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("IASR_LOG");
    if (!env) return LogLevel::Info;
    const std::string v = to_lower(env);
    if (v == "error") return LogLevel::Error;
    if (v == "warn" || v == "warning") return LogLevel::Warn;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

void log_line(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static const char* names[] = {"E", "W", "I", "D"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

}  // namespace iasr
