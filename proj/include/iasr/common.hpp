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
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace iasr {

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t fnv1a64_bytes(const void* data, std::size_t n,
                            std::uint64_t h = 14695981039346656037ull);
std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent seed for a named sub-stream of `root`.
// Same (root, tag[, n]) always yields the same seed, so work can be
// sharded per utterance/epoch without the stream depending on
// iteration order.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::uint64_t n);

// Seeded RNG with hand-rolled distributions. mt19937_64 output is fully
// specified by the standard and std distributions are not, so drawing
// through this wrapper keeps streams identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, n). n = 0 returns 0.
  std::uint64_t below(std::uint64_t n);

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi);

  // Uniform real in [0, 1).
  double uniform();

  // Box-Muller with one cached spare.
  double gaussian(double mean = 0.0, double stddev = 1.0);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);
std::string to_lower(std::string s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     std::string_view content);
std::uint64_t hash_file(const std::filesystem::path& path);

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from the IASR_LOG environment variable
// (error|warn|info|debug); default info.
LogLevel log_level();
void log_line(LogLevel level, const std::string& msg);

inline void log_info(const std::string& msg) { log_line(LogLevel::Info, msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::Warn, msg); }
inline void log_debug(const std::string& msg) {
  log_line(LogLevel::Debug, msg);
}
inline void log_error(const std::string& msg) {
  log_line(LogLevel::Error, msg);
}

}  // namespace iasr
