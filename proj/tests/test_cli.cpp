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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "iasr/common.hpp"
#include "iasr/tokenizer.hpp"
#include "json.hpp"

#ifndef IASR_BIN_PATH
#error "IASR_BIN_PATH must point at the command-line binary"
#endif
#ifndef IASR_BANK_PATH
#error "IASR_BANK_PATH must point at the bundled instruction bank"
#endif

namespace iasr {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

const fs::path& scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "iasr_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run_cli(const std::string& args, const std::string& stdin_text = "") {
  static int counter = 0;
  const fs::path capture =
      scratch_dir() / ("capture-" + std::to_string(counter++) + ".txt");
  std::string cmd;
  if (!stdin_text.empty()) {
    const fs::path in = capture.string() + ".in";
    write_text_file(in, stdin_text);
    cmd = std::string(IASR_BIN_PATH) + " " + args + " < " + in.string() +
          " > " + capture.string() + " 2>&1";
  } else {
    cmd = std::string(IASR_BIN_PATH) + " " + args + " > " + capture.string() +
          " 2>&1";
  }
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_text_file(capture);
  return r;
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<json> rows;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

// One shared tiny pipeline; built lazily so usage-error cases run
// even if it breaks.
struct Pipeline {
  fs::path root;
  fs::path config;
  fs::path corpus;
  fs::path vocab;
  fs::path run;

  static const Pipeline& get() {
    static const Pipeline p = build();
    return p;
  }

  static Pipeline build() {
    Pipeline p;
    p.root = scratch_dir() / "pipeline";
    fs::create_directories(p.root);
    p.config = p.root / "tiny.json";
    p.corpus = p.root / "corpus";
    p.vocab = p.root / "vocab.txt";
    p.run = p.root / "run";
    const json cfg = {
        {"seed", 7},
        {"vocab_size", 96},
        {"corpus", {{"n_train", 16}, {"n_dev", 6}, {"n_test", 6}}},
        {"synth", {{"noise_std", 0.05}}},
        {"decode", {{"beam", 2}, {"max_len", 80}}},
        {"model",
         {{"hidden", 16},
          {"heads", 2},
          {"enc_layers", 1},
          {"dec_layers", 1},
          {"ffn", 32}}},
        {"train",
         {{"steps", 30},
          {"batch_size", 2},
          {"warmup_steps", 10},
          {"decay_steps", 20},
          {"log_every", 10}}},
        {"dev_eval",
         {{"every", 15}, {"utterances", 4}, {"beam", 2},
          {"suite_utterances", 2}}},
    };
    write_text_file(p.config, cfg.dump(2));

    auto must = [](const std::string& args) {
      const RunResult r = run_cli(args);
      if (r.exit_code != 0) {
        throw std::runtime_error("pipeline step failed: " + args + "\n" +
                                 r.output);
      }
    };
    must("--config " + p.config.string() + " synth --out " +
         p.corpus.string());
    must("--config " + p.config.string() + " vocab --corpus " +
         p.corpus.string() + " --bank " IASR_BANK_PATH " --out " +
         p.vocab.string());
    must("--config " + p.config.string() + " train --corpus " +
         p.corpus.string() + " --vocab " + p.vocab.string() +
         " --bank " IASR_BANK_PATH " --out " + p.run.string());
    return p;
  }
};

TEST_CASE("bad invocations exit with usage errors") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("frobnicate").exit_code == 2);
  CHECK(run_cli("synth --no-such-flag 1").exit_code == 2);
  CHECK(run_cli("decode").exit_code == 2);
  CHECK(run_cli("--config /nonexistent.json synth --out /tmp/x").exit_code ==
        2);
  const fs::path bad = scratch_dir() / "bad.json";
  write_text_file(bad, "{not json");
  CHECK(run_cli("--config " + bad.string() + " synth --out /tmp/x")
            .exit_code == 2);
  CHECK(run_cli("eval --ckpt /nonexistent.ckpt --vocab /nope --corpus /nada "
                "--bank /none --out /tmp/x")
            .exit_code == 2);
}

TEST_CASE("help exits cleanly") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("train --help").exit_code == 0);
}

TEST_CASE("synth writes split manifests and echoes its config") {
  const Pipeline& p = Pipeline::get();
  for (const char* split : {"train", "dev", "test"}) {
    CHECK(fs::exists(p.corpus / split / "manifest.jsonl"));
  }
  CHECK(count_lines(p.corpus / "train" / "manifest.jsonl") == 16);
  CHECK(count_lines(p.corpus / "dev" / "manifest.jsonl") == 6);
  CHECK(count_lines(p.corpus / "test" / "manifest.jsonl") == 6);
  CHECK(fs::exists(p.corpus / "config.json"));
  const json echoed = json::parse(read_text_file(p.corpus / "config.json"));
  CHECK(echoed["corpus"]["n_train"] == 16);
  const auto rows = read_jsonl(p.corpus / "test" / "manifest.jsonl");
  for (const auto& row : rows) {
    CHECK(row.contains("id"));
    CHECK(row.contains("transcript"));
    CHECK(row.contains("feature_file"));
    CHECK(row.contains("n_frames"));
    CHECK(row.contains("dim"));
  }
}

TEST_CASE("vocab builds a loadable file") {
  const Pipeline& p = Pipeline::get();
  CHECK(fs::exists(p.vocab));
  const Vocabulary v = Vocabulary::load(p.vocab);
  CHECK(v.size() > 30);
  CHECK(v.size() <= 96);
}

TEST_CASE("build-data emits one composed sample per utterance") {
  const Pipeline& p = Pipeline::get();
  const fs::path out = scratch_dir() / "samples.jsonl";
  const RunResult r = run_cli(
      "--config " + p.config.string() + " build-data --corpus " +
      p.corpus.string() + " --vocab " + p.vocab.string() +
      " --bank " IASR_BANK_PATH " --out " + out.string());
  CHECK(r.exit_code == 0);
  const auto rows = read_jsonl(out);
  REQUIRE(rows.size() == 16);
  for (const auto& row : rows) {
    const auto composed = row["composed"].get<std::vector<int>>();
    REQUIRE_FALSE(composed.empty());
    CHECK(composed.back() == 3);
    CHECK(std::count(composed.begin(), composed.end(), 2) == 1);
    CHECK(std::count(composed.begin(), composed.end(), 0) == 0);
    CHECK(row["skill"].is_string());
    CHECK(row["split"] == "seen");
  }
}

TEST_CASE("training writes checkpoints, metrics, and a config echo") {
  const Pipeline& p = Pipeline::get();
  CHECK(fs::exists(p.run / "best.ckpt"));
  CHECK(fs::exists(p.run / "last.ckpt"));
  CHECK(fs::exists(p.run / "config.json"));
  const auto metrics = read_jsonl(p.run / "metrics.jsonl");
  REQUIRE_FALSE(metrics.empty());
  bool saw_dev = false;
  for (const auto& row : metrics) {
    CHECK(row.contains("step"));
    CHECK(row.contains("loss"));
    CHECK(row.contains("lr"));
    saw_dev = saw_dev || row.contains("dev_wer");
  }
  CHECK(saw_dev);
}

TEST_CASE("same seed trains byte-identical checkpoints") {
  const Pipeline& p = Pipeline::get();
  const fs::path rerun = scratch_dir() / "rerun";
  const RunResult r = run_cli(
      "--config " + p.config.string() + " train --corpus " +
      p.corpus.string() + " --vocab " + p.vocab.string() +
      " --bank " IASR_BANK_PATH " --out " + rerun.string());
  REQUIRE(r.exit_code == 0);
  CHECK(hash_file(p.run / "best.ckpt") == hash_file(rerun / "best.ckpt"));
  CHECK(hash_file(p.run / "last.ckpt") == hash_file(rerun / "last.ckpt"));
}

TEST_CASE("batch decode emits one scored row per utterance") {
  const Pipeline& p = Pipeline::get();
  const fs::path out = scratch_dir() / "decode.jsonl";
  const RunResult r = run_cli(
      "decode --ckpt " + (p.run / "best.ckpt").string() + " --vocab " +
      p.vocab.string() + " --corpus " +
      (p.corpus / "test" / "manifest.jsonl").string() + " --beam 2 --out " +
      out.string());
  CHECK(r.exit_code == 0);
  const auto rows = read_jsonl(out);
  REQUIRE(rows.size() == 6);
  for (const auto& row : rows) {
    CHECK(row.contains("utterance_id"));
    CHECK(row["instruction"] == "please transcribe the speech");
    CHECK(row.contains("hypothesis_text"));
    CHECK(row["logprob"].is_number());
    CHECK(row["score"].is_number());
    CHECK(row["finished"].is_boolean());
  }

  // Decodes are reproducible byte for byte.
  const fs::path out2 = scratch_dir() / "decode2.jsonl";
  run_cli("decode --ckpt " + (p.run / "best.ckpt").string() + " --vocab " +
          p.vocab.string() + " --corpus " +
          (p.corpus / "test" / "manifest.jsonl").string() +
          " --beam 2 --out " + out2.string());
  CHECK(read_text_file(out) == read_text_file(out2));

  // A custom instruction rides along in every row.
  const fs::path out3 = scratch_dir() / "decode3.jsonl";
  const RunResult r3 = run_cli(
      "decode --ckpt " + (p.run / "best.ckpt").string() + " --vocab " +
      p.vocab.string() + " --corpus " +
      (p.corpus / "test" / "manifest.jsonl").string() +
      " --beam 2 --instruction \"mute recognition\" --out " + out3.string());
  CHECK(r3.exit_code == 0);
  for (const auto& row : read_jsonl(out3)) {
    CHECK(row["instruction"] == "mute recognition");
  }
}

TEST_CASE("eval writes a report bundle") {
  const Pipeline& p = Pipeline::get();
  const fs::path out = scratch_dir() / "evalout";
  const RunResult r = run_cli(
      "eval --ckpt " + (p.run / "best.ckpt").string() + " --vocab " +
      p.vocab.string() + " --corpus " +
      (p.corpus / "test" / "manifest.jsonl").string() +
      " --bank " IASR_BANK_PATH " --beam 2 --templates 1 --utterances 2 "
      "--out " + out.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "items.jsonl"));
  CHECK(fs::exists(out / "summary.json"));
  const json summary = json::parse(read_text_file(out / "summary.json"));
  CHECK(summary.contains("accuracy"));
  CHECK(summary.contains("confusion"));
  CHECK(summary["transcribe_wer"].is_number());
  // 5 skills x 1 template x 2 utterances x 2 splits.
  CHECK(read_jsonl(out / "items.jsonl").size() == 20);
  CHECK(r.output.find("transcribe") != std::string::npos);
}

TEST_CASE("corrupt checkpoints fail at runtime, not usage") {
  const Pipeline& p = Pipeline::get();
  const fs::path junk = scratch_dir() / "junk.ckpt";
  write_text_file(junk, "this is not a checkpoint");
  const RunResult r = run_cli(
      "decode --ckpt " + junk.string() + " --vocab " + p.vocab.string() +
      " --corpus " + (p.corpus / "test" / "manifest.jsonl").string() +
      " --out " + (scratch_dir() / "never.jsonl").string());
  CHECK(r.exit_code == 1);
}

TEST_CASE("the interactive shell decodes instruction lines") {
  const Pipeline& p = Pipeline::get();
  const RunResult r = run_cli(
      "shell --ckpt " + (p.run / "best.ckpt").string() + " --vocab " +
      p.vocab.string() + " --corpus " +
      (p.corpus / "test" / "manifest.jsonl").string() +
      " --bank " IASR_BANK_PATH " --beam 2",
      "please transcribe the speech\n:quit\n");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("skill") != std::string::npos);
}

}  // namespace
}  // namespace iasr
