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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iasr/common.hpp"
#include "iasr/decode.hpp"
#include "iasr/eval.hpp"
#include "iasr/instructions.hpp"
#include "iasr/model.hpp"
#include "iasr/synth.hpp"
#include "iasr/text.hpp"
#include "iasr/tokenizer.hpp"
#include "iasr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iasr;

namespace {

constexpr const char* kDefaultPrompt = "please transcribe the speech";

// Bad invocations (unknown flags, broken config, missing files) exit
// with 2; failures past argument checking exit with 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorpusSizes {
  int n_train = 2000;
  int n_dev = 200;
  int n_test = 200;
  int min_words = 3;
  int max_words = 8;
};

struct EvalConfig {
  int templates_per_skill = 10;
  int utterances_per_template = 20;
};

struct DevEvalConfig {
  int every = 500;
  int utterances = 32;
  int beam = 4;
  int suite_utterances = 6;
};

struct Paths {
  std::string config;
  std::string corpus;
  std::string bank;
  std::string vocab;
  std::string checkpoint;
  std::string out;
  std::string tasks;
  std::string overrides;
};

struct RunConfig {
  std::uint64_t seed = 1234;
  SamplerConfig sampler;
  ModelConfig model;
  DecodeConfig decode;
  double delta = 0.1;
  SynthConfig synth;
  CorpusSizes corpus;
  int vocab_size = 256;
  TrainConfig train;
  DevEvalConfig dev_eval;
  EvalConfig eval;
  Paths paths;
  std::string instruction = kDefaultPrompt;
  std::string shell_utt;
};

template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) {
    field = j.at(key).get<T>();
  }
}

void apply_config_file(RunConfig& rc, const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("cannot open config file: " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
  maybe(j, "seed", rc.seed);
  maybe(j, "delta", rc.delta);
  maybe(j, "vocab_size", rc.vocab_size);
  maybe(j, "instruction", rc.instruction);
  if (j.contains("sampler")) {
    const json& s = j["sampler"];
    maybe(s, "alpha", rc.sampler.alpha);
    maybe(s, "beta", rc.sampler.beta);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    maybe(m, "feature_dim", rc.model.feature_dim);
    maybe(m, "hidden", rc.model.hidden);
    maybe(m, "heads", rc.model.heads);
    maybe(m, "enc_layers", rc.model.enc_layers);
    maybe(m, "dec_layers", rc.model.dec_layers);
    maybe(m, "ffn", rc.model.ffn);
    maybe(m, "vocab", rc.model.vocab);
    maybe(m, "subsample", rc.model.subsample);
    maybe(m, "max_target_len", rc.model.max_target_len);
    maybe(m, "dropout", rc.model.dropout);
  }
  if (j.contains("decode")) {
    const json& d = j["decode"];
    maybe(d, "beam", rc.decode.beam);
    maybe(d, "lp_power", rc.decode.lp_power);
    maybe(d, "max_len", rc.decode.max_len);
    maybe(d, "early_stop", rc.decode.early_stop);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    maybe(s, "frames_per_symbol", rc.synth.frames_per_symbol);
    maybe(s, "noise_std", rc.synth.noise_std);
    maybe(s, "feature_dim", rc.synth.feature_dim);
  }
  if (j.contains("corpus")) {
    const json& c = j["corpus"];
    maybe(c, "n_train", rc.corpus.n_train);
    maybe(c, "n_dev", rc.corpus.n_dev);
    maybe(c, "n_test", rc.corpus.n_test);
    maybe(c, "min_words", rc.corpus.min_words);
    maybe(c, "max_words", rc.corpus.max_words);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    maybe(t, "steps", rc.train.steps);
    maybe(t, "batch_size", rc.train.batch_size);
    maybe(t, "peak_lr", rc.train.peak_lr);
    maybe(t, "warmup_steps", rc.train.warmup_steps);
    maybe(t, "decay_steps", rc.train.decay_steps);
    maybe(t, "final_fraction", rc.train.final_fraction);
    maybe(t, "clip_norm", rc.train.clip_norm);
    maybe(t, "target_only_loss", rc.train.target_only_loss);
    maybe(t, "transcribe_only", rc.train.transcribe_only);
    maybe(t, "log_every", rc.train.log_every);
    if (t.contains("augment")) {
      const json& a = t["augment"];
      maybe(a, "enabled", rc.train.augment.enabled);
      maybe(a, "time_masks", rc.train.augment.time_masks);
      maybe(a, "freq_masks", rc.train.augment.freq_masks);
      maybe(a, "max_t", rc.train.augment.max_t);
      maybe(a, "max_f", rc.train.augment.max_f);
    }
  }
  if (j.contains("dev_eval")) {
    const json& d = j["dev_eval"];
    maybe(d, "every", rc.dev_eval.every);
    maybe(d, "utterances", rc.dev_eval.utterances);
    maybe(d, "beam", rc.dev_eval.beam);
    maybe(d, "suite_utterances", rc.dev_eval.suite_utterances);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    maybe(e, "templates_per_skill", rc.eval.templates_per_skill);
    maybe(e, "utterances_per_template", rc.eval.utterances_per_template);
  }
  if (j.contains("paths")) {
    const json& p = j["paths"];
    maybe(p, "corpus", rc.paths.corpus);
    maybe(p, "bank", rc.paths.bank);
    maybe(p, "vocab", rc.paths.vocab);
    maybe(p, "checkpoint", rc.paths.checkpoint);
    maybe(p, "out", rc.paths.out);
    maybe(p, "tasks", rc.paths.tasks);
    maybe(p, "overrides", rc.paths.overrides);
  }
}

json effective_config(const RunConfig& rc) {
  json j;
  j["seed"] = rc.seed;
  j["delta"] = rc.delta;
  j["vocab_size"] = rc.vocab_size;
  j["instruction"] = rc.instruction;
  j["sampler"] = {{"alpha", rc.sampler.alpha}, {"beta", rc.sampler.beta}};
  j["model"] = {{"feature_dim", rc.model.feature_dim},
                {"hidden", rc.model.hidden},
                {"heads", rc.model.heads},
                {"enc_layers", rc.model.enc_layers},
                {"dec_layers", rc.model.dec_layers},
                {"ffn", rc.model.ffn},
                {"vocab", rc.model.vocab},
                {"subsample", rc.model.subsample},
                {"max_target_len", rc.model.max_target_len},
                {"dropout", rc.model.dropout}};
  j["decode"] = {{"beam", rc.decode.beam},
                 {"lp_power", rc.decode.lp_power},
                 {"max_len", rc.decode.max_len},
                 {"early_stop", rc.decode.early_stop}};
  j["synth"] = {{"frames_per_symbol", rc.synth.frames_per_symbol},
                {"noise_std", rc.synth.noise_std},
                {"feature_dim", rc.synth.feature_dim}};
  j["corpus"] = {{"n_train", rc.corpus.n_train},
                 {"n_dev", rc.corpus.n_dev},
                 {"n_test", rc.corpus.n_test},
                 {"min_words", rc.corpus.min_words},
                 {"max_words", rc.corpus.max_words}};
  j["train"] = {{"steps", rc.train.steps},
                {"batch_size", rc.train.batch_size},
                {"peak_lr", rc.train.peak_lr},
                {"warmup_steps", rc.train.warmup_steps},
                {"decay_steps", rc.train.decay_steps},
                {"final_fraction", rc.train.final_fraction},
                {"clip_norm", rc.train.clip_norm},
                {"target_only_loss", rc.train.target_only_loss},
                {"transcribe_only", rc.train.transcribe_only},
                {"log_every", rc.train.log_every},
                {"augment",
                 {{"enabled", rc.train.augment.enabled},
                  {"time_masks", rc.train.augment.time_masks},
                  {"freq_masks", rc.train.augment.freq_masks},
                  {"max_t", rc.train.augment.max_t},
                  {"max_f", rc.train.augment.max_f}}}};
  j["dev_eval"] = {{"every", rc.dev_eval.every},
                   {"utterances", rc.dev_eval.utterances},
                   {"beam", rc.dev_eval.beam},
                   {"suite_utterances", rc.dev_eval.suite_utterances}};
  j["eval"] = {{"templates_per_skill", rc.eval.templates_per_skill},
               {"utterances_per_template", rc.eval.utterances_per_template}};
  j["paths"] = {{"corpus", rc.paths.corpus},     {"bank", rc.paths.bank},
                {"vocab", rc.paths.vocab},       {"checkpoint", rc.paths.checkpoint},
                {"out", rc.paths.out},           {"tasks", rc.paths.tasks},
                {"overrides", rc.paths.overrides}};
  return j;
}

void write_effective_config(const RunConfig& rc, const fs::path& where) {
  std::ofstream out(where);
  if (!out) {
    throw std::runtime_error("cannot write config echo: " + where.string());
  }
  out << effective_config(rc).dump(2) << "\n";
}

// `where` is the subcommand's --out; directories get config.json
// inside, file outputs get a sibling <name>.config.json.
void echo_config(const RunConfig& rc, const fs::path& where, bool is_dir) {
  if (is_dir) {
    write_effective_config(rc, where / "config.json");
  } else {
    write_effective_config(rc, where.string() + ".config.json");
  }
}

fs::path require_path(const std::string& p, const char* what) {
  if (p.empty()) {
    throw UsageError(std::string("missing required path: ") + what);
  }
  if (!fs::exists(p)) {
    throw UsageError(std::string(what) + " does not exist: " + p);
  }
  return fs::path(p);
}

fs::path require_out(const std::string& p) {
  if (p.empty()) {
    throw UsageError("missing required path: --out");
  }
  return fs::path(p);
}

// Accepts a manifest file, a corpus split directory, or a synth root
// (falls back to its train split).
fs::path resolve_manifest(const fs::path& corpus) {
  if (fs::is_regular_file(corpus)) {
    return corpus;
  }
  if (fs::is_directory(corpus)) {
    if (fs::exists(corpus / "manifest.jsonl")) {
      return corpus / "manifest.jsonl";
    }
    if (fs::exists(corpus / "train" / "manifest.jsonl")) {
      return corpus / "train" / "manifest.jsonl";
    }
  }
  throw UsageError("no manifest found under " + corpus.string());
}

std::vector<Utterance> load_corpus(const fs::path& corpus,
                                   bool load_features = true) {
  return load_manifest(resolve_manifest(corpus), load_features);
}

CorpusStats stats_of(const std::vector<Utterance>& utts) {
  CorpusStats stats;
  for (const Utterance& u : utts) {
    stats.add_transcript(u.transcript);
  }
  return stats;
}

std::vector<SkillSpec> bank_candidates(const InstructionBank* bank) {
  std::vector<SkillSpec> specs;
  if (bank != nullptr) {
    for (const InstructionTemplate& t : bank->templates()) {
      specs.push_back(t.spec);
    }
  } else {
    specs.push_back(SkillSpec::replace(ReplaceMode::CommonWord, "the",
                                       std::optional<std::string>("a")));
    specs.push_back(SkillSpec::replace(ReplaceMode::OodWord, "the",
                                       std::optional<std::string>("quokka")));
    specs.push_back(
        SkillSpec::replace(ReplaceMode::Delete, "the", std::nullopt));
    specs.push_back(SkillSpec::manipulate(ManipulateMode::Repeat, 2));
    specs.push_back(SkillSpec::manipulate(ManipulateMode::FirstHalf));
    specs.push_back(SkillSpec::manipulate(ManipulateMode::SecondHalf));
    specs.push_back(SkillSpec::summarize());
  }
  return candidate_set(specs);
}

int run_synth(const RunConfig& rc) {
  const fs::path out = require_out(rc.paths.out);
  fs::create_directories(out);
  CorpusSpec spec;
  spec.lexicon = default_lexicon();
  spec.min_words = rc.corpus.min_words;
  spec.max_words = rc.corpus.max_words;
  spec.synth = rc.synth;
  const std::pair<const char*, int> splits[] = {
      {"train", rc.corpus.n_train},
      {"dev", rc.corpus.n_dev},
      {"test", rc.corpus.n_test}};
  for (const auto& [name, count] : splits) {
    spec.n_utts = count;
    const auto utts = build_corpus(spec, out / name, name,
                                   derive_seed(rc.seed, name));
    std::cout << name << ": " << utts.size() << " utterances\n";
  }
  echo_config(rc, out, true);
  return 0;
}

int run_vocab(const RunConfig& rc) {
  const fs::path corpus = require_path(rc.paths.corpus, "--corpus");
  const fs::path bank_path = require_path(rc.paths.bank, "--bank");
  const fs::path out = require_out(rc.paths.out);
  const auto utts = load_corpus(corpus, false);
  const InstructionBank bank = InstructionBank::load(bank_path);

  std::vector<std::string> lines;
  lines.reserve(utts.size() + bank.size() * 2);
  for (const Utterance& u : utts) {
    lines.push_back(u.transcript.text());
  }
  for (const InstructionTemplate& t : bank.templates()) {
    lines.push_back(t.text);
    if (t.spec.src_word) {
      lines.push_back(*t.spec.src_word);
    }
    if (t.spec.dst_word) {
      lines.push_back(*t.spec.dst_word);
    }
  }
  const Vocabulary vocab = Vocabulary::build(lines, rc.vocab_size);
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  vocab.save(out);
  echo_config(rc, out, false);
  std::cout << "vocab: " << vocab.size() << " pieces -> " << out.string()
            << "\n";
  return 0;
}

int run_build_data(const RunConfig& rc) {
  const fs::path corpus = require_path(rc.paths.corpus, "--corpus");
  const fs::path bank_path = require_path(rc.paths.bank, "--bank");
  const fs::path vocab_path = require_path(rc.paths.vocab, "--vocab");
  const fs::path out = require_out(rc.paths.out);
  rc.sampler.validate();

  const auto utts = load_corpus(corpus, false);
  const InstructionBank bank = InstructionBank::load(bank_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const CorpusStats stats = stats_of(utts);
  std::optional<SummaryOverrides> overrides;
  if (!rc.paths.overrides.empty()) {
    overrides =
        SummaryOverrides::load(require_path(rc.paths.overrides, "--overrides"));
  }

  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  std::ofstream os(out);
  if (!os) {
    throw std::runtime_error("cannot write dataset: " + out.string());
  }
  for (const Utterance& u : utts) {
    Rng rng(derive_seed(rc.seed, u.id));
    const Skill skill = sample_skill(rc.sampler, rng);
    const InstructionTemplate& tmpl = sample_instruction(bank, skill, rng);
    SummarizeContext ctx;
    ctx.stats = &stats;
    ctx.overrides = overrides ? &*overrides : nullptr;
    const TrainingSample sample =
        build_sample(u.id, u.transcript, tmpl, vocab, ctx);
    json row;
    row["utterance_id"] = sample.utterance_id;
    row["skill"] = sample.spec.describe();
    row["split"] = split_name(tmpl.split);
    row["instruction_text"] = sample.instruction_text;
    row["target_text"] = sample.target_text;
    row["instruction_tokens"] = sample.instruction_tokens;
    row["target_tokens"] = sample.target_tokens;
    row["composed"] = sample.composed;
    os << row.dump() << "\n";
  }
  echo_config(rc, out, false);
  std::cout << "dataset: " << utts.size() << " samples -> " << out.string()
            << "\n";
  return 0;
}

int run_train(RunConfig& rc) {
  const fs::path corpus = require_path(rc.paths.corpus, "--corpus");
  const fs::path bank_path = require_path(rc.paths.bank, "--bank");
  const fs::path vocab_path = require_path(rc.paths.vocab, "--vocab");
  const fs::path out = require_out(rc.paths.out);
  fs::create_directories(out);

  const fs::path train_manifest =
      fs::is_directory(corpus) && fs::exists(corpus / "train" / "manifest.jsonl")
          ? corpus / "train" / "manifest.jsonl"
          : resolve_manifest(corpus);
  std::vector<Utterance> train_utts = load_manifest(train_manifest, true);
  std::vector<Utterance> dev_utts;
  if (fs::is_directory(corpus) &&
      fs::exists(corpus / "dev" / "manifest.jsonl")) {
    dev_utts = load_manifest(corpus / "dev" / "manifest.jsonl", true);
  }

  const InstructionBank bank = InstructionBank::load(bank_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const CorpusStats stats = stats_of(train_utts);
  std::optional<SummaryOverrides> overrides;
  if (!rc.paths.overrides.empty()) {
    overrides =
        SummaryOverrides::load(require_path(rc.paths.overrides, "--overrides"));
  }

  rc.model.vocab = vocab.size();
  rc.model.feature_dim = static_cast<int>(train_utts.front().features.cols());
  rc.train.seed = rc.seed;
  rc.model.validate();
  rc.train.validate();
  rc.sampler.validate();
  echo_config(rc, out, true);

  Model model(rc.model, rc.seed);
  log_info("model parameters: " + std::to_string(model.param_count()));

  TrainData data;
  data.utterances = &train_utts;
  data.bank = &bank;
  data.vocab = &vocab;
  data.sampler = rc.sampler;
  data.stats = &stats;
  data.overrides = overrides ? &*overrides : nullptr;
  Trainer trainer(model, rc.train, data);

  std::ofstream metrics(out / "metrics.jsonl");
  if (!metrics) {
    throw std::runtime_error("cannot write metrics under " + out.string());
  }

  const int n_dev_eval = std::min<int>(
      rc.dev_eval.utterances, static_cast<int>(dev_utts.size()));
  const std::vector<Utterance> dev_eval_utts(dev_utts.begin(),
                                             dev_utts.begin() + n_dev_eval);
  DecodeConfig dev_decode = rc.decode;
  dev_decode.beam = rc.dev_eval.beam;

  double best_dev_wer = -1.0;
  const auto dev_point = [&](int step, double loss) {
    json row;
    row["step"] = step;
    row["loss"] = loss;
    row["lr"] = learning_rate_at(rc.train, step);
    const bool eval_now =
        rc.dev_eval.every > 0 && !dev_eval_utts.empty() &&
        (step % rc.dev_eval.every == 0 || step == rc.train.steps);
    if (eval_now) {
      const WerCounts wc =
          rc.train.transcribe_only
              ? plain_transcription_wer(model, vocab, dev_eval_utts,
                                        dev_decode)
              : transcription_wer(model, vocab, dev_eval_utts, kDefaultPrompt,
                                  dev_decode);
      row["dev_wer"] = wc.wer();
      if (!rc.train.transcribe_only) {
        const int n_suite = std::min<int>(rc.dev_eval.suite_utterances,
                                          static_cast<int>(dev_utts.size()));
        const std::vector<Utterance> suite_utts(dev_utts.begin(),
                                                dev_utts.begin() + n_suite);
        EvalOptions opts;
        opts.decode = dev_decode;
        opts.delta = rc.delta;
        opts.ctx.stats = &stats;
        const EvalReport rep = evaluate_suite(
            model, vocab,
            build_suite_tasks(suite_utts, bank, Split::Seen, 1, n_suite),
            opts);
        json acc;
        for (int s = 0; s < kSkillCount; ++s) {
          const Skill skill = static_cast<Skill>(s);
          acc[skill_name(skill)] = rep.skill_total(skill).accuracy();
        }
        row["per_skill_acc"] = acc;
      }
      if (best_dev_wer < 0.0 || wc.wer() < best_dev_wer) {
        best_dev_wer = wc.wer();
        model.save(out / "best.ckpt");
        log_info("step " + std::to_string(step) + ": new best dev wer " +
                 std::to_string(wc.wer()));
      }
    }
    if (eval_now || step % rc.train.log_every == 0 ||
        step == rc.train.steps) {
      metrics << row.dump() << "\n";
      metrics.flush();
    }
  };

  trainer.run(dev_point);
  model.save(out / "last.ckpt");
  if (best_dev_wer < 0.0) {
    model.save(out / "best.ckpt");
  }
  std::cout << "trained " << trainer.step() << " steps, final loss "
            << trainer.last_loss() << "\n";
  std::cout << "checkpoint hash " << std::hex << model.weights_hash()
            << std::dec << "\n";
  return 0;
}

int run_decode(const RunConfig& rc) {
  const fs::path ckpt = require_path(rc.paths.checkpoint, "--ckpt");
  const fs::path vocab_path = require_path(rc.paths.vocab, "--vocab");
  const fs::path corpus = require_path(rc.paths.corpus, "--corpus");
  const fs::path out = require_out(rc.paths.out);
  rc.decode.validate();

  const Model model = Model::load(ckpt);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const std::vector<Utterance> utts = load_corpus(corpus);

  // Per-row instructions: JSONL {utterance_id, instruction}; rows
  // without a task entry fall back to --instruction.
  std::map<std::string, std::string> tasks;
  if (!rc.paths.tasks.empty()) {
    const fs::path tasks_path = require_path(rc.paths.tasks, "--tasks");
    std::ifstream in(tasks_path);
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
        throw UsageError("tasks line " + std::to_string(line_no) + ": " +
                         e.what());
      }
      if (!j.contains("utterance_id") || !j.contains("instruction")) {
        throw UsageError("tasks line " + std::to_string(line_no) +
                         ": need utterance_id and instruction");
      }
      tasks[j["utterance_id"].get<std::string>()] =
          j["instruction"].get<std::string>();
    }
  }

  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  std::ofstream os(out);
  if (!os) {
    throw std::runtime_error("cannot write decode output: " + out.string());
  }
  for (const Utterance& u : utts) {
    const auto it = tasks.find(u.id);
    const std::string& instruction =
        it == tasks.end() ? rc.instruction : it->second;
    const DecodeResult dr =
        decode_utterance(model, vocab, u.features, instruction, rc.decode);
    json row;
    row["utterance_id"] = u.id;
    row["instruction"] = instruction;
    row["hypothesis_text"] = dr.text;
    row["logprob"] = dr.best.logprob;
    row["score"] = dr.best.score;
    row["finished"] = dr.best.finished;
    os << row.dump() << "\n";
  }
  echo_config(rc, out, false);
  std::cout << "decoded " << utts.size() << " utterances -> " << out.string()
            << "\n";
  return 0;
}

int run_shell(const RunConfig& rc) {
  const fs::path ckpt = require_path(rc.paths.checkpoint, "--ckpt");
  const fs::path vocab_path = require_path(rc.paths.vocab, "--vocab");
  const fs::path corpus = require_path(rc.paths.corpus, "--corpus");
  rc.decode.validate();

  const Model model = Model::load(ckpt);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const std::vector<Utterance> utts = load_corpus(corpus);
  std::optional<InstructionBank> bank;
  if (!rc.paths.bank.empty()) {
    bank = InstructionBank::load(require_path(rc.paths.bank, "--bank"));
  }
  const std::vector<SkillSpec> candidates =
      bank_candidates(bank ? &*bank : nullptr);
  const CorpusStats stats = stats_of(utts);

  std::size_t selected = 0;
  if (!rc.shell_utt.empty()) {
    const auto it = std::find_if(utts.begin(), utts.end(),
                                 [&rc](const Utterance& u) {
                                   return u.id == rc.shell_utt;
                                 });
    if (it == utts.end()) {
      throw UsageError("unknown utterance id: " + rc.shell_utt);
    }
    selected = static_cast<std::size_t>(it - utts.begin());
  }

  std::cout << utts.size() << " utterances loaded; instruction per line, "
            << ":use <n|id> selects, :list shows ids, :quit exits\n";
  std::string line;
  while (true) {
    std::cout << "[" << utts[selected].id << "]> " << std::flush;
    if (!std::getline(std::cin, line)) {
      break;
    }
    if (line.empty()) {
      continue;
    }
    if (line[0] == ':') {
      std::istringstream cmd(line.substr(1));
      std::string verb;
      cmd >> verb;
      if (verb == "quit" || verb == "q" || verb == "exit") {
        break;
      }
      if (verb == "list") {
        std::size_t limit = 10;
        cmd >> limit;
        for (std::size_t i = 0; i < utts.size() && i < limit; ++i) {
          std::cout << i << "  " << utts[i].id << "  "
                    << utts[i].transcript.text() << "\n";
        }
        continue;
      }
      if (verb == "use") {
        std::string which;
        cmd >> which;
        bool found = false;
        for (std::size_t i = 0; i < utts.size(); ++i) {
          if (utts[i].id == which || std::to_string(i) == which) {
            selected = i;
            found = true;
            break;
          }
        }
        std::cout << (found ? "now at " + utts[selected].id
                            : "no such utterance: " + which)
                  << "\n";
        continue;
      }
      std::cout << "unknown command: " << verb << "\n";
      continue;
    }
    const Utterance& u = utts[selected];
    const DecodeResult dr =
        decode_utterance(model, vocab, u.features, line, rc.decode);
    SummarizeContext ctx;
    ctx.stats = &stats;
    ctx.utterance_id = u.id;
    const BehaviorCall call = classify_behavior(
        u.transcript, Transcript::from_text(dr.text), candidates, ctx);
    std::cout << (dr.text.empty() ? "(empty)" : dr.text) << "\n";
    std::cout << "skill: " << call.spec.describe() << " (distance "
              << call.distance << ", score " << dr.best.score << ")\n";
  }
  return 0;
}

int run_eval(const RunConfig& rc) {
  const fs::path ckpt = require_path(rc.paths.checkpoint, "--ckpt");
  const fs::path vocab_path = require_path(rc.paths.vocab, "--vocab");
  const fs::path corpus = require_path(rc.paths.corpus, "--corpus");
  const fs::path bank_path = require_path(rc.paths.bank, "--bank");
  const fs::path out = require_out(rc.paths.out);
  rc.decode.validate();
  fs::create_directories(out);

  const Model model = Model::load(ckpt);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const std::vector<Utterance> utts = load_corpus(corpus);
  const InstructionBank bank = InstructionBank::load(bank_path);
  const CorpusStats stats = stats_of(utts);
  std::optional<SummaryOverrides> overrides;
  if (!rc.paths.overrides.empty()) {
    overrides =
        SummaryOverrides::load(require_path(rc.paths.overrides, "--overrides"));
  }

  std::vector<EvalTask> tasks = build_suite_tasks(
      utts, bank, Split::Seen, rc.eval.templates_per_skill,
      rc.eval.utterances_per_template);
  const std::vector<EvalTask> unseen = build_suite_tasks(
      utts, bank, Split::Unseen, rc.eval.templates_per_skill,
      rc.eval.utterances_per_template);
  tasks.insert(tasks.end(), unseen.begin(), unseen.end());

  EvalOptions opts;
  opts.decode = rc.decode;
  opts.delta = rc.delta;
  opts.ctx.stats = &stats;
  opts.ctx.overrides = overrides ? &*overrides : nullptr;
  const EvalReport report = evaluate_suite(model, vocab, tasks, opts);

  const std::string table = format_report(report);
  std::cout << table;
  {
    std::ofstream os(out / "report.txt");
    os << table;
  }
  {
    std::ofstream os(out / "items.jsonl");
    for (const EvalItem& item : report.items) {
      json row;
      row["utterance_id"] = item.utterance_id;
      row["instruction"] = item.instruction;
      row["split"] = split_name(item.split);
      row["expected"] = item.expected.describe();
      row["expected_text"] = item.expected_text;
      row["output_text"] = item.output_text;
      row["distance"] = item.distance;
      row["classified"] = item.classified.describe();
      row["classified_distance"] = item.classified_distance;
      row["degenerate"] = item.degenerate;
      row["decode_failed"] = item.decode_failed;
      row["correct"] = item.correct;
      os << row.dump() << "\n";
    }
  }
  {
    json summary;
    for (int s = 0; s < kSkillCount; ++s) {
      const Skill skill = static_cast<Skill>(s);
      summary["accuracy"][skill_name(skill)] = {
          {"seen", report.skill(skill, Split::Seen).accuracy()},
          {"unseen", report.skill(skill, Split::Unseen).accuracy()},
          {"overall", report.skill_total(skill).accuracy()}};
    }
    summary["confusion"] = report.confusion;
    summary["transcribe_wer"] = report.transcribe_wer.wer();
    summary["decode_failures"] = report.decode_failures;
    summary["pairs"] = report.items.size();
    std::ofstream os(out / "summary.json");
    os << summary.dump(2) << "\n";
  }
  echo_config(rc, out, true);
  return 0;
}

std::optional<std::string> prescan_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      return std::string(argv[i + 1]);
    }
    if (arg.rfind("--config=", 0) == 0) {
      return arg.substr(std::string("--config=").size());
    }
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig rc;
  try {
    if (const auto cfg = prescan_config(argc, argv)) {
      apply_config_file(rc, *cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"instruction-following speech recognition toolkit"};
  app.require_subcommand(1);
  app.add_option("--config", rc.paths.config, "JSON config file");
  app.add_option("--seed", rc.seed, "root random seed");
  app.add_option("--alpha", rc.sampler.alpha, "transcribe sampling weight");
  app.add_option("--beta", rc.sampler.beta, "summarize sampling weight");
  app.add_option("--beam", rc.decode.beam, "beam width");
  app.add_option("--delta", rc.delta, "executed-skill distance threshold");
  app.add_option("--out", rc.paths.out, "output file or directory");

  CLI::App* synth = app.add_subcommand("synth", "build a synthetic corpus");
  CLI::App* vocab = app.add_subcommand("vocab", "train the tokenizer");
  vocab->add_option("--corpus", rc.paths.corpus, "corpus manifest or dir");
  vocab->add_option("--bank", rc.paths.bank, "instruction bank JSONL");
  vocab->add_option("--size", rc.vocab_size, "vocabulary size");
  CLI::App* build_data =
      app.add_subcommand("build-data", "emit composed training samples");
  build_data->add_option("--corpus", rc.paths.corpus, "corpus manifest or dir");
  build_data->add_option("--bank", rc.paths.bank, "instruction bank JSONL");
  build_data->add_option("--vocab", rc.paths.vocab, "vocabulary file");
  build_data->add_option("--overrides", rc.paths.overrides,
                         "summary override JSONL");
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--corpus", rc.paths.corpus,
                    "synth root (train/ and dev/) or manifest");
  train->add_option("--bank", rc.paths.bank, "instruction bank JSONL");
  train->add_option("--vocab", rc.paths.vocab, "vocabulary file");
  train->add_option("--overrides", rc.paths.overrides,
                    "summary override JSONL");
  train->add_option("--steps", rc.train.steps, "optimizer steps");
  train->add_flag("--transcribe-only", rc.train.transcribe_only,
                  "train the no-instruction baseline");
  CLI::App* decode = app.add_subcommand("decode", "batch decode a corpus");
  decode->add_option("--ckpt", rc.paths.checkpoint, "model checkpoint");
  decode->add_option("--vocab", rc.paths.vocab, "vocabulary file");
  decode->add_option("--corpus", rc.paths.corpus, "corpus manifest or dir");
  decode->add_option("--instruction", rc.instruction,
                     "instruction applied to every utterance");
  decode->add_option("--tasks", rc.paths.tasks,
                     "per-utterance instruction JSONL");
  CLI::App* shell = app.add_subcommand("shell", "interactive decoding");
  shell->add_option("--ckpt", rc.paths.checkpoint, "model checkpoint");
  shell->add_option("--vocab", rc.paths.vocab, "vocabulary file");
  shell->add_option("--corpus", rc.paths.corpus, "corpus manifest or dir");
  shell->add_option("--bank", rc.paths.bank,
                    "instruction bank for behavior classification");
  shell->add_option("--utt", rc.shell_utt, "initially selected utterance id");
  CLI::App* eval = app.add_subcommand("eval", "run the instruction suite");
  eval->add_option("--ckpt", rc.paths.checkpoint, "model checkpoint");
  eval->add_option("--vocab", rc.paths.vocab, "vocabulary file");
  eval->add_option("--corpus", rc.paths.corpus, "corpus manifest or dir");
  eval->add_option("--bank", rc.paths.bank, "instruction bank JSONL");
  eval->add_option("--overrides", rc.paths.overrides,
                   "summary override JSONL");
  eval->add_option("--templates", rc.eval.templates_per_skill,
                   "templates per skill per split");
  eval->add_option("--utterances", rc.eval.utterances_per_template,
                   "utterances per template");
  for (CLI::App* sub : {synth, vocab, build_data, train, decode, shell, eval}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      return run_synth(rc);
    }
    if (vocab->parsed()) {
      return run_vocab(rc);
    }
    if (build_data->parsed()) {
      return run_build_data(rc);
    }
    if (train->parsed()) {
      return run_train(rc);
    }
    if (decode->parsed()) {
      return run_decode(rc);
    }
    if (shell->parsed()) {
      return run_shell(rc);
    }
    if (eval->parsed()) {
      return run_eval(rc);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
