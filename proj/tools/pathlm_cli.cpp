// Copyright 2026 The PathLM Authors.
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

// pathlm: command-line front end for every pipeline stage.
//
//   pathlm synth --out corpus.jsonl --n-reports 5000
//   pathlm preprocess --in corpus.jsonl --out elements.jsonl --split-dir splits
//   pathlm train-vocab --in splits/train.jsonl --out vocab.txt
//   pathlm pretrain --train splits/train.jsonl --validation splits/validation.jsonl \
//       --vocab vocab.txt --out model.plmc
//
// Exit codes: 0 success, 2 bad input or flags, 3 training diverged.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathlm/checkpoint.hpp"
#include "pathlm/corpus.hpp"
#include "pathlm/coverage.hpp"
#include "pathlm/evaluation.hpp"
#include "pathlm/io.hpp"
#include "pathlm/parallel.hpp"
#include "pathlm/synthcorpus.hpp"
#include "pathlm/training.hpp"
#include "pathlm/wordpiece.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace pathlm {
namespace {

constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;

std::uint64_t DefaultSeed() {
  if (const char* env = std::getenv("PATHLM_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw InputError(std::string("PATHLM_SEED is not an unsigned integer: ") + env);
    }
  }
  return 42;
}

struct Globals {
  std::string config;
  int threads = num_threads();
  std::uint64_t seed = 42;
};

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> ParseDoubles(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& item : SplitList(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError(flag + ": not a number: " + item);
    }
  }
  if (out.empty()) throw InputError(flag + ": empty list");
  return out;
}

std::vector<int> ParseInts(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  for (double v : ParseDoubles(text, flag)) {
    if (v != static_cast<int>(v)) throw InputError(flag + ": not an integer: " + format_number(v));
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void RequireFile(const std::string& path) {
  if (!fs::exists(path)) throw InputError("no such file: " + path);
}

std::vector<std::string> Texts(const std::vector<DiagnosisElement>& elements) {
  std::vector<std::string> out;
  for (const auto& e : elements) out.push_back(e.text);
  return out;
}

// Effective values of every long option of `cmd`, as given or defaulted.
ordered_json EffectiveConfig(const CLI::App& cmd) {
  ordered_json j = ordered_json::object();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string& name = opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& results = opt->results();
      j[name] = opt->get_expected_max() == 0 ? ordered_json(true) : ordered_json(results.back());
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

class Run {
 public:
  Run(const CLI::App& app, const CLI::App& cmd, const Globals& globals)
      : app_(app), cmd_(cmd), globals_(globals), start_(std::chrono::steady_clock::now()) {}

  void add_output(const std::string& path) { outputs_.push_back(path); }
  void set(const std::string& key, ordered_json value) { extra_[key] = std::move(value); }

  // The manifest sits next to the primary output. Everything that varies
  // between identical runs lives under "run".
  void write_manifest(const std::string& primary) const {
    ordered_json j;
    j["command"] = cmd_.get_name();
    j["seed"] = globals_.seed;
    j["threads"] = globals_.threads;
    j["config_file"] = globals_.config;
    j["effective_config"] = EffectiveConfig(cmd_);
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    j["outputs"] = outputs_;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char stamp[32];
    const std::time_t now = std::time(nullptr);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["run"] = {{"finished_at", stamp}, {"wall_time_seconds", wall}};
    write_file_atomic(primary + ".manifest.json", j.dump(2) + "\n");
    (void)app_;
  }

 private:
  const CLI::App& app_;
  const CLI::App& cmd_;
  const Globals& globals_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
  ordered_json extra_ = ordered_json::object();
};

// --- subcommands -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string spec;
  std::string kind = "default";
  int n_reports = 1000;
  std::string write_spec;
};

void CmdSynth(const SynthArgs& a, Run& run, std::uint64_t seed) {
  TemplateSpec spec;
  if (!a.spec.empty()) {
    RequireFile(a.spec);
    spec = template_spec_from_json(read_file(a.spec));
  } else if (a.kind == "default") {
    spec = default_template_spec(a.n_reports, seed);
  } else if (a.kind == "deterministic") {
    spec = deterministic_template_spec(a.n_reports, seed);
  } else {
    throw InputError("--kind must be default or deterministic");
  }
  // Flags given explicitly win over a spec file.
  if (a.spec.empty() || a.n_reports != 1000) spec.n_reports = a.n_reports;
  spec.seed = seed;
  const auto reports = generate(spec);
  write_file_atomic(a.out, reports_to_jsonl(reports));
  run.add_output(a.out);
  if (!a.write_spec.empty()) {
    write_file_atomic(a.write_spec, template_spec_to_json(spec));
    run.add_output(a.write_spec);
  }
  std::cout << "synth: " << reports.size() << " reports -> " << a.out << "\n";
}

struct PreprocessArgs {
  std::string in;
  std::string out;
  std::string format = "jsonl";
  std::string section = "DIAGNOSIS";
  std::string stats;
  std::string split_dir;
  std::string ratios = "0.7,0.1,0.2";
};

void CmdPreprocess(const PreprocessArgs& a, Run& run, std::uint64_t seed) {
  if (!fs::exists(a.in)) throw InputError("no such input: " + a.in);
  CorpusFormat format;
  if (a.format == "jsonl") {
    format = CorpusFormat::kJsonl;
  } else if (a.format == "plain-dir") {
    format = CorpusFormat::kPlainDir;
  } else {
    throw InputError("--format must be jsonl or plain-dir");
  }
  const std::vector<double> r = ParseDoubles(a.ratios, "--ratios");
  if (r.size() != 3) throw InputError("--ratios needs three values");

  const IngestResult ingested = ingest(a.in, format);
  for (const auto& d : ingested.diagnostics) std::cerr << "skipped: " << d << "\n";
  const PreprocessResult pre = preprocess(ingested.reports, a.section);
  write_file_atomic(a.out, elements_to_jsonl(pre.elements));
  run.add_output(a.out);
  const std::string stats_path = a.stats.empty() ? a.out + ".stats.json" : a.stats;
  write_file_atomic(stats_path, stats_to_json(compute_stats(pre.elements)));
  run.add_output(stats_path);
  run.set("counts", {{"reports", ingested.reports.size()},
                     {"skipped_records", ingested.skipped},
                     {"reports_without_section", pre.reports_without_section},
                     {"duplicate_elements", pre.duplicate_elements},
                     {"elements", pre.elements.size()}});
  if (!a.split_dir.empty()) {
    const CorpusSplit split = make_split(pre.elements, {r[0], r[1], r[2]}, seed);
    fs::create_directories(a.split_dir);
    for (const auto& [name, part] : {std::pair{"train", &split.train}, std::pair{"validation", &split.validation},
                                     std::pair{"test", &split.test}}) {
      const std::string path = (fs::path(a.split_dir) / (std::string(name) + ".jsonl")).string();
      write_file_atomic(path, elements_to_jsonl(*part));
      run.add_output(path);
    }
  }
  std::cout << "preprocess: " << pre.elements.size() << " elements from " << ingested.reports.size()
            << " reports (" << ingested.skipped << " records skipped) -> " << a.out << "\n";
}

struct TrainVocabArgs {
  std::string in;
  std::string out;
  int vocab_size = 13000;
  int min_frequency = 2;
};

void CmdTrainVocab(const TrainVocabArgs& a, Run& run) {
  RequireFile(a.in);
  const auto texts = Texts(read_elements_jsonl(a.in));
  const Vocabulary vocab = train_vocab(texts, {a.vocab_size, a.min_frequency, true});
  vocab.save(a.out);
  run.add_output(a.out);
  run.set("vocab_hash", vocab.content_hash());
  std::cout << "train-vocab: " << vocab.size() << " tokens -> " << a.out << "\n";
}

struct CoverageArgs {
  std::string in;
  std::string vocab;
  std::string out;
  std::string thresholds = "1,2,5,10,20,50,100";
  std::string threshold_csv;
  std::string class_csv;
};

void CmdCoverage(const CoverageArgs& a, Run& run) {
  RequireFile(a.in);
  RequireFile(a.vocab);
  const Vocabulary vocab = Vocabulary::load(a.vocab, false);
  const auto elements = read_elements_jsonl(a.in);
  CoverageReport report;
  report.per_threshold = word_coverage(Texts(elements), vocab, ParseInts(a.thresholds, "--thresholds"));
  std::vector<DiagnosisElement> labeled;
  for (const auto& e : elements) {
    if (e.labels && !e.labels->empty()) labeled.push_back(e);
  }
  if (!labeled.empty()) report.per_class = class_coverage(labeled, vocab);
  write_file_atomic(a.out, coverage_to_json(report));
  run.add_output(a.out);
  if (!a.threshold_csv.empty()) {
    write_file_atomic(a.threshold_csv, threshold_coverage_to_csv(report.per_threshold));
    run.add_output(a.threshold_csv);
  }
  if (!a.class_csv.empty()) {
    write_file_atomic(a.class_csv, class_coverage_to_csv(report.per_class));
    run.add_output(a.class_csv);
  }
  run.set("vocab_hash", vocab.content_hash());
  const auto& [t, c] = *report.per_threshold.rbegin();
  std::cout << "coverage: fraction " << format_number(c.fraction, 4) << " at threshold " << t << " -> " << a.out
            << "\n";
}

struct ModelArgs {
  int layers = 2;
  int hidden = 64;
  int heads = 2;
  int ff = 256;
  int max_seq_len = 64;
  double dropout = 0.1;
};

struct PretrainArgs {
  std::string train;
  std::string validation;
  std::string vocab;
  std::string out;
  std::string log;
  std::string init;
  ModelArgs model;
  double mask_rate = 0.15;
  int batch_size = 32;
  double lr = 2e-5;
  int steps = 1000;
  int eval_every = 100;
  int eval_max_texts = 1024;
};

void CmdPretrain(const PretrainArgs& a, Run& run, std::uint64_t seed) {
  RequireFile(a.train);
  RequireFile(a.vocab);
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  CorpusSplit split;
  split.train = read_elements_jsonl(a.train);
  if (!a.validation.empty()) {
    RequireFile(a.validation);
    split.validation = read_elements_jsonl(a.validation);
  }
  EncoderConfig mc;
  mc.n_layers = a.model.layers;
  mc.hidden_dim = a.model.hidden;
  mc.n_heads = a.model.heads;
  mc.ff_dim = a.model.ff;
  mc.max_seq_len = a.model.max_seq_len;
  mc.dropout_rate = a.model.dropout;
  mc.vocab_size = vocab.size();
  try {
    mc.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  PretrainConfig pc;
  pc.mask_rate = a.mask_rate;
  pc.batch_size = a.batch_size;
  pc.lr = a.lr;
  pc.total_steps = a.steps;
  pc.eval_every = a.eval_every;
  pc.eval_max_texts = a.eval_max_texts;
  pc.seed = seed;
  pc.last_good_path = a.out + ".last_good";

  std::optional<Checkpoint> init;
  if (!a.init.empty()) init = load_checkpoint(a.init, vocab.content_hash(), mc);
  const TrainResult result = pretrain(split, vocab, mc, pc, init ? &init->weights : nullptr);
  const std::int64_t step = (init ? init->meta.step : 0) + a.steps;
  save_checkpoint(a.out, result.weights, {mc, vocab.content_hash(), step, {}});
  run.add_output(a.out);
  const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  write_file_atomic(log_path, training_log_to_csv(result.log));
  run.add_output(log_path);
  run.set("vocab_hash", vocab.content_hash());
  run.set("model_config", encoder_config_to_json(mc));

  std::cout << "pretrain: " << a.steps << " steps";
  if (!result.log.empty()) std::cout << ", final train loss " << format_number(result.log.back().train_loss, 5);
  for (auto it = result.log.rbegin(); it != result.log.rend(); ++it) {
    if (!std::isnan(it->val_metric)) {
      std::cout << ", validation masked accuracy " << format_number(it->val_metric, 4);
      break;
    }
  }
  std::cout << " -> " << a.out << "\n";
}

struct FinetuneArgs {
  std::string train;
  std::string dev;
  std::string checkpoint;
  std::string vocab;
  std::string out;
  std::string log;
  std::string labels;
  int epochs = 6;
  int batch_size = 32;
  double lr = 2e-5;
  double dropout = 0.2;
  int patience = 10;
  double threshold = 0.5;
};

std::string DefaultLabelList() {
  std::string out;
  for (const auto& l : default_severity_labels()) out += (out.empty() ? "" : ",") + l;
  return out;
}

void CmdFinetune(const FinetuneArgs& a, Run& run, std::uint64_t seed) {
  RequireFile(a.train);
  RequireFile(a.checkpoint);
  RequireFile(a.vocab);
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint, vocab.content_hash());
  std::vector<DiagnosisElement> dev;
  if (!a.dev.empty()) {
    RequireFile(a.dev);
    dev = read_elements_jsonl(a.dev);
  }
  FinetuneConfig fc;
  fc.labels = SplitList(a.labels);
  fc.epochs = a.epochs;
  fc.batch_size = a.batch_size;
  fc.lr = a.lr;
  fc.dropout = a.dropout;
  fc.patience = a.patience;
  fc.decision_threshold = a.threshold;
  fc.seed = seed;
  try {
    fc.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const FinetuneResult result = finetune(ckpt.weights, read_elements_jsonl(a.train), std::move(dev), vocab, fc);
  save_checkpoint(a.out, result.weights, {result.weights.config, vocab.content_hash(), ckpt.meta.step, fc.labels});
  run.add_output(a.out);
  const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  write_file_atomic(log_path, training_log_to_csv(result.log));
  run.add_output(log_path);
  run.set("vocab_hash", vocab.content_hash());
  run.set("best_epoch", result.best_epoch);
  std::cout << "finetune: best development micro-F1 " << format_number(result.best_dev_f1, 4) << " at epoch "
            << result.best_epoch << " -> " << a.out << "\n";
}

struct EvalMlmArgs {
  std::string checkpoint;
  std::string vocab;
  std::string in;
  std::string out;
  std::string csv;
  std::string mask_rates = "0.15";
  int k = 5;
};

void CmdEvalMlm(const EvalMlmArgs& a, Run& run, std::uint64_t seed) {
  RequireFile(a.checkpoint);
  RequireFile(a.vocab);
  RequireFile(a.in);
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint, vocab.content_hash());
  MlmEvalOptions options;
  options.mask_rates = ParseDoubles(a.mask_rates, "--mask-rates");
  options.k = a.k;
  options.seed = seed;
  const auto elements = read_elements_jsonl(a.in);
  const MlmEvalReport report = eval_mlm(ckpt.weights, elements, vocab, options);
  write_file_atomic(a.out, mlm_report_to_json(report));
  run.add_output(a.out);
  if (!a.csv.empty()) {
    write_file_atomic(a.csv, mlm_report_to_csv(report));
    run.add_output(a.csv);
  }
  run.set("vocab_hash", vocab.content_hash());
  std::cout << "eval-mlm: " << report.rows.size() << " rates, top-1 " << format_number(report.rows[0].accuracy, 4)
            << " / top-" << report.k << " " << format_number(report.rows[0].top_k_accuracy, 4) << " at rate "
            << format_number(report.rows[0].mask_rate) << " -> " << a.out << "\n";
}

struct EvalClsArgs {
  std::string checkpoint;
  std::string vocab;
  std::string in;
  std::string out;
  std::string csv;
  std::string predictions;
  double threshold = 0.5;
  int bootstrap = 1000;
  double ci = 0.95;
};

void CmdEvalCls(const EvalClsArgs& a, Run& run, std::uint64_t seed) {
  RequireFile(a.checkpoint);
  RequireFile(a.vocab);
  RequireFile(a.in);
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint, vocab.content_hash());
  if (!ckpt.weights.has_cls_head() || ckpt.meta.labels.empty()) {
    throw InputError("checkpoint has no classification head: " + a.checkpoint);
  }
  const auto elements = read_elements_jsonl(a.in);
  const auto texts = Texts(elements);
  const auto preds = predict_labels(ckpt.weights, texts, vocab, a.threshold);
  std::vector<LabelSet> predicted, truth;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    LabelSet p;
    for (int l : preds[i].labels) p.push_back(ckpt.meta.labels[static_cast<std::size_t>(l)]);
    predicted.push_back(std::move(p));
    truth.push_back(elements[i].labels.value_or(LabelSet{}));
  }
  const ClsEvalReport report = eval_classification(predicted, truth, ckpt.meta.labels, {a.bootstrap, a.ci, seed});
  write_file_atomic(a.out, cls_report_to_json(report));
  run.add_output(a.out);
  if (!a.csv.empty()) {
    write_file_atomic(a.csv, cls_report_to_csv(report));
    run.add_output(a.csv);
  }
  if (!a.predictions.empty()) {
    std::string lines;
    for (std::size_t i = 0; i < elements.size(); ++i) {
      ordered_json j;
      j["report_id"] = elements[i].source_report_id;
      j["text"] = elements[i].text;
      j["labels"] = predicted[i];
      ordered_json probs = ordered_json::object();
      for (std::size_t l = 0; l < ckpt.meta.labels.size(); ++l) probs[ckpt.meta.labels[l]] = preds[i].probabilities[l];
      j["probabilities"] = std::move(probs);
      lines += j.dump() + "\n";
    }
    write_file_atomic(a.predictions, lines);
    run.add_output(a.predictions);
  }
  run.set("vocab_hash", vocab.content_hash());
  std::cout << "eval-cls: micro-F1 " << format_number(report.micro_f1.value, 4) << " ["
            << format_number(report.micro_f1.low, 4) << ", " << format_number(report.micro_f1.high, 4)
            << "], exact-match accuracy " << format_number(report.accuracy.value, 4) << " -> " << a.out << "\n";
}

struct DumpArgs {
  std::string checkpoint;
  std::string vocab;
  std::string in;
  std::string out;
  int top_n = 3;
};

void CmdDump(const DumpArgs& a, Run& run) {
  RequireFile(a.checkpoint);
  RequireFile(a.vocab);
  RequireFile(a.in);
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint, vocab.content_hash());
  std::vector<std::string> sentences;
  std::stringstream in(read_file(a.in));
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) sentences.push_back(line);
  }
  const auto rows = dump_inferences(ckpt.weights, sentences, vocab, a.top_n);
  write_file_atomic(a.out, inferences_to_markdown(rows));
  run.add_output(a.out);
  run.set("vocab_hash", vocab.content_hash());
  const auto errors = std::count_if(rows.begin(), rows.end(), [](const InferenceRow& r) { return r.error.has_value(); });
  std::cout << "dump: " << rows.size() << " sentences (" << errors << " errors) -> " << a.out << "\n";
}

// Rewrites argv so that keys of the --config JSON object become flags placed
// right after the subcommand name. Flags given on the command line come later
// and win, since every option keeps its last value.
std::vector<std::string> InjectConfig(std::vector<std::string> args, const std::vector<std::string>& subcommands,
                                      std::string* config_path) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      *config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      *config_path = args[i].substr(9);
    }
  }
  if (config_path->empty()) return args;
  RequireFile(*config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(*config_path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + *config_path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw InputError("config " + *config_path + " must be a JSON object");
  std::vector<std::string> injected;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back("--" + key);
    } else if (value.is_string()) {
      injected.push_back("--" + key + "=" + value.get<std::string>());
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) {
        joined += (joined.empty() ? "" : ",") + (item.is_string() ? item.get<std::string>() : item.dump());
      }
      injected.push_back("--" + key + "=" + joined);
    } else if (value.is_number()) {
      injected.push_back("--" + key + "=" + value.dump());
    } else {
      throw InputError("config key '" + key + "' has an unsupported value");
    }
  }
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (std::find(subcommands.begin(), subcommands.end(), args[i]) != subcommands.end()) {
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(i) + 1, injected.begin(), injected.end());
      return args;
    }
  }
  return args;
}

void AddModelFlags(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--layers", m.layers, "Transformer layers");
  cmd->add_option("--hidden", m.hidden, "Hidden size");
  cmd->add_option("--heads", m.heads, "Attention heads (must divide --hidden)");
  cmd->add_option("--ff", m.ff, "Feed-forward inner size");
  cmd->add_option("--max-seq-len", m.max_seq_len, "Maximum sequence length including [CLS] and [SEP]");
  cmd->add_option("--dropout", m.dropout, "Dropout rate during pretraining");
}

int Main(int argc, char** argv) {
  Globals globals;
  globals.seed = DefaultSeed();

  CLI::App app{"Pathology report language modeling toolkit", "pathlm"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  app.add_option("--config", globals.config, "JSON object of flag values; flags on the command line win");
  app.add_option("--threads", globals.threads, "Worker threads (outputs do not depend on this)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", globals.seed, "Random seed (default from PATHLM_SEED, else 42)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic report corpus (JSONL)");
  c_synth->add_option("--out", synth.out, "Output reports JSONL")->required();
  c_synth->add_option("--spec", synth.spec, "Template spec JSON (default: bundled spec chosen by --kind)");
  c_synth->add_option("--kind", synth.kind, "Bundled spec: default or deterministic");
  c_synth->add_option("--n-reports", synth.n_reports, "Number of reports");
  c_synth->add_option("--write-spec", synth.write_spec, "Also write the effective spec JSON here");

  PreprocessArgs prep;
  auto* c_prep = app.add_subcommand("preprocess", "Extract, split and normalize diagnosis elements");
  c_prep->add_option("--in", prep.in, "Reports JSONL file or plain-text directory")->required();
  c_prep->add_option("--out", prep.out, "Output elements JSONL")->required();
  c_prep->add_option("--format", prep.format, "jsonl or plain-dir");
  c_prep->add_option("--section", prep.section, "Section to extract");
  c_prep->add_option("--stats", prep.stats, "Statistics JSON (default: <out>.stats.json)");
  c_prep->add_option("--split-dir", prep.split_dir, "Write train/validation/test JSONL here");
  c_prep->add_option("--ratios", prep.ratios, "train,validation,test ratios");

  TrainVocabArgs tv;
  auto* c_tv = app.add_subcommand("train-vocab", "Train a WordPiece vocabulary");
  c_tv->add_option("--in", tv.in, "Elements JSONL")->required();
  c_tv->add_option("--out", tv.out, "Vocabulary file (one token per line)")->required();
  c_tv->add_option("--vocab-size", tv.vocab_size, "Vocabulary size including special tokens");
  c_tv->add_option("--min-frequency", tv.min_frequency, "Minimum word and pair frequency");

  CoverageArgs cov;
  auto* c_cov = app.add_subcommand("coverage", "Full-word and per-class vocabulary coverage");
  c_cov->add_option("--in", cov.in, "Elements JSONL")->required();
  c_cov->add_option("--vocab", cov.vocab, "Vocabulary file (any toolkit)")->required();
  c_cov->add_option("--out", cov.out, "Coverage report JSON")->required();
  c_cov->add_option("--thresholds", cov.thresholds, "Comma-separated ascending frequency thresholds");
  c_cov->add_option("--threshold-csv", cov.threshold_csv, "Also write threshold,covered,total,fraction CSV");
  c_cov->add_option("--class-csv", cov.class_csv, "Also write class,np,nn,ratio,support CSV");

  PretrainArgs pt;
  auto* c_pt = app.add_subcommand("pretrain", "Masked language model pretraining");
  c_pt->add_option("--train", pt.train, "Training elements JSONL")->required();
  c_pt->add_option("--validation", pt.validation, "Validation elements JSONL");
  c_pt->add_option("--vocab", pt.vocab, "Vocabulary file")->required();
  c_pt->add_option("--out", pt.out, "Output checkpoint")->required();
  c_pt->add_option("--log", pt.log, "Training log CSV (default: <out>.log.csv)");
  c_pt->add_option("--init", pt.init, "Continue from this checkpoint");
  AddModelFlags(c_pt, pt.model);
  c_pt->add_option("--mask-rate", pt.mask_rate, "Masking probability");
  c_pt->add_option("--batch-size", pt.batch_size, "Batch size");
  c_pt->add_option("--lr", pt.lr, "Adam learning rate (constant)");
  c_pt->add_option("--steps", pt.steps, "Optimizer steps");
  c_pt->add_option("--eval-every", pt.eval_every, "Validation interval in steps");
  c_pt->add_option("--eval-max-texts", pt.eval_max_texts, "Validation texts used per evaluation");

  FinetuneArgs ft;
  ft.labels = DefaultLabelList();
  auto* c_ft = app.add_subcommand("finetune", "Multi-label classification fine-tuning");
  c_ft->add_option("--train", ft.train, "Labeled training elements JSONL")->required();
  c_ft->add_option("--dev", ft.dev, "Development elements JSONL (default: 10% of --train)");
  c_ft->add_option("--checkpoint", ft.checkpoint, "Pretrained checkpoint")->required();
  c_ft->add_option("--vocab", ft.vocab, "Vocabulary file")->required();
  c_ft->add_option("--out", ft.out, "Output checkpoint")->required();
  c_ft->add_option("--log", ft.log, "Epoch log CSV (default: <out>.log.csv)");
  c_ft->add_option("--labels", ft.labels, "Comma-separated label names");
  c_ft->add_option("--epochs", ft.epochs, "Epochs");
  c_ft->add_option("--batch-size", ft.batch_size, "Batch size");
  c_ft->add_option("--lr", ft.lr, "Adam learning rate");
  c_ft->add_option("--dropout", ft.dropout, "Dropout rate");
  c_ft->add_option("--patience", ft.patience, "Early-stopping patience in epochs");
  c_ft->add_option("--threshold", ft.threshold, "Decision threshold (probability >= threshold)");

  EvalMlmArgs em;
  auto* c_em = app.add_subcommand("eval-mlm", "Masked prediction accuracy across mask rates");
  c_em->add_option("--checkpoint", em.checkpoint, "Checkpoint")->required();
  c_em->add_option("--vocab", em.vocab, "Vocabulary file")->required();
  c_em->add_option("--in", em.in, "Elements JSONL")->required();
  c_em->add_option("--out", em.out, "Report JSON")->required();
  c_em->add_option("--csv", em.csv, "Also write a CSV report");
  c_em->add_option("--mask-rates", em.mask_rates, "Comma-separated mask rates in (0,1)");
  c_em->add_option("--k", em.k, "Top-k cutoff");

  EvalClsArgs ec;
  auto* c_ec = app.add_subcommand("eval-cls", "Classification metrics with bootstrap intervals");
  c_ec->add_option("--checkpoint", ec.checkpoint, "Fine-tuned checkpoint")->required();
  c_ec->add_option("--vocab", ec.vocab, "Vocabulary file")->required();
  c_ec->add_option("--in", ec.in, "Labeled elements JSONL")->required();
  c_ec->add_option("--out", ec.out, "Report JSON")->required();
  c_ec->add_option("--csv", ec.csv, "Also write a CSV report");
  c_ec->add_option("--predictions", ec.predictions, "Also write per-element predictions JSONL");
  c_ec->add_option("--threshold", ec.threshold, "Decision threshold");
  c_ec->add_option("--bootstrap", ec.bootstrap, "Bootstrap resamples");
  c_ec->add_option("--ci", ec.ci, "Confidence level");

  DumpArgs dump;
  auto* c_dump = app.add_subcommand("dump", "Top predictions for sentences with one [MASK]");
  c_dump->add_option("--checkpoint", dump.checkpoint, "Checkpoint")->required();
  c_dump->add_option("--vocab", dump.vocab, "Vocabulary file")->required();
  c_dump->add_option("--in", dump.in, "Text file, one sentence per line")->required();
  c_dump->add_option("--out", dump.out, "Markdown table")->required();
  c_dump->add_option("--top-n", dump.top_n, "Predictions per sentence");

  std::vector<std::string> names;
  for (const CLI::App* sub : app.get_subcommands({})) names.push_back(sub->get_name());
  std::vector<std::string> args(argv, argv + argc);
  std::string config_path;
  args = InjectConfig(std::move(args), names, &config_path);
  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }
  set_num_threads(globals.threads);

  const CLI::App* cmd = app.get_subcommands().front();
  Run run(app, *cmd, globals);
  const std::string name = cmd->get_name();
  std::string primary;
  if (name == "synth") {
    CmdSynth(synth, run, globals.seed);
    primary = synth.out;
  } else if (name == "preprocess") {
    CmdPreprocess(prep, run, globals.seed);
    primary = prep.out;
  } else if (name == "train-vocab") {
    CmdTrainVocab(tv, run);
    primary = tv.out;
  } else if (name == "coverage") {
    CmdCoverage(cov, run);
    primary = cov.out;
  } else if (name == "pretrain") {
    CmdPretrain(pt, run, globals.seed);
    primary = pt.out;
  } else if (name == "finetune") {
    CmdFinetune(ft, run, globals.seed);
    primary = ft.out;
  } else if (name == "eval-mlm") {
    CmdEvalMlm(em, run, globals.seed);
    primary = em.out;
  } else if (name == "eval-cls") {
    CmdEvalCls(ec, run, globals.seed);
    primary = ec.out;
  } else {
    CmdDump(dump, run);
    primary = dump.out;
  }
  run.write_manifest(primary);
  return 0;
}

}  // namespace
}  // namespace pathlm

int main(int argc, char** argv) {
  try {
    return pathlm::Main(argc, argv);
  } catch (const pathlm::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pathlm::kExitDiverged;
  } catch (const pathlm::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pathlm::kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pathlm::kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
