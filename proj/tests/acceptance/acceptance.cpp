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


// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero if any criterion fails. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pathlm/checkpoint.hpp"
#include "pathlm/corpus.hpp"
#include "pathlm/coverage.hpp"
#include "pathlm/encoder.hpp"
#include "pathlm/evaluation.hpp"
#include "pathlm/io.hpp"
#include "pathlm/synthcorpus.hpp"
#include "pathlm/training.hpp"
#include "pathlm/wordpiece.hpp"
#include "support/cli.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace pathlm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

std::string Fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::vector<std::string> Texts(std::span<const DiagnosisElement> elements) {
  std::vector<std::string> out;
  out.reserve(elements.size());
  for (const auto& e : elements) out.push_back(e.text);
  return out;
}

IdMatrix Ids(std::initializer_list<std::initializer_list<std::int32_t>> rows) {
  IdMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (auto v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// 1. Analytic gradients against central differences.
Outcome GradientOracle() {
  const auto start = Clock::now();
  EncoderConfig c;
  c.n_layers = 2;
  c.hidden_dim = 16;
  c.n_heads = 2;
  c.ff_dim = 32;
  c.max_seq_len = 8;
  c.vocab_size = 30;
  c.n_labels = 4;
  const IdMatrix ids = Ids({{2, 7, 11, 4, 19, 23, 3, 0}, {2, 29, 5, 6, 3, 0, 0, 0}});
  const IdMatrix mask = Ids({{1, 1, 1, 1, 1, 1, 1, 0}, {1, 1, 1, 1, 1, 0, 0, 0}});
  const auto w = init_weights<double>(c, 21);
  double worst = 0.0;
  std::string where;
  std::int64_t checked = 0;
  for (HeadMode mode : {HeadMode::kMlm, HeadMode::kCls}) {
    ForwardOptions opt;
    opt.mode = mode;
    std::vector<std::int32_t> targets;
    Matrix<double> cls_targets(2, 4);
    cls_targets << 1, 0, 1, 0, 0, 1, 0, 0;
    if (mode == HeadMode::kMlm) {
      opt.mlm_rows = {2, 3, 5, 9, 11};
      targets = {11, 4, 23, 5, 6};
    }
    auto loss = [&](const ModelWeights<double>& weights) {
      const auto r = forward(weights, ids, mask, opt);
      return mode == HeadMode::kMlm ? mlm_loss<double>(r.logits, targets).loss
                                    : cls_loss<double>(r.logits, cls_targets).loss;
    };
    const auto fwd = forward(w, ids, mask, opt);
    const auto lg = mode == HeadMode::kMlm ? mlm_loss<double>(fwd.logits, targets)
                                           : cls_loss<double>(fwd.logits, cls_targets);
    const auto r = testing::CheckGradients(w, backward(w, fwd.trace, lg.logit_grad), loss, 1e-5);
    checked += r.n_checked;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = r.worst_tensor;
    }
  }
  const double sec = Seconds(start);
  return {worst < 1e-3 && sec < 60.0,
          Fmt("max rel error %.3g over %.0f entries, %.1fs", worst, static_cast<double>(checked), sec) + " (worst " +
              where + ")"};
}

// 2. Round trip and greedy maximality on 10,000 unseen generated texts.
Outcome TokenizerRoundTrip() {
  const auto train = preprocess(generate(default_template_spec(10000, 42))).elements;
  const Vocabulary vocab = train_vocab(Texts(train), {13000, 1, true});
  const auto held_out = preprocess(generate(default_template_spec(12000, 7))).elements;
  if (held_out.size() < 10000) return {false, "fewer than 10000 generated texts"};
  int failures = 0;
  int unk = 0;
  std::int64_t pieces = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string& t = held_out[i].text;
    const auto seq = tokenize(t, vocab);
    pieces += static_cast<std::int64_t>(seq.pieces.size());
    if (std::count(seq.ids.begin(), seq.ids.end(), vocab.unk_id()) > 0) ++unk;
    if (detokenize(seq) != t || !testing::FirstNonMaximalWord(seq, vocab).empty()) ++failures;
  }
  return {failures == 0 && unk == 0,
          Fmt("10000 texts, %.0f pieces, %.0f failures, %.0f uncovered", static_cast<double>(pieces), failures, unk)};
}

// The default labeled corpus shared by criteria 3 and 6.
const std::vector<DiagnosisElement>& DefaultCorpus() {
  static const std::vector<DiagnosisElement> elements = preprocess(generate(default_template_spec(50000, 42))).elements;
  return elements;
}

// 3. Full-word coverage of a 13,000-piece vocabulary.
Outcome VocabularyCoverage() {
  const auto texts = Texts(DefaultCorpus());
  const Vocabulary vocab = train_vocab(texts, {13000, 2, true});
  const std::vector<int> thresholds{2, 10};
  const auto cov = word_coverage(texts, vocab, thresholds);
  const double at2 = cov.at(2).fraction;
  const double at10 = cov.at(10).fraction;
  return {texts.size() >= 50000 && at10 >= 0.99 && at2 >= 0.95,
          Fmt("%.0f elements, vocab %.0f, coverage %.4f at >=10, %.4f at >=2", static_cast<double>(texts.size()),
              vocab.size(), at10, at2)};
}

// 4 and 5 share one pretraining run.
struct MlmRun {
  MlmEvalReport report;
  double seconds = 0.0;
  int steps = 0;
};

const MlmRun& DeterministicMlmRun() {
  static const MlmRun run = [] {
    MlmRun out;
    const auto start = Clock::now();
    const auto elements = preprocess(generate(deterministic_template_spec(5000, 42))).elements;
    const auto split = make_split(elements, {}, 42);
    const Vocabulary vocab = train_vocab(Texts(split.train), {13000, 2, true});
    EncoderConfig mc;
    mc.n_layers = 2;
    mc.hidden_dim = 64;
    mc.n_heads = 2;
    mc.vocab_size = vocab.size();
    mc.max_seq_len = 32;
    PretrainConfig pc;
    pc.lr = 1e-3;
    pc.mask_rate = 0.45;
    pc.total_steps = 6000;
    pc.eval_every = 1000;
    out.steps = pc.total_steps;
    const auto trained = pretrain(split, vocab, mc, pc);
    MlmEvalOptions eo;
    eo.mask_rates = {0.15, 0.30, 0.45, 0.60, 0.75};
    out.report = eval_mlm(trained.weights, split.test, vocab, eo);
    out.seconds = Seconds(start);
    return out;
  }();
  return run;
}

// 4. Held-out masked accuracy on a corpus with deterministic slots.
Outcome MlmLearnability() {
  const auto& run = DeterministicMlmRun();
  const auto& rows = run.report.rows;
  bool top_k_ok = true;
  for (const auto& r : rows) top_k_ok = top_k_ok && r.top_k_accuracy >= r.accuracy;
  const double top1 = rows.at(0).accuracy;
  return {rows.at(0).mask_rate == 0.15 && top1 >= 0.90 && top_k_ok && run.steps <= 20000 && run.seconds < 1800,
          Fmt("top-1 %.4f top-5 %.4f at 0.15 after %.0f steps, %.0fs", top1, rows.at(0).top_k_accuracy, run.steps,
              run.seconds)};
}

// 5. Spread of top-1 accuracy across mask rates.
Outcome MaskRateStability() {
  const auto& rows = DeterministicMlmRun().report.rows;
  double lo = 1.0;
  double hi = 0.0;
  std::string detail;
  for (const auto& r : rows) {
    lo = std::min(lo, r.accuracy);
    hi = std::max(hi, r.accuracy);
    detail += Fmt("%.2f:%.4f ", r.mask_rate, r.accuracy);
  }
  return {rows.size() == 5 && hi - lo <= 0.05, detail + Fmt("spread %.4f", hi - lo)};
}

// 6. Fine-tuning at default settings, early stopping against the epoch log.
Outcome FinetuneOracle() {
  const auto split = make_split(DefaultCorpus(), {}, 42);
  const Vocabulary vocab = train_vocab(Texts(split.train), {13000, 2, true});
  EncoderConfig mc;
  mc.vocab_size = vocab.size();
  mc.max_seq_len = 64;
  PretrainConfig pc;
  pc.lr = 1e-3;
  pc.total_steps = 2000;
  pc.eval_every = 500;
  const auto encoder = pretrain(split, vocab, mc, pc);
  const FinetuneConfig fc;  // lr 2e-5, batch 32, 6 epochs, dropout 0.2
  const auto ft = finetune(encoder.weights, split.train, split.validation, vocab, fc);

  int best_epoch = 0;
  double best = -1.0;
  for (const auto& row : ft.log) {
    if (row.val_metric > best) {
      best = row.val_metric;
      best_epoch = static_cast<int>(row.step);
    }
  }
  // Re-score the returned weights on the development set.
  const auto pred = predict_labels(ft.weights, Texts(split.validation), vocab, fc.decision_threshold);
  Matrix<float> predicted = Matrix<float>::Zero(static_cast<Eigen::Index>(pred.size()),
                                                static_cast<Eigen::Index>(fc.labels.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int l : pred[i].labels) predicted(static_cast<Eigen::Index>(i), l) = 1.0f;
  }
  const double rescored = micro_f1(predicted, label_targets(split.validation, fc.labels));
  const bool consistent = best_epoch == ft.best_epoch && best == ft.best_dev_f1 && std::abs(rescored - best) < 1e-9;
  return {ft.log.size() <= 6 && best >= 0.95 && consistent,
          Fmt("best dev micro-F1 %.4f at epoch %.0f of %.0f, re-scored %.4f", best, best_epoch,
              static_cast<double>(ft.log.size()), rescored)};
}

// 7. Classification metrics against brute force; bootstrap and top-k properties.
Outcome MetricOracles() {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> labels{"a", "b", "c", "d", "e"};
  std::vector<LabelSet> pred;
  std::vector<LabelSet> truth;
  for (int i = 0; i < 200; ++i) {
    LabelSet p;
    LabelSet t;
    for (const auto& l : labels) {
      if (rng() % 3 == 0) p.push_back(l);
      if (rng() % 3 == 0) t.push_back(l);
    }
    pred.push_back(p);
    truth.push_back(t);
  }
  ClsEvalOptions opt;
  opt.n_bootstrap = 200;
  const auto r = eval_classification(pred, truth, labels, opt);
  const auto b = testing::BruteForceMetrics(pred, truth, labels);
  double err = 0.0;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    err = std::max({err, std::abs(r.per_label[l].precision.value - static_cast<double>(b.precision[l])),
                    std::abs(r.per_label[l].recall.value - static_cast<double>(b.recall[l])),
                    std::abs(r.per_label[l].f1.value - static_cast<double>(b.f1[l]))});
  }
  err = std::max({err, std::abs(r.micro_precision.value - static_cast<double>(b.micro_p)),
                  std::abs(r.micro_recall.value - static_cast<double>(b.micro_r)),
                  std::abs(r.micro_f1.value - static_cast<double>(b.micro_f1)),
                  std::abs(r.accuracy.value - static_cast<double>(b.accuracy))});

  const auto constant = eval_classification(truth, truth, labels, opt);
  const double width = std::max(constant.micro_f1.high - constant.micro_f1.low,
                                constant.accuracy.high - constant.accuracy.low);

  // Random logits over a 15-token vocabulary; top-k accuracy for k = 1..15.
  std::vector<std::string> tokens(kSpecialTokens, kSpecialTokens + kNumSpecialTokens);
  for (int n = 1; n <= 10; ++n) tokens.push_back("w" + std::to_string(n));
  const Vocabulary vocab = Vocabulary::from_tokens(tokens);
  std::vector<DiagnosisElement> texts;
  for (int n = 1; n <= 10; ++n) {
    DiagnosisElement e;
    for (int i = 0; i < 6; ++i) e.text += (i ? " w" : "w") + std::to_string((n + i) % 10 + 1);
    texts.push_back(e);
  }
  int non_monotone = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const MlmScorer scorer = [trial, &vocab](const IdMatrix& ids, const IdMatrix&,
                                             const std::vector<std::int32_t>& rows) {
      Matrix<float> out(static_cast<Eigen::Index>(rows.size()), vocab.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::mt19937_64 g(derive_seed(static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(rows[i]) +
                                                                             1000u * static_cast<std::uint64_t>(ids.rows())));
        std::normal_distribution<float> d;
        for (Eigen::Index v = 0; v < out.cols(); ++v) out(static_cast<Eigen::Index>(i), v) = d(g);
      }
      return out;
    };
    double prev = -1.0;
    for (int k = 1; k <= vocab.size(); ++k) {
      MlmEvalOptions eo;
      eo.k = k;
      eo.seed = static_cast<std::uint64_t>(trial);
      const double acc = eval_mlm(scorer, 8, texts, vocab, eo).rows.at(0).top_k_accuracy;
      if (acc < prev) ++non_monotone;
      prev = acc;
    }
    if (prev != 1.0) ++non_monotone;
  }
  return {err <= 1e-12 && width == 0.0 && non_monotone == 0,
          Fmt("max abs error %.3g, constant CI width %.3g, %.0f top-k monotonicity violations", err, width,
              non_monotone)};
}

// 8. Every subcommand, repeated and across thread counts, byte for byte.
Outcome Determinism() {
  const fs::path root = fs::temp_directory_path() / "pathlm_acceptance";
  const auto a = testing::RunPipeline(root / "t1a", 1);
  const auto b = testing::RunPipeline(root / "t1b", 1);
  const auto c = testing::RunPipeline(root / "t8", 8);
  std::string detail;
  for (const auto* run : {&a, &b, &c}) {
    for (const auto& f : run->failures) detail += f + "; ";
  }
  if (!detail.empty()) return {false, detail};
  int differing = 0;
  for (std::size_t i = 0; i < a.primary_outputs.size(); ++i) {
    const std::string x = testing::Slurp(a.primary_outputs[i]);
    if (x != testing::Slurp(b.primary_outputs[i]) || x != testing::Slurp(c.primary_outputs[i])) {
      ++differing;
      detail += a.primary_outputs[i].filename().string() + " differs; ";
    }
  }
  return {differing == 0, Fmt("%.0f primary outputs compared, %.0f differ", static_cast<double>(a.primary_outputs.size()),
                              differing) +
                              (detail.empty() ? "" : " (" + detail + ")")};
}

// 9. Save, load, forward: identical bits; foreign vocabulary hash refused.
Outcome CheckpointIntegrity() {
  std::vector<std::string> tokens(kSpecialTokens, kSpecialTokens + kNumSpecialTokens);
  for (int i = 0; i < 60; ++i) tokens.push_back("t" + std::to_string(i));
  const Vocabulary vocab = Vocabulary::from_tokens(tokens);
  tokens.push_back("extra");
  const Vocabulary other = Vocabulary::from_tokens(tokens);
  EncoderConfig c;
  c.n_layers = 2;
  c.hidden_dim = 32;
  c.n_heads = 4;
  c.ff_dim = 64;
  c.max_seq_len = 16;
  c.vocab_size = vocab.size();
  c.n_labels = 3;
  auto w = init_weights<float>(c, 11);
  init_cls_head(w, 3, 12);
  const fs::path dir = fs::temp_directory_path() / "pathlm_acceptance";
  fs::create_directories(dir);
  const fs::path path = dir / "integrity.ckpt";
  save_checkpoint(path, w, {c, vocab.content_hash(), 17, {"x", "y", "z"}});
  const auto loaded = load_checkpoint(path, vocab.content_hash(), c);

  std::mt19937_64 rng(5);
  IdMatrix ids(4, 16);
  IdMatrix mask = IdMatrix::Ones(4, 16);
  for (Eigen::Index i = 0; i < ids.size(); ++i) ids(i) = static_cast<std::int32_t>(rng() % vocab.size());
  mask.block(2, 10, 2, 6).setZero();
  bool identical = true;
  for (HeadMode mode : {HeadMode::kMlm, HeadMode::kCls}) {
    ForwardOptions opt;
    opt.mode = mode;
    const auto before = forward(w, ids, mask, opt).logits;
    const auto after = forward(loaded.weights, ids, mask, opt).logits;
    identical = identical && before.size() == after.size() &&
                std::memcmp(before.data(), after.data(), sizeof(float) * before.size()) == 0;
  }
  bool rejected = false;
  try {
    load_checkpoint(path, other.content_hash());
  } catch (const CheckpointError&) {
    rejected = true;
  }
  return {identical && rejected, std::string(identical ? "logits bit-identical" : "logits differ") +
                                     (rejected ? ", mismatched vocabulary rejected" : ", mismatch accepted")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle", GradientOracle},
      {"tokenizer round trip", TokenizerRoundTrip},
      {"vocabulary coverage", VocabularyCoverage},
      {"masked prediction learnability", MlmLearnability},
      {"mask-rate stability", MaskRateStability},
      {"fine-tuning oracle", FinetuneOracle},
      {"metric oracles", MetricOracles},
      {"determinism", Determinism},
      {"checkpoint integrity", CheckpointIntegrity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    Outcome o;
    const auto start = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(), o.detail.c_str(),
                Seconds(start));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
