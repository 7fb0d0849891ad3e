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

#include "pathlm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "pathlm/io.hpp"

namespace pathlm {

namespace {

using nlohmann::ordered_json;

bool Maskable(const EncodedText& enc) {
  return std::any_of(enc.ids.begin(), enc.ids.end(), [](std::int32_t id) { return id >= kNumSpecialTokens; });
}

struct Hits {
  std::int64_t n = 0;
  std::int64_t top1 = 0;
  std::int64_t top_k = 0;
};

double Ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MlmEvalReport eval_mlm(const MlmScorer& scorer, int max_seq_len, std::span<const DiagnosisElement> texts,
                       const Vocabulary& vocab, const MlmEvalOptions& options) {
  if (texts.empty()) throw std::invalid_argument("empty text list");
  if (options.mask_rates.empty()) throw std::invalid_argument("no mask rates");
  for (double r : options.mask_rates) {
    if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("mask rates must be in (0, 1)");
  }
  if (options.k < 1) throw std::invalid_argument("k must be positive");
  if (options.batch_size < 1) throw std::invalid_argument("batch_size must be positive");

  MlmEvalReport report;
  report.k = options.k;
  report.seed = options.seed;
  report.n_texts = static_cast<std::int64_t>(texts.size());

  // Source index of every maskable text.
  std::vector<std::size_t> kept;
  std::vector<std::string> kept_texts;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (Maskable(encode_for_model(texts[i].text, vocab, max_seq_len))) {
      kept.push_back(i);
      kept_texts.push_back(texts[i].text);
    }
  }
  report.n_skipped = static_cast<std::int64_t>(texts.size() - kept.size());
  if (kept.empty()) throw std::invalid_argument("no text has a maskable token");
  const EncodedCorpus corpus = encode_corpus(kept_texts, vocab, max_seq_len);

  for (std::size_t r = 0; r < options.mask_rates.size(); ++r) {
    const std::uint64_t rate_seed = derive_seed(options.seed, r);
    Hits pooled;
    std::map<std::string, Hits> per_class;
    for (std::size_t start = 0; start < kept.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(kept.size(), start + static_cast<std::size_t>(options.batch_size));
      std::vector<std::size_t> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      std::vector<std::uint64_t> row_seeds;
      for (std::size_t j : idx) row_seeds.push_back(derive_seed(rate_seed, kept[j]));
      auto [ids, mask] = corpus.gather(idx);
      const MaskedBatch mb = corrupt(ids, mask, options.mask_rates[r], rate_seed, vocab.size(), row_seeds);
      const auto rows = mb.flat_rows();
      const auto targets = mb.targets();
      const Matrix<float> logits = scorer(mb.input_ids, mb.attention_mask, rows);
      if (logits.rows() != static_cast<Eigen::Index>(rows.size()) || logits.cols() != vocab.size()) {
        throw std::invalid_argument("scorer returned logits of the wrong shape");
      }
      std::size_t flat = 0;
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto& labels = texts[kept[idx[b]]].labels;
        for (std::size_t m = 0; m < mb.mask_positions[b].size(); ++m, ++flat) {
          const std::int64_t rank = token_rank(logits.row(static_cast<Eigen::Index>(flat)), targets[flat]);
          auto add = [&](Hits& h) {
            ++h.n;
            h.top1 += rank == 0;
            h.top_k += rank < options.k;
          };
          add(pooled);
          if (labels) {
            for (const auto& label : std::set<std::string>(labels->begin(), labels->end())) add(per_class[label]);
          }
        }
      }
    }
    MlmRateRow row;
    row.mask_rate = options.mask_rates[r];
    row.n_masked = pooled.n;
    row.accuracy = Ratio(pooled.top1, pooled.n);
    row.top_k_accuracy = Ratio(pooled.top_k, pooled.n);
    for (const auto& [label, h] : per_class) {
      row.per_class[label] = {Ratio(h.top1, h.n), Ratio(h.top_k, h.n), h.n};
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

MlmEvalReport eval_mlm(const ModelWeights<float>& weights, std::span<const DiagnosisElement> texts,
                       const Vocabulary& vocab, const MlmEvalOptions& options) {
  if (vocab.size() != weights.config.vocab_size) throw InputError("vocabulary does not match model");
  return eval_mlm(model_scorer(weights), weights.config.max_seq_len, texts, vocab, options);
}

std::string mlm_report_to_json(const MlmEvalReport& report) {
  ordered_json j;
  j["k"] = report.k;
  j["seed"] = report.seed;
  j["n_texts"] = report.n_texts;
  j["n_skipped"] = report.n_skipped;
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json r;
    r["mask_rate"] = row.mask_rate;
    r["accuracy"] = row.accuracy;
    r["top_k_accuracy"] = row.top_k_accuracy;
    r["n_masked"] = row.n_masked;
    if (!row.per_class.empty()) {
      ordered_json pc = ordered_json::object();
      for (const auto& [label, c] : row.per_class) {
        pc[label] = {{"accuracy", c.accuracy}, {"top_k_accuracy", c.top_k_accuracy}, {"support", c.support}};
      }
      r["per_class"] = std::move(pc);
    }
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string mlm_report_to_csv(const MlmEvalReport& report) {
  std::string out = "mask_rate,class,accuracy,top_k_accuracy,support\n";
  for (const auto& row : report.rows) {
    out += format_number(row.mask_rate) + ",all," + format_number(row.accuracy) + "," +
           format_number(row.top_k_accuracy) + "," + std::to_string(row.n_masked) + "\n";
    for (const auto& [label, c] : row.per_class) {
      out += format_number(row.mask_rate) + "," + csv_field(label) + "," + format_number(c.accuracy) + "," +
             format_number(c.top_k_accuracy) + "," + std::to_string(c.support) + "\n";
    }
  }
  return out;
}

// --- inference dumps ------------------------------------------------------------------

std::vector<InferenceRow> dump_inferences(const MlmScorer& scorer, int max_seq_len,
                                          std::span<const std::string> sentences, const Vocabulary& vocab,
                                          int top_n) {
  if (top_n < 1) throw std::invalid_argument("top_n must be positive");
  std::vector<InferenceRow> out;
  for (const auto& sentence : sentences) {
    InferenceRow row;
    row.sentence = sentence;
    const std::size_t at = sentence.find(kMaskMarker);
    if (at == std::string::npos) {
      row.error = "no mask marker";
    } else if (sentence.find(kMaskMarker, at + kMaskMarker.size()) != std::string::npos) {
      row.error = "more than one mask marker";
    }
    if (row.error) {
      out.push_back(std::move(row));
      continue;
    }
    const TokenSequence left = tokenize(normalize(sentence.substr(0, at)), vocab);
    const TokenSequence right = tokenize(normalize(sentence.substr(at + kMaskMarker.size())), vocab);
    const std::size_t length = left.ids.size() + right.ids.size() + 3;
    if (length > static_cast<std::size_t>(max_seq_len)) {
      row.error = "sentence longer than " + std::to_string(max_seq_len) + " tokens";
      out.push_back(std::move(row));
      continue;
    }
    IdMatrix ids(1, static_cast<Eigen::Index>(length));
    IdMatrix mask = IdMatrix::Ones(1, static_cast<Eigen::Index>(length));
    Eigen::Index t = 0;
    ids(0, t++) = kClsId;
    for (std::int32_t id : left.ids) ids(0, t++) = id;
    const auto mask_at = static_cast<std::int32_t>(t);
    ids(0, t++) = kMaskId;
    for (std::int32_t id : right.ids) ids(0, t++) = id;
    ids(0, t) = kSepId;

    const Matrix<float> logits = scorer(ids, mask, {mask_at});
    // Softmax in double over the full vocabulary.
    const double top = logits.row(0).maxCoeff();
    std::vector<double> p(static_cast<std::size_t>(logits.cols()));
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) z += p[static_cast<std::size_t>(j)] = std::exp(logits(0, j) - top);
    for (double& v : p) v /= z;
    std::vector<std::int32_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(top_n), order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::int32_t a, std::int32_t b) {
                        return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)] ||
                               (p[static_cast<std::size_t>(a)] == p[static_cast<std::size_t>(b)] && a < b);
                      });
    for (std::size_t i = 0; i < n; ++i) {
      row.predictions.emplace_back(vocab.token(order[i]), p[static_cast<std::size_t>(order[i])]);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<InferenceRow> dump_inferences(const ModelWeights<float>& weights, std::span<const std::string> sentences,
                                          const Vocabulary& vocab, int top_n) {
  if (vocab.size() != weights.config.vocab_size) throw InputError("vocabulary does not match model");
  return dump_inferences(model_scorer(weights), weights.config.max_seq_len, sentences, vocab, top_n);
}

namespace {

std::string MarkdownCell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

}  // namespace

std::string inferences_to_markdown(const std::vector<InferenceRow>& rows) {
  std::string out = "| Sentence | Mask Prediction | Confidence |\n|---|---|---|\n";
  for (const auto& row : rows) {
    if (row.error) {
      out += "| " + MarkdownCell(row.sentence) + " | error: " + MarkdownCell(*row.error) + " | |\n";
      continue;
    }
    for (std::size_t i = 0; i < row.predictions.size(); ++i) {
      out += "| " + (i == 0 ? MarkdownCell(row.sentence) : std::string()) + " | " +
             MarkdownCell(row.predictions[i].first) + " | " + format_number(row.predictions[i].second, 4) + " |\n";
    }
  }
  return out;
}

// --- classification ---------------------------------------------------------------

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0;
};

struct PointMetrics {
  std::vector<double> precision, recall, f1;
  double micro_p = 0.0, micro_r = 0.0, micro_f1 = 0.0, accuracy = 0.0;
};

double F1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// pred/truth are [n x L] 0/1 cell tables; `weight[i]` is how often sample i
// occurs in the (re)sample. With `undefined` set to NaN, a metric whose
// denominator is empty is reported as NaN instead of 0.
PointMetrics Compute(const std::vector<std::vector<char>>& pred, const std::vector<std::vector<char>>& truth,
                     const std::vector<int>& weight, std::size_t n_labels, double undefined = 0.0) {
  auto ratio = [undefined](std::int64_t num, std::int64_t den) { return den > 0 ? Ratio(num, den) : undefined; };
  auto f1 = [undefined](const Counts& c, double p, double r) {
    return c.tp + c.fp + c.fn > 0 ? F1(p, r) : undefined;
  };
  std::vector<Counts> per(n_labels);
  Counts micro;
  std::int64_t exact = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int w = weight[i];
    if (w == 0) continue;
    total += w;
    exact += w * (pred[i] == truth[i]);
    for (std::size_t l = 0; l < n_labels; ++l) {
      const bool p = pred[i][l] != 0, t = truth[i][l] != 0;
      per[l].tp += w * (p && t);
      per[l].fp += w * (p && !t);
      per[l].fn += w * (!p && t);
    }
  }
  PointMetrics m;
  for (const auto& c : per) {
    const double p = ratio(c.tp, c.tp + c.fp), r = ratio(c.tp, c.tp + c.fn);
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f1(c, Ratio(c.tp, c.tp + c.fp), Ratio(c.tp, c.tp + c.fn)));
    micro.tp += c.tp;
    micro.fp += c.fp;
    micro.fn += c.fn;
  }
  m.micro_p = ratio(micro.tp, micro.tp + micro.fp);
  m.micro_r = ratio(micro.tp, micro.tp + micro.fn);
  m.micro_f1 = f1(micro, Ratio(micro.tp, micro.tp + micro.fp), Ratio(micro.tp, micro.tp + micro.fn));
  m.accuracy = Ratio(exact, total);
  return m;
}

std::vector<char> Cells(const LabelSet& set, const std::vector<std::string>& labels, std::size_t sample) {
  std::vector<char> cells(labels.size(), 0);
  for (const auto& label : set) {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
      throw InputError("unknown label '" + label + "' in sample " + std::to_string(sample));
    }
    cells[static_cast<std::size_t>(it - labels.begin())] = 1;
  }
  return cells;
}

// Resamples in which the metric is undefined (NaN) are left out; with none
// left the interval collapses to the point.
MetricCI Interval(double point, std::vector<double> samples, double ci) {
  std::erase_if(samples, [](double v) { return std::isnan(v); });
  if (samples.empty()) return {point, point, point};
  const double alpha = (1.0 - ci) / 2.0;
  MetricCI out{point, percentile(samples, alpha), percentile(samples, 1.0 - alpha)};
  out.low = std::min(out.low, point);
  out.high = std::max(out.high, point);
  return out;
}

}  // namespace

ClsEvalReport eval_classification(std::span<const LabelSet> predicted, std::span<const LabelSet> truth,
                                  const std::vector<std::string>& labels, const ClsEvalOptions& options) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("length mismatch");
  if (truth.empty()) throw std::invalid_argument("no samples");
  if (labels.empty()) throw std::invalid_argument("labels must be non-empty");
  if (options.n_bootstrap < 1) throw std::invalid_argument("n_bootstrap must be positive");
  if (!(options.ci > 0.0 && options.ci < 1.0)) throw std::invalid_argument("ci must be in (0, 1)");

  const std::size_t n = truth.size(), n_labels = labels.size();
  std::vector<std::vector<char>> pred(n), gold(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = Cells(predicted[i], labels, i);
    gold[i] = Cells(truth[i], labels, i);
  }
  const PointMetrics point = Compute(pred, gold, std::vector<int>(n, 1), n_labels);

  std::vector<std::vector<double>> bp(n_labels), br(n_labels), bf(n_labels);
  std::vector<double> bmp, bmr, bmf, bacc;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<int> weight(n);
  for (int b = 0; b < options.n_bootstrap; ++b) {
    std::fill(weight.begin(), weight.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++weight[pick(rng)];
    const PointMetrics m = Compute(pred, gold, weight, n_labels, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t l = 0; l < n_labels; ++l) {
      bp[l].push_back(m.precision[l]);
      br[l].push_back(m.recall[l]);
      bf[l].push_back(m.f1[l]);
    }
    bmp.push_back(m.micro_p);
    bmr.push_back(m.micro_r);
    bmf.push_back(m.micro_f1);
    bacc.push_back(m.accuracy);
  }

  ClsEvalReport report;
  report.n_samples = static_cast<std::int64_t>(n);
  report.n_bootstrap = options.n_bootstrap;
  report.ci = options.ci;
  report.seed = options.seed;
  for (std::size_t l = 0; l < n_labels; ++l) {
    LabelMetrics lm;
    lm.label = labels[l];
    lm.precision = Interval(point.precision[l], bp[l], options.ci);
    lm.recall = Interval(point.recall[l], br[l], options.ci);
    lm.f1 = Interval(point.f1[l], bf[l], options.ci);
    for (std::size_t i = 0; i < n; ++i) lm.support += gold[i][l];
    report.per_label.push_back(std::move(lm));
  }
  report.micro_precision = Interval(point.micro_p, bmp, options.ci);
  report.micro_recall = Interval(point.micro_r, bmr, options.ci);
  report.micro_f1 = Interval(point.micro_f1, bmf, options.ci);
  report.accuracy = Interval(point.accuracy, bacc, options.ci);
  return report;
}

namespace {

ordered_json MetricJson(const MetricCI& m) { return {{"value", m.value}, {"low", m.low}, {"high", m.high}}; }

std::string MetricCsv(const MetricCI& m) {
  return format_number(m.value) + "," + format_number(m.low) + "," + format_number(m.high);
}

}  // namespace

std::string cls_report_to_json(const ClsEvalReport& report) {
  ordered_json j;
  j["n_samples"] = report.n_samples;
  j["n_bootstrap"] = report.n_bootstrap;
  j["ci"] = report.ci;
  j["seed"] = report.seed;
  j["accuracy_definition"] = "exact match of the predicted and true label sets";
  ordered_json per = ordered_json::array();
  for (const auto& lm : report.per_label) {
    per.push_back({{"label", lm.label},
                   {"precision", MetricJson(lm.precision)},
                   {"recall", MetricJson(lm.recall)},
                   {"f1", MetricJson(lm.f1)},
                   {"support", lm.support}});
  }
  j["per_label"] = std::move(per);
  j["accuracy"] = MetricJson(report.accuracy);
  j["micro_average"] = {{"precision", MetricJson(report.micro_precision)},
                        {"recall", MetricJson(report.micro_recall)},
                        {"f1", MetricJson(report.micro_f1)}};
  return j.dump(2) + "\n";
}

std::string cls_report_to_csv(const ClsEvalReport& report) {
  std::string out =
      "label,precision,precision_low,precision_high,recall,recall_low,recall_high,f1,f1_low,f1_high,support\n";
  for (const auto& lm : report.per_label) {
    out += csv_field(lm.label) + "," + MetricCsv(lm.precision) + "," + MetricCsv(lm.recall) + "," + MetricCsv(lm.f1) +
           "," + std::to_string(lm.support) + "\n";
  }
  out += "micro average," + MetricCsv(report.micro_precision) + "," + MetricCsv(report.micro_recall) + "," +
         MetricCsv(report.micro_f1) + ",\n";
  out += "accuracy," + MetricCsv(report.accuracy) + ",,,,,,," + std::to_string(report.n_samples) + "\n";
  return out;
}

}  // namespace pathlm
