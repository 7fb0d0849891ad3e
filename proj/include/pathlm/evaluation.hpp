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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pathlm/corpus.hpp"
#include "pathlm/encoder.hpp"
#include "pathlm/training.hpp"
#include "pathlm/wordpiece.hpp"

namespace pathlm {

// --- masked prediction ----------------------------------------------------------

struct MlmClassRow {
  double accuracy = 0.0;
  double top_k_accuracy = 0.0;
  std::int64_t support = 0;  // masked positions drawn from elements carrying the label
};

struct MlmRateRow {
  double mask_rate = 0.0;
  double accuracy = 0.0;
  double top_k_accuracy = 0.0;
  std::int64_t n_masked = 0;
  std::map<std::string, MlmClassRow> per_class;  // empty when no element has labels
};

struct MlmEvalReport {
  int k = 5;
  std::uint64_t seed = 0;
  std::int64_t n_texts = 0;
  std::int64_t n_skipped = 0;  // texts with no maskable token
  std::vector<MlmRateRow> rows;
};

struct MlmEvalOptions {
  std::vector<double> mask_rates = {0.15};
  int k = 5;
  std::uint64_t seed = 42;
  int batch_size = 32;
};

// Text i at rate index r is corrupted with derive_seed(derive_seed(seed, r), i),
// so the masked positions do not depend on k or on batching.
MlmEvalReport eval_mlm(const MlmScorer& scorer, int max_seq_len, std::span<const DiagnosisElement> texts,
                       const Vocabulary& vocab, const MlmEvalOptions& options);
MlmEvalReport eval_mlm(const ModelWeights<float>& weights, std::span<const DiagnosisElement> texts,
                       const Vocabulary& vocab, const MlmEvalOptions& options);

std::string mlm_report_to_json(const MlmEvalReport& report);
// mask_rate,class,accuracy,top_k_accuracy,support; class "all" holds the pooled row.
std::string mlm_report_to_csv(const MlmEvalReport& report);

inline constexpr std::string_view kMaskMarker = "[MASK]";

struct InferenceRow {
  std::string sentence;
  std::vector<std::pair<std::string, double>> predictions;  // descending probability
  std::optional<std::string> error;
};

// Each sentence must contain kMaskMarker exactly once; the text around it is
// normalized and tokenized before the marker is replaced by the mask id.
std::vector<InferenceRow> dump_inferences(const MlmScorer& scorer, int max_seq_len,
                                          std::span<const std::string> sentences, const Vocabulary& vocab,
                                          int top_n = 3);
std::vector<InferenceRow> dump_inferences(const ModelWeights<float>& weights, std::span<const std::string> sentences,
                                          const Vocabulary& vocab, int top_n = 3);

std::string inferences_to_markdown(const std::vector<InferenceRow>& rows);

// --- classification ------------------------------------------------------------------

struct MetricCI {
  double value = 0.0;
  double low = 0.0;
  double high = 0.0;
};

struct LabelMetrics {
  std::string label;
  MetricCI precision;
  MetricCI recall;
  MetricCI f1;
  std::int64_t support = 0;
};

struct ClsEvalReport {
  std::vector<LabelMetrics> per_label;
  MetricCI accuracy;  // exact match of the whole label set
  MetricCI micro_precision;
  MetricCI micro_recall;
  MetricCI micro_f1;
  std::int64_t n_samples = 0;
  int n_bootstrap = 0;
  double ci = 0.0;
  std::uint64_t seed = 0;
};

struct ClsEvalOptions {
  int n_bootstrap = 1000;
  double ci = 0.95;
  std::uint64_t seed = 42;
};

using LabelSet = std::vector<std::string>;

// Precision/recall are 0 on an empty denominator. CIs are percentile
// bootstrap intervals over samples, widened if needed to contain the point.
ClsEvalReport eval_classification(std::span<const LabelSet> predicted, std::span<const LabelSet> truth,
                                  const std::vector<std::string>& labels, const ClsEvalOptions& options);

// Linear-interpolated percentile (q in [0,1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

std::string cls_report_to_json(const ClsEvalReport& report);
std::string cls_report_to_csv(const ClsEvalReport& report);

}  // namespace pathlm
