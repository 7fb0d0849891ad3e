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
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathlm/corpus.hpp"
#include "pathlm/encoder.hpp"
#include "pathlm/wordpiece.hpp"

namespace pathlm {

// --- masking ----------------------------------------------------------------

struct MaskedBatch {
  IdMatrix input_ids;
  IdMatrix attention_mask;
  IdMatrix original_ids;
  std::vector<std::vector<std::int32_t>> mask_positions;  // per sample, ascending
  std::uint64_t corruption_seed = 0;

  // Flattened (sample * seq + position) rows of every mask position, and the
  // original ids at those rows, in sample-major order.
  std::vector<std::int32_t> flat_rows() const;
  std::vector<std::int32_t> targets() const;
};

// Selects each non-special, attended position with probability mask_rate
// (at least one per sample), then replaces it with [MASK] (80%), a random
// non-special token (10%) or leaves it unchanged (10%). Sample b draws from
// its own stream: row_seeds[b] when given, else derive_seed(seed, b).
// Throws std::invalid_argument("empty sequence") for a sample with no
// eligible position.
MaskedBatch corrupt(const IdMatrix& ids, const IdMatrix& attention_mask, double mask_rate, std::uint64_t seed,
                    std::int32_t vocab_size, std::span<const std::uint64_t> row_seeds = {});

// Position of `target` when row `logits` is sorted by descending score, ties
// going to the lower id. Top-k correct iff rank < k.
template <typename Derived>
std::int64_t token_rank(const Eigen::MatrixBase<Derived>& logits, std::int32_t target) {
  const auto score = logits(0, target);
  std::int64_t rank = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (logits(0, j) > score || (logits(0, j) == score && j < target)) ++rank;
  }
  return rank;
}

// --- encoded corpora ----------------------------------------------------------

struct EncodedCorpus {
  IdMatrix ids;             // [n x max_len]
  IdMatrix attention_mask;  // [n x max_len]
  std::vector<int> lengths;

  std::size_t size() const { return lengths.size(); }
  // Rows `indices`, trimmed to the longest real sequence among them.
  std::pair<IdMatrix, IdMatrix> gather(std::span<const std::size_t> indices) const;
};

EncodedCorpus encode_corpus(std::span<const std::string> texts, const Vocabulary& vocab, int max_len);

// Logits for `rows` (sample * seq + position) of a batch; the model-backed
// scorer runs forward() without dropout. Tests substitute oracle scorers.
using MlmScorer =
    std::function<Matrix<float>(const IdMatrix& ids, const IdMatrix& mask, const std::vector<std::int32_t>& rows)>;

MlmScorer model_scorer(const ModelWeights<float>& weights);

struct MaskedHits {
  std::int64_t n_masked = 0;
  std::int64_t top1 = 0;
  std::int64_t top_k = 0;
};

// --- pretraining --------------------------------------------------------------

struct PretrainConfig {
  double mask_rate = 0.15;
  int batch_size = 32;
  double lr = 2e-5;
  int total_steps = 1000;
  int eval_every = 100;
  std::uint64_t seed = 42;
  int eval_max_texts = 1024;
  // Where the last finite weights are written if training diverges.
  std::optional<std::filesystem::path> last_good_path;

  void validate() const;
};

// One row per optimizer step; val_metric is NaN except at evaluation steps.
struct TrainLogRow {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double val_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ModelWeights<float> weights;
  std::vector<TrainLogRow> log;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(std::optional<std::filesystem::path> last_good)
      : std::runtime_error(last_good ? "training diverged; last good weights at " + last_good->string()
                                     : "training diverged"),
        last_good_(std::move(last_good)) {}
  const std::optional<std::filesystem::path>& last_good() const { return last_good_; }

 private:
  std::optional<std::filesystem::path> last_good_;
};

// `initial` continues from given weights instead of init_weights(model_config).
TrainResult pretrain(const CorpusSplit& split, const Vocabulary& vocab, const EncoderConfig& model_config,
                     const PretrainConfig& config, const ModelWeights<float>* initial = nullptr);

// Top-1 accuracy over masked positions of `texts` (dropout off).
double masked_accuracy(const ModelWeights<float>& weights, const EncodedCorpus& texts, double mask_rate,
                       std::uint64_t seed);

// --- fine-tuning ----------------------------------------------------------------

std::vector<std::string> default_severity_labels();

struct FinetuneConfig {
  std::vector<std::string> labels = default_severity_labels();
  int epochs = 6;
  int batch_size = 32;
  double lr = 2e-5;
  double dropout = 0.2;
  int patience = 10;
  double decision_threshold = 0.5;
  std::uint64_t seed = 42;

  void validate() const;
};

struct FinetuneResult {
  ModelWeights<float> weights;  // best development epoch
  std::vector<TrainLogRow> log;  // step = epoch (1-based), val_metric = development micro-F1
  int best_epoch = 0;
  double best_dev_f1 = 0.0;
};

// [n x labels] 0/1 targets. Throws InputError on a label outside `labels`.
Matrix<float> label_targets(std::span<const DiagnosisElement> elements, const std::vector<std::string>& labels);

// Carves a development set (10%) out of `train` when `development` is empty.
FinetuneResult finetune(const ModelWeights<float>& pretrained, std::vector<DiagnosisElement> train,
                        std::vector<DiagnosisElement> development, const Vocabulary& vocab,
                        const FinetuneConfig& config);

struct LabelPrediction {
  std::vector<int> labels;  // indices asserted at the threshold (p >= threshold)
  std::vector<double> probabilities;
};

std::vector<LabelPrediction> predict_labels(const ModelWeights<float>& weights, std::span<const std::string> texts,
                                            const Vocabulary& vocab, double threshold, int batch_size = 32);

// Micro-averaged F1 over all (sample, label) cells of 0/1 matrices.
double micro_f1(const Matrix<float>& predicted, const Matrix<float>& truth);

std::string training_log_to_csv(const std::vector<TrainLogRow>& log);

}  // namespace pathlm
