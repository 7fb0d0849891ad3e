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

#include "pathlm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pathlm/checkpoint.hpp"
#include "pathlm/io.hpp"

namespace pathlm {

std::vector<std::int32_t> MaskedBatch::flat_rows() const {
  std::vector<std::int32_t> rows;
  const auto seq = static_cast<std::int32_t>(input_ids.cols());
  for (std::size_t b = 0; b < mask_positions.size(); ++b) {
    for (std::int32_t p : mask_positions[b]) rows.push_back(static_cast<std::int32_t>(b) * seq + p);
  }
  return rows;
}

std::vector<std::int32_t> MaskedBatch::targets() const {
  std::vector<std::int32_t> out;
  for (std::size_t b = 0; b < mask_positions.size(); ++b) {
    for (std::int32_t p : mask_positions[b]) out.push_back(original_ids(static_cast<Eigen::Index>(b), p));
  }
  return out;
}

MaskedBatch corrupt(const IdMatrix& ids, const IdMatrix& attention_mask, double mask_rate, std::uint64_t seed,
                    std::int32_t vocab_size, std::span<const std::uint64_t> row_seeds) {
  if (!(mask_rate > 0.0 && mask_rate <= 1.0)) throw std::invalid_argument("mask_rate must be in (0, 1]");
  if (vocab_size <= kNumSpecialTokens) throw std::invalid_argument("vocabulary has no regular tokens");
  if (!row_seeds.empty() && row_seeds.size() != static_cast<std::size_t>(ids.rows())) {
    throw std::invalid_argument("row_seeds size must match batch");
  }
  MaskedBatch out;
  out.input_ids = ids;
  out.attention_mask = attention_mask;
  out.original_ids = ids;
  out.corruption_seed = seed;
  out.mask_positions.resize(static_cast<std::size_t>(ids.rows()));
  for (Eigen::Index b = 0; b < ids.rows(); ++b) {
    std::mt19937_64 rng(row_seeds.empty() ? derive_seed(seed, static_cast<std::uint64_t>(b))
                                          : row_seeds[static_cast<std::size_t>(b)]);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<std::int32_t> eligible;
    for (Eigen::Index t = 0; t < ids.cols(); ++t) {
      if (attention_mask(b, t) != 0 && ids(b, t) >= kNumSpecialTokens) eligible.push_back(static_cast<std::int32_t>(t));
    }
    if (eligible.empty()) throw std::invalid_argument("empty sequence");
    auto& selected = out.mask_positions[static_cast<std::size_t>(b)];
    for (std::int32_t t : eligible) {
      if (uniform(rng) < mask_rate) selected.push_back(t);
    }
    if (selected.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
      selected.push_back(eligible[pick(rng)]);
    }
    std::uniform_int_distribution<std::int32_t> random_token(kNumSpecialTokens, vocab_size - 1);
    for (std::int32_t t : selected) {
      const double u = uniform(rng);
      if (u < 0.8) {
        out.input_ids(b, t) = kMaskId;
      } else if (u < 0.9) {
        out.input_ids(b, t) = random_token(rng);
      }
    }
  }
  return out;
}

// --- encoded corpora ----------------------------------------------------------

EncodedCorpus encode_corpus(std::span<const std::string> texts, const Vocabulary& vocab, int max_len) {
  EncodedCorpus out;
  const auto n = static_cast<Eigen::Index>(texts.size());
  out.ids.resize(n, max_len);
  out.attention_mask.resize(n, max_len);
  out.lengths.resize(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const EncodedText enc = encode_for_model(texts[i], vocab, max_len);
    for (int t = 0; t < max_len; ++t) {
      out.ids(static_cast<Eigen::Index>(i), t) = enc.ids[static_cast<std::size_t>(t)];
      out.attention_mask(static_cast<Eigen::Index>(i), t) = enc.attention_mask[static_cast<std::size_t>(t)];
    }
    out.lengths[i] = std::accumulate(enc.attention_mask.begin(), enc.attention_mask.end(), 0);
  }
  return out;
}

std::pair<IdMatrix, IdMatrix> EncodedCorpus::gather(std::span<const std::size_t> indices) const {
  int seq = 1;
  for (std::size_t i : indices) seq = std::max(seq, lengths[i]);
  IdMatrix batch_ids(static_cast<Eigen::Index>(indices.size()), seq);
  IdMatrix batch_mask(static_cast<Eigen::Index>(indices.size()), seq);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    batch_ids.row(static_cast<Eigen::Index>(r)) = ids.row(static_cast<Eigen::Index>(indices[r])).head(seq);
    batch_mask.row(static_cast<Eigen::Index>(r)) = attention_mask.row(static_cast<Eigen::Index>(indices[r])).head(seq);
  }
  return {std::move(batch_ids), std::move(batch_mask)};
}

MlmScorer model_scorer(const ModelWeights<float>& weights) {
  return [&weights](const IdMatrix& ids, const IdMatrix& mask, const std::vector<std::int32_t>& rows) {
    ForwardOptions options;
    options.mode = HeadMode::kMlm;
    options.mlm_rows = rows;
    return forward(weights, ids, mask, options).logits;
  };
}

// --- pretraining --------------------------------------------------------------

void PretrainConfig::validate() const {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw std::invalid_argument("mask_rate must be in (0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be positive");
  if (eval_max_texts < 1) throw std::invalid_argument("eval_max_texts must be positive");
}

namespace {

std::vector<std::string> Texts(std::span<const DiagnosisElement> elements) {
  std::vector<std::string> out;
  out.reserve(elements.size());
  for (const auto& e : elements) out.push_back(e.text);
  return out;
}

// Drops texts with nothing to mask (no regular tokens).
EncodedCorpus EncodeMaskable(std::span<const DiagnosisElement> elements, const Vocabulary& vocab, int max_len,
                             std::size_t limit) {
  std::vector<std::string> texts;
  for (const auto& e : elements) {
    if (texts.size() >= limit) break;
    const EncodedText enc = encode_for_model(e.text, vocab, max_len);
    if (std::any_of(enc.ids.begin(), enc.ids.end(), [](std::int32_t id) { return id >= kNumSpecialTokens; })) {
      texts.push_back(e.text);
    }
  }
  return encode_corpus(texts, vocab, max_len);
}

class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) { Reshuffle(); }

  std::vector<std::size_t> next(std::size_t batch_size) {
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    while (out.size() < batch_size) {
      if (pos_ == order_.size()) {
        ++epoch_;
        Reshuffle();
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void Reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed_, 0x5eed0000ULL + epoch_));
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void CheckVocabulary(const Vocabulary& vocab, const EncoderConfig& config) {
  if (!vocab.is_strict()) throw InputError("model training needs a vocabulary with special tokens at ids 0-4");
  if (vocab.size() != config.vocab_size) {
    throw InputError("vocabulary size " + std::to_string(vocab.size()) + " does not match model vocab_size " +
                     std::to_string(config.vocab_size));
  }
}

[[noreturn]] void Diverged(const ModelWeights<float>& last_good, const Vocabulary& vocab, std::int64_t step,
                           const std::optional<std::filesystem::path>& path) {
  if (path) save_checkpoint(*path, last_good, {last_good.config, vocab.content_hash(), step, {}});
  throw TrainingDiverged(path);
}

}  // namespace

double masked_accuracy(const ModelWeights<float>& weights, const EncodedCorpus& texts, double mask_rate,
                       std::uint64_t seed) {
  constexpr std::size_t kBatch = 32;
  MaskedHits hits;
  const MlmScorer scorer = model_scorer(weights);
  for (std::size_t start = 0; start < texts.size(); start += kBatch) {
    std::vector<std::size_t> idx;
    std::vector<std::uint64_t> row_seeds;
    for (std::size_t i = start; i < std::min(texts.size(), start + kBatch); ++i) {
      idx.push_back(i);
      row_seeds.push_back(derive_seed(seed, i));
    }
    auto [ids, mask] = texts.gather(idx);
    const MaskedBatch mb = corrupt(ids, mask, mask_rate, seed, weights.config.vocab_size, row_seeds);
    const auto rows = mb.flat_rows();
    const auto targets = mb.targets();
    const Matrix<float> logits = scorer(mb.input_ids, mb.attention_mask, rows);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      ++hits.n_masked;
      if (token_rank(logits.row(static_cast<Eigen::Index>(r)), targets[r]) == 0) ++hits.top1;
    }
  }
  return hits.n_masked == 0 ? 0.0 : static_cast<double>(hits.top1) / static_cast<double>(hits.n_masked);
}

TrainResult pretrain(const CorpusSplit& split, const Vocabulary& vocab, const EncoderConfig& model_config,
                     const PretrainConfig& config, const ModelWeights<float>* initial) {
  config.validate();
  model_config.validate();
  CheckVocabulary(vocab, model_config);

  const EncodedCorpus train = EncodeMaskable(split.train, vocab, model_config.max_seq_len, split.train.size());
  if (train.size() == 0) throw InputError("training split has no maskable text");
  const EncodedCorpus validation = EncodeMaskable(split.validation, vocab, model_config.max_seq_len,
                                                  static_cast<std::size_t>(config.eval_max_texts));

  TrainResult result;
  if (initial != nullptr) {
    if (!(initial->config == model_config)) throw InputError("initial weights do not match model config");
    result.weights = *initial;
  } else {
    result.weights = init_weights<float>(model_config, config.seed);
  }
  AdamState<float> adam = AdamState<float>::zeros_like(result.weights);
  const AdamOptions adam_options{config.lr};
  BatchCursor cursor(train.size(), config.seed);
  const std::uint64_t eval_seed = derive_seed(config.seed, 0xe7a1ULL);

  for (std::int64_t step = 1; step <= config.total_steps; ++step) {
    const auto idx = cursor.next(static_cast<std::size_t>(config.batch_size));
    auto [ids, mask] = train.gather(idx);
    const std::uint64_t step_seed = derive_seed(config.seed, static_cast<std::uint64_t>(step));
    const MaskedBatch mb = corrupt(ids, mask, config.mask_rate, derive_seed(step_seed, 1), model_config.vocab_size);

    ForwardOptions options;
    options.mode = HeadMode::kMlm;
    options.dropout_active = true;
    options.seed = derive_seed(step_seed, 2);
    options.mlm_rows = mb.flat_rows();
    const auto fwd = forward(result.weights, mb.input_ids, mb.attention_mask, options);
    const auto targets = mb.targets();
    const LossResult<float> loss = mlm_loss(fwd.logits, targets);
    if (!std::isfinite(loss.loss)) Diverged(result.weights, vocab, adam.step, config.last_good_path);
    const ModelWeights<float> grads = backward(result.weights, fwd.trace, loss.logit_grad);
    try {
      adam_step(result.weights, grads, adam, adam_options);
    } catch (const GradientOverflow&) {
      Diverged(result.weights, vocab, adam.step, config.last_good_path);
    }

    TrainLogRow row;
    row.step = step;
    row.train_loss = loss.loss;
    if ((step % config.eval_every == 0 || step == config.total_steps) && validation.size() > 0) {
      row.val_metric = masked_accuracy(result.weights, validation, config.mask_rate, eval_seed);
    }
    result.log.push_back(row);
  }
  return result;
}

// --- fine-tuning ----------------------------------------------------------------

std::vector<std::string> default_severity_labels() {
  return {"invasive breast cancer", "in situ breast cancer", "high risk lesion",
          "non-breast cancer",      "benign",                "negative"};
}

void FinetuneConfig::validate() const {
  if (labels.empty()) throw std::invalid_argument("labels must be non-empty");
  std::vector<std::string> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("labels must be unique");
  }
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (patience < 1) throw std::invalid_argument("patience must be positive");
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw std::invalid_argument("decision_threshold must be in (0, 1)");
  }
}

Matrix<float> label_targets(std::span<const DiagnosisElement> elements, const std::vector<std::string>& labels) {
  Matrix<float> targets = Matrix<float>::Zero(static_cast<Eigen::Index>(elements.size()),
                                              static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (!elements[i].labels) continue;
    for (const auto& label : *elements[i].labels) {
      const auto it = std::find(labels.begin(), labels.end(), label);
      if (it == labels.end()) {
        throw InputError("unknown label '" + label + "' in report " + elements[i].source_report_id);
      }
      targets(static_cast<Eigen::Index>(i), it - labels.begin()) = 1.0f;
    }
  }
  return targets;
}

double micro_f1(const Matrix<float>& predicted, const Matrix<float>& truth) {
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const bool p = predicted.data()[i] != 0.0f;
    const bool t = truth.data()[i] != 0.0f;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

namespace {

Matrix<float> Probabilities(const ModelWeights<float>& weights, const EncodedCorpus& corpus, int batch_size) {
  Matrix<float> probs(static_cast<Eigen::Index>(corpus.size()), weights.config.n_labels);
  for (std::size_t start = 0; start < corpus.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(corpus.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    auto [ids, mask] = corpus.gather(idx);
    ForwardOptions options;
    options.mode = HeadMode::kCls;
    const Matrix<float> logits = forward(weights, ids, mask, options).logits;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const double z = logits(static_cast<Eigen::Index>(r), j);
        probs(static_cast<Eigen::Index>(idx[r]), j) = static_cast<float>(1.0 / (1.0 + std::exp(-z)));
      }
    }
  }
  return probs;
}

}  // namespace

FinetuneResult finetune(const ModelWeights<float>& pretrained, std::vector<DiagnosisElement> train,
                        std::vector<DiagnosisElement> development, const Vocabulary& vocab,
                        const FinetuneConfig& config) {
  config.validate();
  CheckVocabulary(vocab, pretrained.config);
  // Label errors surface before any training work.
  Matrix<float> train_targets = label_targets(train, config.labels);
  if (development.empty()) {
    CorpusSplit carved = make_split(std::move(train), {0.9, 0.1, 0.0}, config.seed);
    train = std::move(carved.train);
    train.insert(train.end(), std::make_move_iterator(carved.test.begin()), std::make_move_iterator(carved.test.end()));
    development = std::move(carved.validation);
    train_targets = label_targets(train, config.labels);
  }
  if (train.empty() || development.empty()) throw InputError("fine-tuning needs non-empty train and development sets");
  const Matrix<float> dev_targets = label_targets(development, config.labels);

  const int max_len = pretrained.config.max_seq_len;
  const EncodedCorpus train_enc = encode_corpus(Texts(train), vocab, max_len);
  const EncodedCorpus dev_enc = encode_corpus(Texts(development), vocab, max_len);

  ModelWeights<float> weights = pretrained;
  weights.config.dropout_rate = config.dropout;
  init_cls_head(weights, static_cast<int>(config.labels.size()), derive_seed(config.seed, 0xc15ULL));
  AdamState<float> adam = AdamState<float>::zeros_like(weights);
  const AdamOptions adam_options{config.lr};

  FinetuneResult result;
  result.best_dev_f1 = -1.0;
  int since_improvement = 0;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      auto [ids, mask] = train_enc.gather(idx);
      Matrix<float> targets(static_cast<Eigen::Index>(idx.size()), train_targets.cols());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        targets.row(static_cast<Eigen::Index>(r)) = train_targets.row(static_cast<Eigen::Index>(idx[r]));
      }
      ForwardOptions options;
      options.mode = HeadMode::kCls;
      options.dropout_active = true;
      options.seed = derive_seed(config.seed, 0x100000ULL + static_cast<std::uint64_t>(++step));
      const auto fwd = forward(weights, ids, mask, options);
      const LossResult<float> loss = cls_loss(fwd.logits, targets);
      if (!std::isfinite(loss.loss)) throw TrainingDiverged(std::nullopt);
      try {
        adam_step(weights, backward(weights, fwd.trace, loss.logit_grad), adam, adam_options);
      } catch (const GradientOverflow&) {
        throw TrainingDiverged(std::nullopt);
      }
      loss_sum += loss.loss;
      ++n_batches;
    }

    const Matrix<float> probs = Probabilities(weights, dev_enc, config.batch_size);
    const Matrix<float> predicted =
        (probs.array() >= static_cast<float>(config.decision_threshold)).template cast<float>().matrix();
    const double dev_f1 = micro_f1(predicted, dev_targets);
    result.log.push_back({epoch, loss_sum / std::max(n_batches, 1), dev_f1});
    if (dev_f1 > result.best_dev_f1) {
      result.best_dev_f1 = dev_f1;
      result.best_epoch = epoch;
      result.weights = weights;
      since_improvement = 0;
    } else if (++since_improvement >= config.patience) {
      break;
    }
  }
  return result;
}

std::vector<LabelPrediction> predict_labels(const ModelWeights<float>& weights, std::span<const std::string> texts,
                                            const Vocabulary& vocab, double threshold, int batch_size) {
  if (!weights.has_cls_head()) throw std::invalid_argument("model has no classification head");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  const EncodedCorpus enc = encode_corpus(texts, vocab, weights.config.max_seq_len);
  std::vector<LabelPrediction> out(texts.size());
  for (std::size_t start = 0; start < enc.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(enc.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    auto [ids, mask] = enc.gather(idx);
    ForwardOptions options;
    options.mode = HeadMode::kCls;
    const Matrix<float> logits = forward(weights, ids, mask, options).logits;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      LabelPrediction& p = out[idx[r]];
      for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const double z = logits(static_cast<Eigen::Index>(r), j);
        const double prob = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        p.probabilities.push_back(prob);
        if (prob >= threshold) p.labels.push_back(static_cast<int>(j));
      }
    }
  }
  return out;
}

std::string training_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,train_loss,val_metric\n";
  for (const auto& row : log) {
    out += std::to_string(row.step) + "," + format_number(row.train_loss) + "," +
           (std::isnan(row.val_metric) ? std::string() : format_number(row.val_metric)) + "\n";
  }
  return out;
}

}  // namespace pathlm
