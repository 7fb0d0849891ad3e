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

// Transformer encoder with token + position embeddings, post-LN self-attention
// blocks, a masked-LM head tied to the token embedding, and a [CLS] multi-label
// head. Forward passes record a ForwardTrace from which backward() computes
// exact gradients for every tensor.
//
// Everything is templated on the scalar type. Training uses float; the
// gradient checks instantiate the same code with double.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathlm/tensor.hpp"

namespace pathlm {

struct EncoderConfig {
  int n_layers = 2;
  int hidden_dim = 64;
  int n_heads = 2;
  int ff_dim = 256;
  int max_seq_len = 64;
  int vocab_size = 0;
  double dropout_rate = 0.1;
  int n_labels = 0;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  int head_dim() const { return hidden_dim / n_heads; }
  bool operator==(const EncoderConfig&) const = default;
};

inline constexpr double kLayerNormEpsilon = 1e-12;
inline constexpr double kAttentionMaskValue = -1e9;
inline constexpr double kInitStddev = 0.02;

template <typename Scalar>
struct LayerWeights {
  Matrix<Scalar> query_weight, key_weight, value_weight, output_weight;  // [hidden x hidden]
  RowVector<Scalar> query_bias, key_bias, value_bias, output_bias;
  RowVector<Scalar> attention_ln_scale, attention_ln_shift;
  Matrix<Scalar> ffn_in_weight;  // [hidden x ff]
  RowVector<Scalar> ffn_in_bias;
  Matrix<Scalar> ffn_out_weight;  // [ff x hidden]
  RowVector<Scalar> ffn_out_bias;
  RowVector<Scalar> ffn_ln_scale, ffn_ln_shift;
};

// Also used as the gradient container: backward() returns one of these with
// identical names and shapes.
template <typename Scalar>
struct ModelWeights {
  EncoderConfig config;
  Matrix<Scalar> token_embedding;     // [vocab x hidden]; transposed, it is the MLM output projection
  Matrix<Scalar> position_embedding;  // [max_seq_len x hidden]
  RowVector<Scalar> embedding_ln_scale, embedding_ln_shift;
  std::vector<LayerWeights<Scalar>> layers;
  Matrix<Scalar> mlm_transform_weight;  // [hidden x hidden]
  RowVector<Scalar> mlm_transform_bias;
  RowVector<Scalar> mlm_ln_scale, mlm_ln_shift;
  RowVector<Scalar> mlm_output_bias;  // [vocab]
  Matrix<Scalar> cls_weight;          // [hidden x n_labels], empty without a head
  RowVector<Scalar> cls_bias;

  static ModelWeights zeros(const EncoderConfig& config);
  bool has_cls_head() const { return config.n_labels > 0; }

  template <typename Other>
  ModelWeights<Other> cast() const;
};

// Calls fn(name, tensor, matching tensors of `rest`...) for every tensor, in
// checkpoint order. Classification-head tensors are visited only when the
// first argument has a head.
template <typename Fn, typename First, typename... Rest>
void for_each_tensor(Fn&& fn, First& first, Rest&... rest) {
  fn(std::string("token_embedding"), first.token_embedding, rest.token_embedding...);
  fn(std::string("position_embedding"), first.position_embedding, rest.position_embedding...);
  fn(std::string("embedding_ln.scale"), first.embedding_ln_scale, rest.embedding_ln_scale...);
  fn(std::string("embedding_ln.shift"), first.embedding_ln_shift, rest.embedding_ln_shift...);
  for (std::size_t l = 0; l < first.layers.size(); ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    fn(p + "attention.query.weight", first.layers[l].query_weight, rest.layers[l].query_weight...);
    fn(p + "attention.query.bias", first.layers[l].query_bias, rest.layers[l].query_bias...);
    fn(p + "attention.key.weight", first.layers[l].key_weight, rest.layers[l].key_weight...);
    fn(p + "attention.key.bias", first.layers[l].key_bias, rest.layers[l].key_bias...);
    fn(p + "attention.value.weight", first.layers[l].value_weight, rest.layers[l].value_weight...);
    fn(p + "attention.value.bias", first.layers[l].value_bias, rest.layers[l].value_bias...);
    fn(p + "attention.output.weight", first.layers[l].output_weight, rest.layers[l].output_weight...);
    fn(p + "attention.output.bias", first.layers[l].output_bias, rest.layers[l].output_bias...);
    fn(p + "attention_ln.scale", first.layers[l].attention_ln_scale, rest.layers[l].attention_ln_scale...);
    fn(p + "attention_ln.shift", first.layers[l].attention_ln_shift, rest.layers[l].attention_ln_shift...);
    fn(p + "ffn.in.weight", first.layers[l].ffn_in_weight, rest.layers[l].ffn_in_weight...);
    fn(p + "ffn.in.bias", first.layers[l].ffn_in_bias, rest.layers[l].ffn_in_bias...);
    fn(p + "ffn.out.weight", first.layers[l].ffn_out_weight, rest.layers[l].ffn_out_weight...);
    fn(p + "ffn.out.bias", first.layers[l].ffn_out_bias, rest.layers[l].ffn_out_bias...);
    fn(p + "ffn_ln.scale", first.layers[l].ffn_ln_scale, rest.layers[l].ffn_ln_scale...);
    fn(p + "ffn_ln.shift", first.layers[l].ffn_ln_shift, rest.layers[l].ffn_ln_shift...);
  }
  fn(std::string("mlm_head.transform.weight"), first.mlm_transform_weight, rest.mlm_transform_weight...);
  fn(std::string("mlm_head.transform.bias"), first.mlm_transform_bias, rest.mlm_transform_bias...);
  fn(std::string("mlm_head.ln.scale"), first.mlm_ln_scale, rest.mlm_ln_scale...);
  fn(std::string("mlm_head.ln.shift"), first.mlm_ln_shift, rest.mlm_ln_shift...);
  fn(std::string("mlm_head.output_bias"), first.mlm_output_bias, rest.mlm_output_bias...);
  if (first.config.n_labels > 0) {
    fn(std::string("cls_head.weight"), first.cls_weight, rest.cls_weight...);
    fn(std::string("cls_head.bias"), first.cls_bias, rest.cls_bias...);
  }
}

template <typename Scalar>
template <typename Other>
ModelWeights<Other> ModelWeights<Scalar>::cast() const {
  ModelWeights<Other> out = ModelWeights<Other>::zeros(config);
  for_each_tensor([](const std::string&, auto& dst, const auto& src) { dst = src.template cast<Other>(); }, out,
                  *this);
  return out;
}

// Truncated normal (std 0.02, cut at two standard deviations) for weight
// matrices and embeddings; zero biases and shifts; unit layer-norm scales.
template <typename Scalar>
ModelWeights<Scalar> init_weights(const EncoderConfig& config, std::uint64_t seed);

// Replaces the classification head with a freshly initialized one of width
// n_labels (0 removes it).
template <typename Scalar>
void init_cls_head(ModelWeights<Scalar>& weights, int n_labels, std::uint64_t seed);

enum class HeadMode { kMlm, kCls };

struct ForwardOptions {
  HeadMode mode = HeadMode::kMlm;
  bool dropout_active = false;
  std::uint64_t seed = 0;
  // MLM rows to score, as sample * seq + position. Empty scores every row.
  std::vector<std::int32_t> mlm_rows;
};

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> normalized;
  ColVector<Scalar> inv_std;
};

template <typename Scalar>
struct LayerTrace {
  Matrix<Scalar> input;
  Matrix<Scalar> query, key, value;
  std::vector<Matrix<Scalar>> attention_probs;  // [sample * n_heads + head], each [seq x seq]
  Matrix<Scalar> context;
  Matrix<Scalar> attention_dropout;  // realized mask incl. 1/(1-p) scaling; empty when inactive
  LayerNormCache<Scalar> attention_ln;
  Matrix<Scalar> ffn_input, ffn_pre, ffn_act;
  Matrix<Scalar> ffn_dropout;
  LayerNormCache<Scalar> ffn_ln;
};

template <typename Scalar>
struct ForwardTrace {
  HeadMode mode = HeadMode::kMlm;
  int batch = 0;
  int seq = 0;
  IdMatrix ids;
  IdMatrix attention_mask;
  LayerNormCache<Scalar> embedding_ln;
  Matrix<Scalar> embedding_dropout;
  std::vector<LayerTrace<Scalar>> layers;
  Matrix<Scalar> final_hidden;  // [batch * seq x hidden]
  std::vector<std::int32_t> mlm_rows;
  Matrix<Scalar> mlm_gathered, mlm_pre, mlm_act, mlm_hidden;
  LayerNormCache<Scalar> mlm_ln;
  Matrix<Scalar> cls_input;  // [CLS] rows after dropout
  Matrix<Scalar> cls_dropout;
};

template <typename Scalar>
struct ForwardResult {
  // kMlm: [rows x vocab] where rows are options.mlm_rows (or all batch * seq
  // positions, sample-major). kCls: [batch x n_labels].
  Matrix<Scalar> logits;
  ForwardTrace<Scalar> trace;
};

// Throws std::invalid_argument("id out of range") for ids >= vocab_size, and
// on shape mismatches.
template <typename Scalar>
ForwardResult<Scalar> forward(const ModelWeights<Scalar>& weights, const IdMatrix& ids,
                              const IdMatrix& attention_mask, const ForwardOptions& options);

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  Matrix<Scalar> logit_grad;
};

// Mean cross-entropy over rows; targets[i] is the true id of logits row i.
template <typename Scalar>
LossResult<Scalar> mlm_loss(const Matrix<Scalar>& logits, std::span<const std::int32_t> targets);

// Mean sigmoid binary cross-entropy over all cells; targets must be 0 or 1.
template <typename Scalar>
LossResult<Scalar> cls_loss(const Matrix<Scalar>& logits, const Matrix<Scalar>& targets);

// Exact gradients of the loss whose logit gradient is `logit_grad` with
// respect to every tensor. Throws std::invalid_argument on a trace that does
// not match the weights or the gradient shape.
template <typename Scalar>
ModelWeights<Scalar> backward(const ModelWeights<Scalar>& weights, const ForwardTrace<Scalar>& trace,
                              const Matrix<Scalar>& logit_grad);

template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x);

template <typename Scalar>
Matrix<Scalar> gelu_grad(const Matrix<Scalar>& x);

// Row softmax with additive key masking, as used inside attention.
template <typename Scalar>
Matrix<Scalar> masked_softmax(const Matrix<Scalar>& scores, const RowVector<Scalar>& key_bias);

// --- Adam --------------------------------------------------------------------

class GradientOverflow : public std::runtime_error {
 public:
  GradientOverflow() : std::runtime_error("gradient overflow") {}
};

struct AdamOptions {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  ModelWeights<Scalar> m;
  ModelWeights<Scalar> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ModelWeights<Scalar>& weights) {
    return {ModelWeights<Scalar>::zeros(weights.config), ModelWeights<Scalar>::zeros(weights.config), 0};
  }
};

// Bias-corrected Adam update. Throws GradientOverflow (leaving weights and
// state untouched) if any gradient entry is non-finite.
template <typename Scalar>
void adam_step(ModelWeights<Scalar>& weights, const ModelWeights<Scalar>& grads, AdamState<Scalar>& state,
               const AdamOptions& options);

template <typename Scalar>
bool all_finite(const ModelWeights<Scalar>& weights) {
  bool ok = true;
  for_each_tensor([&](const std::string&, const auto& t) { ok = ok && pathlm::all_finite(t); }, weights);
  return ok;
}

}  // namespace pathlm
