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

#include "pathlm/encoder.hpp"

#include <cmath>
#include <random>

#include "pathlm/parallel.hpp"

namespace pathlm {

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid encoder config: " + what); };
  if (n_layers < 0) fail("n_layers must be >= 0");
  if (hidden_dim < 1) fail("hidden_dim must be >= 1");
  if (n_heads < 1 || hidden_dim % n_heads != 0) fail("hidden_dim must be divisible by n_heads");
  if (ff_dim < 1) fail("ff_dim must be >= 1");
  if (max_seq_len < 3) fail("max_seq_len must be >= 3");
  if (vocab_size < 6) fail("vocab_size must be >= 6");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (n_labels < 0) fail("n_labels must be >= 0");
}

template <typename Scalar>
ModelWeights<Scalar> ModelWeights<Scalar>::zeros(const EncoderConfig& config) {
  config.validate();
  const int h = config.hidden_dim;
  const int v = config.vocab_size;
  ModelWeights w;
  w.config = config;
  w.token_embedding = Matrix<Scalar>::Zero(v, h);
  w.position_embedding = Matrix<Scalar>::Zero(config.max_seq_len, h);
  w.embedding_ln_scale = RowVector<Scalar>::Zero(h);
  w.embedding_ln_shift = RowVector<Scalar>::Zero(h);
  w.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& l : w.layers) {
    l.query_weight = l.key_weight = l.value_weight = l.output_weight = Matrix<Scalar>::Zero(h, h);
    l.query_bias = l.key_bias = l.value_bias = l.output_bias = RowVector<Scalar>::Zero(h);
    l.attention_ln_scale = l.attention_ln_shift = RowVector<Scalar>::Zero(h);
    l.ffn_in_weight = Matrix<Scalar>::Zero(h, config.ff_dim);
    l.ffn_in_bias = RowVector<Scalar>::Zero(config.ff_dim);
    l.ffn_out_weight = Matrix<Scalar>::Zero(config.ff_dim, h);
    l.ffn_out_bias = RowVector<Scalar>::Zero(h);
    l.ffn_ln_scale = l.ffn_ln_shift = RowVector<Scalar>::Zero(h);
  }
  w.mlm_transform_weight = Matrix<Scalar>::Zero(h, h);
  w.mlm_transform_bias = w.mlm_ln_scale = w.mlm_ln_shift = RowVector<Scalar>::Zero(h);
  w.mlm_output_bias = RowVector<Scalar>::Zero(v);
  if (config.n_labels > 0) {
    w.cls_weight = Matrix<Scalar>::Zero(h, config.n_labels);
    w.cls_bias = RowVector<Scalar>::Zero(config.n_labels);
  }
  return w;
}

namespace {

bool EndsWith(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename Derived>
void FillTruncatedNormal(Eigen::MatrixBase<Derived>& t, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, kInitStddev);
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      double x = normal(rng);
      while (std::abs(x) > 2.0 * kInitStddev) x = normal(rng);
      t(i, j) = static_cast<typename Derived::Scalar>(x);
    }
  }
}

template <typename Scalar, typename Tensor>
void InitTensor(const std::string& name, Tensor& t, std::mt19937_64& rng) {
  if (EndsWith(name, ".scale")) {
    t.setOnes();
  } else if (EndsWith(name, "weight") || EndsWith(name, "embedding")) {
    FillTruncatedNormal(t, rng);
  } else {
    t.setZero();
  }
}

}  // namespace

template <typename Scalar>
ModelWeights<Scalar> init_weights(const EncoderConfig& config, std::uint64_t seed) {
  ModelWeights<Scalar> w = ModelWeights<Scalar>::zeros(config);
  std::mt19937_64 rng(seed);
  for_each_tensor([&](const std::string& name, auto& t) { InitTensor<Scalar>(name, t, rng); }, w);
  return w;
}

template <typename Scalar>
void init_cls_head(ModelWeights<Scalar>& weights, int n_labels, std::uint64_t seed) {
  if (n_labels < 0) throw std::invalid_argument("n_labels must be >= 0");
  weights.config.n_labels = n_labels;
  if (n_labels == 0) {
    weights.cls_weight.resize(0, 0);
    weights.cls_bias.resize(0);
    return;
  }
  std::mt19937_64 rng(seed);
  weights.cls_weight.resize(weights.config.hidden_dim, n_labels);
  FillTruncatedNormal(weights.cls_weight, rng);
  weights.cls_bias = RowVector<Scalar>::Zero(n_labels);
}

// --- elementwise pieces -------------------------------------------------------

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluK = 0.044715;

}  // namespace

template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  const Scalar c = static_cast<Scalar>(kGeluC);
  const Scalar k = static_cast<Scalar>(kGeluK);
  const auto a = x.array();
  return (Scalar(0.5) * a * (Scalar(1) + (c * (a + k * a.cube())).tanh())).matrix();
}

template <typename Scalar>
Matrix<Scalar> gelu_grad(const Matrix<Scalar>& x) {
  const Scalar c = static_cast<Scalar>(kGeluC);
  const Scalar k = static_cast<Scalar>(kGeluK);
  const auto a = x.array();
  const auto t = (c * (a + k * a.cube())).tanh().eval();
  return (Scalar(0.5) * (Scalar(1) + t) +
          Scalar(0.5) * a * (Scalar(1) - t.square()) * c * (Scalar(1) + Scalar(3) * k * a.square()))
      .matrix();
}

template <typename Scalar>
Matrix<Scalar> masked_softmax(const Matrix<Scalar>& scores, const RowVector<Scalar>& key_bias) {
  Matrix<Scalar> s = scores.rowwise() + key_bias;
  const ColVector<Scalar> row_max = s.rowwise().maxCoeff();
  s = (s.colwise() - row_max).array().exp().matrix();
  const ColVector<Scalar> denom = s.rowwise().sum();
  return s.array().colwise() / denom.array();
}

namespace {

template <typename Scalar>
Matrix<Scalar> LayerNormForward(const Matrix<Scalar>& x, const RowVector<Scalar>& scale,
                                const RowVector<Scalar>& shift, LayerNormCache<Scalar>& cache) {
  const ColVector<Scalar> mean = x.rowwise().mean();
  Matrix<Scalar> centered = x.colwise() - mean;
  const ColVector<Scalar> var = centered.array().square().rowwise().mean();
  cache.inv_std = (var.array() + static_cast<Scalar>(kLayerNormEpsilon)).rsqrt();
  cache.normalized = centered.array().colwise() * cache.inv_std.array();
  return (cache.normalized.array().rowwise() * scale.array()).rowwise() + shift.array();
}

template <typename Scalar>
Matrix<Scalar> LayerNormBackward(const Matrix<Scalar>& dy, const RowVector<Scalar>& scale,
                                 const LayerNormCache<Scalar>& cache, RowVector<Scalar>& dscale,
                                 RowVector<Scalar>& dshift) {
  dscale += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dshift += dy.colwise().sum();
  const Matrix<Scalar> g = dy.array().rowwise() * scale.array();
  const ColVector<Scalar> mean_g = g.rowwise().mean();
  const ColVector<Scalar> mean_gx = (g.array() * cache.normalized.array()).rowwise().mean();
  Matrix<Scalar> dx = (g.colwise() - mean_g).array() - cache.normalized.array().colwise() * mean_gx.array();
  return dx.array().colwise() * cache.inv_std.array();
}

template <typename Scalar>
Matrix<Scalar> Affine(const Matrix<Scalar>& x, const Matrix<Scalar>& w, const RowVector<Scalar>& b) {
  Matrix<Scalar> y(x.rows(), w.cols());
  y.noalias() = x * w;
  y.rowwise() += b;
  return y;
}

class DropoutSampler {
 public:
  DropoutSampler(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}

  // Applies inverted dropout in place and records the realized mask.
  template <typename Scalar>
  void apply(Matrix<Scalar>& x, Matrix<Scalar>& mask) {
    if (rate_ <= 0.0) {
      mask.resize(0, 0);
      return;
    }
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate_));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    mask.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = uniform(rng_) < rate_ ? Scalar(0) : keep_scale;
    }
    x.array() *= mask.array();
  }

 private:
  double rate_;
  std::mt19937_64 rng_;
};

}  // namespace

template <typename Scalar>
ForwardResult<Scalar> forward(const ModelWeights<Scalar>& weights, const IdMatrix& ids,
                              const IdMatrix& attention_mask, const ForwardOptions& options) {
  const EncoderConfig& cfg = weights.config;
  const int batch = static_cast<int>(ids.rows());
  const int seq = static_cast<int>(ids.cols());
  if (batch < 1 || seq < 1) throw std::invalid_argument("empty batch");
  if (attention_mask.rows() != ids.rows() || attention_mask.cols() != ids.cols()) {
    throw std::invalid_argument("attention mask shape does not match ids");
  }
  if (seq > cfg.max_seq_len) throw std::invalid_argument("sequence longer than max_seq_len");
  if ((ids.array() < 0).any() || (ids.array() >= cfg.vocab_size).any()) {
    throw std::invalid_argument("id out of range");
  }
  if (options.mode == HeadMode::kCls && !weights.has_cls_head()) {
    throw std::invalid_argument("model has no classification head");
  }
  if (static_cast<int>(weights.layers.size()) != cfg.n_layers) throw std::invalid_argument("layer count mismatch");

  const int h = cfg.hidden_dim;
  const int n_heads = cfg.n_heads;
  const int d = cfg.head_dim();
  const int rows = batch * seq;
  const Scalar score_scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(d)));

  ForwardResult<Scalar> result;
  ForwardTrace<Scalar>& tr = result.trace;
  tr.mode = options.mode;
  tr.batch = batch;
  tr.seq = seq;
  tr.ids = ids;
  tr.attention_mask = attention_mask;
  DropoutSampler dropout(options.dropout_active ? cfg.dropout_rate : 0.0, options.seed);

  Matrix<Scalar> x(rows, h);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < seq; ++t) {
      x.row(b * seq + t) = weights.token_embedding.row(ids(b, t)) + weights.position_embedding.row(t);
    }
  }
  x = LayerNormForward(x, weights.embedding_ln_scale, weights.embedding_ln_shift, tr.embedding_ln);
  dropout.apply(x, tr.embedding_dropout);

  std::vector<RowVector<Scalar>> key_bias(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    key_bias[b] = attention_mask.row(b).unaryExpr([](std::int32_t m) {
      return m != 0 ? Scalar(0) : static_cast<Scalar>(kAttentionMaskValue);
    });
  }

  tr.layers.resize(weights.layers.size());
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    const LayerWeights<Scalar>& lw = weights.layers[l];
    LayerTrace<Scalar>& lt = tr.layers[l];
    lt.input = x;
    lt.query = Affine(x, lw.query_weight, lw.query_bias);
    lt.key = Affine(x, lw.key_weight, lw.key_bias);
    lt.value = Affine(x, lw.value_weight, lw.value_bias);
    lt.context.resize(rows, h);
    lt.attention_probs.resize(static_cast<std::size_t>(batch * n_heads));
    parallel_for(static_cast<std::size_t>(batch), [&](std::size_t bi) {
      const int b = static_cast<int>(bi);
      for (int head = 0; head < n_heads; ++head) {
        const auto q = lt.query.block(b * seq, head * d, seq, d);
        const auto k = lt.key.block(b * seq, head * d, seq, d);
        const auto v = lt.value.block(b * seq, head * d, seq, d);
        Matrix<Scalar> scores(seq, seq);
        scores.noalias() = q * k.transpose();
        scores *= score_scale;
        Matrix<Scalar>& probs = lt.attention_probs[static_cast<std::size_t>(b * n_heads + head)];
        probs = masked_softmax(scores, key_bias[bi]);
        lt.context.block(b * seq, head * d, seq, d).noalias() = probs * v;
      }
    });
    Matrix<Scalar> attn = Affine(lt.context, lw.output_weight, lw.output_bias);
    dropout.apply(attn, lt.attention_dropout);
    attn += x;
    lt.ffn_input = LayerNormForward(attn, lw.attention_ln_scale, lw.attention_ln_shift, lt.attention_ln);
    lt.ffn_pre = Affine(lt.ffn_input, lw.ffn_in_weight, lw.ffn_in_bias);
    lt.ffn_act = gelu(lt.ffn_pre);
    Matrix<Scalar> ffn = Affine(lt.ffn_act, lw.ffn_out_weight, lw.ffn_out_bias);
    dropout.apply(ffn, lt.ffn_dropout);
    ffn += lt.ffn_input;
    x = LayerNormForward(ffn, lw.ffn_ln_scale, lw.ffn_ln_shift, lt.ffn_ln);
  }
  tr.final_hidden = x;

  if (options.mode == HeadMode::kMlm) {
    if (options.mlm_rows.empty()) {
      tr.mlm_rows.resize(static_cast<std::size_t>(rows));
      for (int r = 0; r < rows; ++r) tr.mlm_rows[static_cast<std::size_t>(r)] = r;
    } else {
      tr.mlm_rows = options.mlm_rows;
    }
    tr.mlm_gathered.resize(static_cast<Eigen::Index>(tr.mlm_rows.size()), h);
    for (std::size_t i = 0; i < tr.mlm_rows.size(); ++i) {
      const std::int32_t r = tr.mlm_rows[i];
      if (r < 0 || r >= rows) throw std::invalid_argument("mlm row out of range");
      tr.mlm_gathered.row(static_cast<Eigen::Index>(i)) = x.row(r);
    }
    tr.mlm_pre = Affine(tr.mlm_gathered, weights.mlm_transform_weight, weights.mlm_transform_bias);
    tr.mlm_act = gelu(tr.mlm_pre);
    tr.mlm_hidden = LayerNormForward(tr.mlm_act, weights.mlm_ln_scale, weights.mlm_ln_shift, tr.mlm_ln);
    result.logits.resize(tr.mlm_hidden.rows(), cfg.vocab_size);
    result.logits.noalias() = tr.mlm_hidden * weights.token_embedding.transpose();
    result.logits.rowwise() += weights.mlm_output_bias;
  } else {
    tr.cls_input.resize(batch, h);
    for (int b = 0; b < batch; ++b) tr.cls_input.row(b) = x.row(b * seq);
    dropout.apply(tr.cls_input, tr.cls_dropout);
    result.logits = Affine(tr.cls_input, weights.cls_weight, weights.cls_bias);
  }
  return result;
}

template <typename Scalar>
LossResult<Scalar> mlm_loss(const Matrix<Scalar>& logits, std::span<const std::int32_t> targets) {
  if (targets.empty()) throw std::invalid_argument("mlm_loss needs at least one masked position");
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw std::invalid_argument("mlm_loss: logits rows do not match targets");
  }
  const double n = static_cast<double>(targets.size());
  LossResult<Scalar> out;
  out.logit_grad.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const std::int32_t target = targets[static_cast<std::size_t>(i)];
    if (target < 0 || target >= logits.cols()) throw std::invalid_argument("mlm_loss: target out of range");
    const Eigen::Matrix<double, 1, Eigen::Dynamic> z = logits.row(i).template cast<double>();
    const double m = z.maxCoeff();
    const Eigen::Matrix<double, 1, Eigen::Dynamic> e = (z.array() - m).exp().matrix();
    const double sum = e.sum();
    total += m + std::log(sum) - z(target);
    Eigen::Matrix<double, 1, Eigen::Dynamic> g = e / sum;
    g(target) -= 1.0;
    out.logit_grad.row(i) = (g / n).template cast<Scalar>();
  }
  out.loss = total / n;
  return out;
}

template <typename Scalar>
LossResult<Scalar> cls_loss(const Matrix<Scalar>& logits, const Matrix<Scalar>& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw std::invalid_argument("cls_loss: logits and targets differ in shape");
  }
  if (logits.size() == 0) throw std::invalid_argument("cls_loss: empty batch");
  const double n = static_cast<double>(logits.size());
  LossResult<Scalar> out;
  out.logit_grad.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double t = static_cast<double>(targets(i, j));
      if (t != 0.0 && t != 1.0) throw std::invalid_argument("cls_loss: target outside {0,1}");
      const double z = static_cast<double>(logits(i, j));
      total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
      const double sigmoid = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      out.logit_grad(i, j) = static_cast<Scalar>((sigmoid - t) / n);
    }
  }
  out.loss = total / n;
  return out;
}

template <typename Scalar>
ModelWeights<Scalar> backward(const ModelWeights<Scalar>& weights, const ForwardTrace<Scalar>& tr,
                              const Matrix<Scalar>& logit_grad) {
  const EncoderConfig& cfg = weights.config;
  const int batch = tr.batch;
  const int seq = tr.seq;
  const int rows = batch * seq;
  const int h = cfg.hidden_dim;
  const int n_heads = cfg.n_heads;
  const int d = cfg.head_dim();
  const Scalar score_scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(d)));

  if (tr.layers.size() != weights.layers.size() || tr.final_hidden.rows() != rows || tr.final_hidden.cols() != h) {
    throw std::invalid_argument("mismatched trace");
  }
  if (tr.mode == HeadMode::kMlm) {
    if (logit_grad.rows() != static_cast<Eigen::Index>(tr.mlm_rows.size()) || logit_grad.cols() != cfg.vocab_size) {
      throw std::invalid_argument("mismatched trace: logit gradient shape");
    }
  } else if (!weights.has_cls_head() || logit_grad.rows() != batch || logit_grad.cols() != cfg.n_labels) {
    throw std::invalid_argument("mismatched trace: logit gradient shape");
  }

  ModelWeights<Scalar> g = ModelWeights<Scalar>::zeros(cfg);
  Matrix<Scalar> dx = Matrix<Scalar>::Zero(rows, h);

  if (tr.mode == HeadMode::kMlm) {
    g.token_embedding.noalias() += logit_grad.transpose() * tr.mlm_hidden;
    g.mlm_output_bias = logit_grad.colwise().sum();
    Matrix<Scalar> dhidden(logit_grad.rows(), h);
    dhidden.noalias() = logit_grad * weights.token_embedding;
    const Matrix<Scalar> dact = LayerNormBackward(dhidden, weights.mlm_ln_scale, tr.mlm_ln, g.mlm_ln_scale,
                                                  g.mlm_ln_shift);
    const Matrix<Scalar> dpre = dact.cwiseProduct(gelu_grad(tr.mlm_pre));
    g.mlm_transform_weight.noalias() = tr.mlm_gathered.transpose() * dpre;
    g.mlm_transform_bias = dpre.colwise().sum();
    Matrix<Scalar> dgathered(dpre.rows(), h);
    dgathered.noalias() = dpre * weights.mlm_transform_weight.transpose();
    for (std::size_t i = 0; i < tr.mlm_rows.size(); ++i) {
      dx.row(tr.mlm_rows[i]) += dgathered.row(static_cast<Eigen::Index>(i));
    }
  } else {
    g.cls_bias = logit_grad.colwise().sum();
    g.cls_weight.noalias() = tr.cls_input.transpose() * logit_grad;
    Matrix<Scalar> dcls(batch, h);
    dcls.noalias() = logit_grad * weights.cls_weight.transpose();
    if (tr.cls_dropout.size() > 0) dcls.array() *= tr.cls_dropout.array();
    for (int b = 0; b < batch; ++b) dx.row(b * seq) += dcls.row(b);
  }

  for (std::size_t li = weights.layers.size(); li-- > 0;) {
    const LayerWeights<Scalar>& lw = weights.layers[li];
    const LayerTrace<Scalar>& lt = tr.layers[li];
    LayerWeights<Scalar>& lg = g.layers[li];

    const Matrix<Scalar> dffn_sum = LayerNormBackward(dx, lw.ffn_ln_scale, lt.ffn_ln, lg.ffn_ln_scale, lg.ffn_ln_shift);
    Matrix<Scalar> dffn = dffn_sum;
    if (lt.ffn_dropout.size() > 0) dffn.array() *= lt.ffn_dropout.array();
    lg.ffn_out_weight.noalias() = lt.ffn_act.transpose() * dffn;
    lg.ffn_out_bias = dffn.colwise().sum();
    Matrix<Scalar> dact(rows, cfg.ff_dim);
    dact.noalias() = dffn * lw.ffn_out_weight.transpose();
    const Matrix<Scalar> dpre = dact.cwiseProduct(gelu_grad(lt.ffn_pre));
    lg.ffn_in_weight.noalias() = lt.ffn_input.transpose() * dpre;
    lg.ffn_in_bias = dpre.colwise().sum();
    Matrix<Scalar> dffn_input = dffn_sum;
    dffn_input.noalias() += dpre * lw.ffn_in_weight.transpose();

    const Matrix<Scalar> dattn_sum =
        LayerNormBackward(dffn_input, lw.attention_ln_scale, lt.attention_ln, lg.attention_ln_scale,
                          lg.attention_ln_shift);
    Matrix<Scalar> dattn = dattn_sum;
    if (lt.attention_dropout.size() > 0) dattn.array() *= lt.attention_dropout.array();
    lg.output_weight.noalias() = lt.context.transpose() * dattn;
    lg.output_bias = dattn.colwise().sum();
    Matrix<Scalar> dcontext(rows, h);
    dcontext.noalias() = dattn * lw.output_weight.transpose();

    Matrix<Scalar> dq(rows, h), dk(rows, h), dv(rows, h);
    parallel_for(static_cast<std::size_t>(batch), [&](std::size_t bi) {
      const int b = static_cast<int>(bi);
      for (int head = 0; head < n_heads; ++head) {
        const Matrix<Scalar>& probs = lt.attention_probs[static_cast<std::size_t>(b * n_heads + head)];
        const auto q = lt.query.block(b * seq, head * d, seq, d);
        const auto k = lt.key.block(b * seq, head * d, seq, d);
        const auto v = lt.value.block(b * seq, head * d, seq, d);
        const auto dc = dcontext.block(b * seq, head * d, seq, d);
        Matrix<Scalar> dprobs(seq, seq);
        dprobs.noalias() = dc * v.transpose();
        dv.block(b * seq, head * d, seq, d).noalias() = probs.transpose() * dc;
        const ColVector<Scalar> row_dot = (dprobs.array() * probs.array()).rowwise().sum();
        Matrix<Scalar> dscores = probs.array() * (dprobs.colwise() - row_dot).array();
        dscores *= score_scale;
        dq.block(b * seq, head * d, seq, d).noalias() = dscores * k;
        dk.block(b * seq, head * d, seq, d).noalias() = dscores.transpose() * q;
      }
    });
    lg.query_weight.noalias() = lt.input.transpose() * dq;
    lg.query_bias = dq.colwise().sum();
    lg.key_weight.noalias() = lt.input.transpose() * dk;
    lg.key_bias = dk.colwise().sum();
    lg.value_weight.noalias() = lt.input.transpose() * dv;
    lg.value_bias = dv.colwise().sum();
    dx = dattn_sum;
    dx.noalias() += dq * lw.query_weight.transpose();
    dx.noalias() += dk * lw.key_weight.transpose();
    dx.noalias() += dv * lw.value_weight.transpose();
  }

  if (tr.embedding_dropout.size() > 0) dx.array() *= tr.embedding_dropout.array();
  const Matrix<Scalar> dembed =
      LayerNormBackward(dx, weights.embedding_ln_scale, tr.embedding_ln, g.embedding_ln_scale, g.embedding_ln_shift);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < seq; ++t) {
      g.token_embedding.row(tr.ids(b, t)) += dembed.row(b * seq + t);
      g.position_embedding.row(t) += dembed.row(b * seq + t);
    }
  }
  return g;
}

template <typename Scalar>
void adam_step(ModelWeights<Scalar>& weights, const ModelWeights<Scalar>& grads, AdamState<Scalar>& state,
               const AdamOptions& options) {
  if (!all_finite(grads)) throw GradientOverflow();
  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(t));
  const Scalar b1 = static_cast<Scalar>(options.beta1);
  const Scalar b2 = static_cast<Scalar>(options.beta2);
  const Scalar lr = static_cast<Scalar>(options.lr);
  const Scalar eps = static_cast<Scalar>(options.epsilon);
  const Scalar inv_bc1 = static_cast<Scalar>(1.0 / bc1);
  const Scalar inv_bc2 = static_cast<Scalar>(1.0 / bc2);
  for_each_tensor(
      [&](const std::string&, auto& w, const auto& g, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * g;
        v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
        w.array() -= lr * (m.array() * inv_bc1) / ((v.array() * inv_bc2).sqrt() + eps);
      },
      weights, grads, state.m, state.v);
  state.step = t;
}

#define PATHLM_INSTANTIATE_ENCODER(Scalar)                                                                        \
  template struct ModelWeights<Scalar>;                                                                           \
  template ModelWeights<Scalar> init_weights<Scalar>(const EncoderConfig&, std::uint64_t);                        \
  template void init_cls_head<Scalar>(ModelWeights<Scalar>&, int, std::uint64_t);                                 \
  template ForwardResult<Scalar> forward<Scalar>(const ModelWeights<Scalar>&, const IdMatrix&, const IdMatrix&,   \
                                                 const ForwardOptions&);                                          \
  template LossResult<Scalar> mlm_loss<Scalar>(const Matrix<Scalar>&, std::span<const std::int32_t>);             \
  template LossResult<Scalar> cls_loss<Scalar>(const Matrix<Scalar>&, const Matrix<Scalar>&);                     \
  template ModelWeights<Scalar> backward<Scalar>(const ModelWeights<Scalar>&, const ForwardTrace<Scalar>&,        \
                                                 const Matrix<Scalar>&);                                          \
  template Matrix<Scalar> gelu<Scalar>(const Matrix<Scalar>&);                                                    \
  template Matrix<Scalar> gelu_grad<Scalar>(const Matrix<Scalar>&);                                               \
  template Matrix<Scalar> masked_softmax<Scalar>(const Matrix<Scalar>&, const RowVector<Scalar>&);                \
  template void adam_step<Scalar>(ModelWeights<Scalar>&, const ModelWeights<Scalar>&, AdamState<Scalar>&,         \
                                  const AdamOptions&);

PATHLM_INSTANTIATE_ENCODER(float)
PATHLM_INSTANTIATE_ENCODER(double)

#undef PATHLM_INSTANTIATE_ENCODER

}  // namespace pathlm
