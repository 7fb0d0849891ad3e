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

#include "pathlm/checkpoint.hpp"

#include <cstring>
#include <stdexcept>

namespace pathlm {
namespace {

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void PutF32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  PutU32(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("truncated checkpoint");
    const std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    const std::string_view s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <typename Tensor>
constexpr bool IsVector() {
  return Tensor::RowsAtCompileTime == 1;
}

}  // namespace

nlohmann::ordered_json encoder_config_to_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["n_layers"] = c.n_layers;
  j["hidden_dim"] = c.hidden_dim;
  j["n_heads"] = c.n_heads;
  j["ff_dim"] = c.ff_dim;
  j["max_seq_len"] = c.max_seq_len;
  j["vocab_size"] = c.vocab_size;
  j["dropout_rate"] = c.dropout_rate;
  j["n_labels"] = c.n_labels;
  return j;
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.n_labels = j.at("n_labels").get<int>();
  return c;
}

std::string serialize_checkpoint(const ModelWeights<float>& weights, const CheckpointMeta& meta) {
  if (!meta.labels.empty() && static_cast<int>(meta.labels.size()) != weights.config.n_labels) {
    throw std::invalid_argument("label list does not match n_labels");
  }
  nlohmann::ordered_json header;
  header["config"] = encoder_config_to_json(weights.config);
  header["vocab_hash"] = meta.vocab_hash;
  header["step"] = meta.step;
  if (!meta.labels.empty()) header["labels"] = meta.labels;
  const std::string json = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  PutU32(out, kCheckpointVersion);
  PutU32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for_each_tensor(
      [&](const std::string& name, const auto& t) {
        using Tensor = std::decay_t<decltype(t)>;
        PutU32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        if constexpr (IsVector<Tensor>()) {
          PutU32(out, 1);
          PutU32(out, static_cast<std::uint32_t>(t.cols()));
        } else {
          PutU32(out, 2);
          PutU32(out, static_cast<std::uint32_t>(t.rows()));
          PutU32(out, static_cast<std::uint32_t>(t.cols()));
        }
        for (Eigen::Index i = 0; i < t.size(); ++i) PutF32(out, t.data()[i]);
      },
      weights);
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kCheckpointMagic, 4)) throw CheckpointError("not a checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t json_len = in.u32();
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(in.take(json_len));
    ckpt.meta.config = encoder_config_from_json(header.at("config"));
    ckpt.meta.vocab_hash = header.at("vocab_hash").get<std::string>();
    ckpt.meta.step = header.at("step").get<std::int64_t>();
    if (header.contains("labels")) ckpt.meta.labels = header["labels"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  try {
    ckpt.meta.config.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }
  if (!ckpt.meta.labels.empty() && static_cast<int>(ckpt.meta.labels.size()) != ckpt.meta.config.n_labels) {
    throw CheckpointError("label list does not match n_labels");
  }

  ckpt.weights = ModelWeights<float>::zeros(ckpt.meta.config);
  for_each_tensor(
      [&](const std::string& name, auto& t) {
        using Tensor = std::decay_t<decltype(t)>;
        if (in.done()) throw CheckpointError("missing tensor " + name);
        const std::string_view stored = in.take(in.u32());
        if (stored != name) {
          throw CheckpointError("expected tensor " + name + ", found " + std::string(stored));
        }
        const std::uint32_t rank = in.u32();
        std::vector<std::uint32_t> dims(rank);
        for (auto& dim : dims) dim = in.u32();
        const bool ok = IsVector<Tensor>() ? (rank == 1 && dims[0] == t.cols())
                                           : (rank == 2 && dims[0] == t.rows() && dims[1] == t.cols());
        if (!ok) throw CheckpointError("shape mismatch for tensor " + name);
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = in.f32();
      },
      ckpt.weights);
  if (!in.done()) throw CheckpointError("trailing data after last tensor");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ModelWeights<float>& weights,
                     const CheckpointMeta& meta) {
  write_file_atomic(path, serialize_checkpoint(weights, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<std::string>& expected_vocab_hash,
                           const std::optional<EncoderConfig>& expected_config) {
  const std::string bytes = read_file(path);
  Checkpoint ckpt;
  try {
    ckpt = deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  if (expected_vocab_hash && *expected_vocab_hash != ckpt.meta.vocab_hash) {
    throw CheckpointError(path.string() + ": vocabulary hash mismatch (checkpoint " + ckpt.meta.vocab_hash +
                          ", vocabulary " + *expected_vocab_hash + ")");
  }
  if (expected_config && !(*expected_config == ckpt.meta.config)) {
    throw CheckpointError(path.string() + ": encoder config mismatch");
  }
  return ckpt;
}

}  // namespace pathlm
