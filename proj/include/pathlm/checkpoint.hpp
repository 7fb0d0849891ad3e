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

// Binary checkpoint:
//   "PLMC" | u32 version | u32 n + n bytes of JSON header
//   then per tensor: u32 n + name | u32 rank | u32 dims[rank] | f32 data (row-major)
// All integers and floats little-endian. The JSON header carries the encoder
// config, the vocabulary content hash, the optimizer step count, and the
// classification label names when a head is present.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathlm/encoder.hpp"
#include "pathlm/io.hpp"

namespace pathlm {

inline constexpr char kCheckpointMagic[4] = {'P', 'L', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public InputError {
 public:
  using InputError::InputError;
};

struct CheckpointMeta {
  EncoderConfig config;
  std::string vocab_hash;
  std::int64_t step = 0;
  std::vector<std::string> labels;
};

struct Checkpoint {
  CheckpointMeta meta;
  ModelWeights<float> weights;
};

nlohmann::ordered_json encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

std::string serialize_checkpoint(const ModelWeights<float>& weights, const CheckpointMeta& meta);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelWeights<float>& weights,
                     const CheckpointMeta& meta);

// Rejects a vocabulary-hash mismatch when expected_vocab_hash is given, and a
// config mismatch when expected_config is given. Shapes are always checked
// against the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_vocab_hash = std::nullopt,
                           const std::optional<EncoderConfig>& expected_config = std::nullopt);

}  // namespace pathlm
