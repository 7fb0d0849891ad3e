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


#include <doctest.h>

#include <filesystem>
#include <string>

#include "pathlm/checkpoint.hpp"
#include "pathlm/io.hpp"

namespace fs = std::filesystem;

namespace {

pathlm::EncoderConfig Config(int n_labels) {
  pathlm::EncoderConfig c;
  c.n_layers = 2;
  c.hidden_dim = 16;
  c.n_heads = 2;
  c.ff_dim = 32;
  c.max_seq_len = 8;
  c.vocab_size = 30;
  c.n_labels = n_labels;
  return c;
}

fs::path TempPath(const std::string& name) {
  fs::create_directories(fs::temp_directory_path() / "pathlm_test_ckpt");
  return fs::temp_directory_path() / "pathlm_test_ckpt" / name;
}

}  // namespace

TEST_CASE("save, load, forward is bit-identical") {
  const auto w = pathlm::init_weights<float>(Config(3), 5);
  pathlm::CheckpointMeta meta{w.config, "abc123", 17, {"x", "y", "z"}};
  const fs::path path = TempPath("model.ckpt");
  pathlm::save_checkpoint(path, w, meta);
  const auto back = pathlm::load_checkpoint(path, std::string("abc123"), w.config);
  CHECK(back.meta.step == 17);
  CHECK(back.meta.labels == meta.labels);
  CHECK(back.meta.config == w.config);
  pathlm::for_each_tensor(
      [](const std::string& name, const auto& a, const auto& b) {
        CAPTURE(name);
        CHECK(a.rows() == b.rows());
        CHECK(a.cols() == b.cols());
        CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0);
      },
      w, back.weights);

  pathlm::IdMatrix ids(1, 4), mask(1, 4);
  ids << 2, 9, 17, 3;
  mask << 1, 1, 1, 1;
  for (auto mode : {pathlm::HeadMode::kMlm, pathlm::HeadMode::kCls}) {
    pathlm::ForwardOptions opt;
    opt.mode = mode;
    const auto a = pathlm::forward(w, ids, mask, opt).logits;
    const auto b = pathlm::forward(back.weights, ids, mask, opt).logits;
    CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0);
  }
  // Serialization itself is deterministic.
  CHECK(pathlm::serialize_checkpoint(back.weights, back.meta) == pathlm::serialize_checkpoint(w, meta));
}

TEST_CASE("mismatches are rejected") {
  const auto w = pathlm::init_weights<float>(Config(0), 5);
  const fs::path path = TempPath("plain.ckpt");
  pathlm::save_checkpoint(path, w, {w.config, "hash-a", 0, {}});
  CHECK_NOTHROW(pathlm::load_checkpoint(path));
  CHECK_THROWS_AS(pathlm::load_checkpoint(path, std::string("hash-b")), pathlm::CheckpointError);
  pathlm::EncoderConfig other = w.config;
  other.hidden_dim = 32;
  CHECK_THROWS_AS(pathlm::load_checkpoint(path, std::nullopt, other), pathlm::CheckpointError);
  CHECK_THROWS_AS(pathlm::load_checkpoint(TempPath("absent.ckpt")), pathlm::InputError);
}

TEST_CASE("corrupt files are rejected") {
  const auto w = pathlm::init_weights<float>(Config(2), 1);
  const std::string bytes = pathlm::serialize_checkpoint(w, {w.config, "h", 0, {"a", "b"}});
  CHECK_NOTHROW(pathlm::deserialize_checkpoint(bytes));

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(pathlm::deserialize_checkpoint(bad), "not a checkpoint (bad magic)", pathlm::CheckpointError);
  CHECK_THROWS_WITH_AS(pathlm::deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), "truncated checkpoint",
                       pathlm::CheckpointError);
  CHECK_THROWS_AS(pathlm::deserialize_checkpoint(bytes + "x"), pathlm::CheckpointError);
  CHECK_THROWS_AS(pathlm::deserialize_checkpoint(""), pathlm::CheckpointError);
  CHECK_THROWS_AS(pathlm::serialize_checkpoint(w, {w.config, "h", 0, {"only one"}}), std::invalid_argument);
}

TEST_CASE("encoder config json") {
  pathlm::EncoderConfig c = Config(4);
  c.dropout_rate = 0.25;
  CHECK(pathlm::encoder_config_from_json(pathlm::encoder_config_to_json(c)) == c);
}
