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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pathlm {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kClsId = 2;
inline constexpr std::int32_t kSepId = 3;
inline constexpr std::int32_t kMaskId = 4;
inline constexpr std::int32_t kNumSpecialTokens = 5;

inline constexpr std::string_view kSpecialTokens[kNumSpecialTokens] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                                       "[MASK]"};
inline constexpr std::string_view kContinuationPrefix = "##";
inline constexpr std::size_t kMaxWordChars = 100;

// Ordered subword vocabulary; token id == position.
//
// Vocabularies built by this library are "strict": the five special tokens
// sit at ids 0-4. Files written by other toolkits can be loaded leniently for
// coverage studies; then special ids are resolved by name.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Throws std::invalid_argument unless the strict invariants hold.
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  static Vocabulary load(const std::filesystem::path& path, bool strict = true);
  static Vocabulary parse(std::string_view text, bool strict = true);

  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<std::int32_t> id_of(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  std::int32_t unk_id() const { return unk_id_; }
  bool is_strict() const { return strict_; }
  bool is_special(std::int32_t id) const;

  // Hex FNV-1a of the serialized file content; checkpoints pin it.
  std::string content_hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::int32_t> special_ids_;
  std::int32_t unk_id_ = kUnkId;
  bool strict_ = true;
};

struct TrainerConfig {
  int vocab_size = 13000;
  int min_frequency = 2;
  bool lowercase = true;
};

// Likelihood-scored pair merging: repeatedly merge the adjacent pair with the
// largest freq(pair) / (freq(left) * freq(right)), ties going to the
// lexicographically smaller merged string. Throws std::invalid_argument on an
// empty corpus or a budget below specials + alphabet.
Vocabulary train_vocab(std::span<const std::string> corpus, const TrainerConfig& config);

struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::string> pieces;
  // Half-open [begin, end) piece ranges, one per source word.
  std::vector<std::pair<std::size_t, std::size_t>> word_boundaries;
};

// Greedy longest-match-first per whitespace word. A word with an unmatched
// position, or longer than kMaxWordChars, becomes a single [UNK].
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

std::string detokenize(const TokenSequence& seq);

struct EncodedText {
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> attention_mask;
};

// [CLS] pieces [SEP], right-truncated to max_len and padded with [PAD].
EncodedText encode_for_model(std::string_view text, const Vocabulary& vocab, int max_len);

// Splits a UTF-8 string into code points (as byte strings). Invalid bytes are
// kept as single-byte units.
std::vector<std::string> utf8_chars(std::string_view word);

}  // namespace pathlm
