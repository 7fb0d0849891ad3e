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

#include "pathlm/wordpiece.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "pathlm/io.hpp"

namespace pathlm {
namespace {

bool IsSpace(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string_view> SplitWords(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && IsSpace(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !IsSpace(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

bool IsContinuation(std::string_view piece) { return piece.substr(0, kContinuationPrefix.size()) == kContinuationPrefix; }

std::string_view StripPrefix(std::string_view piece) {
  return IsContinuation(piece) ? piece.substr(kContinuationPrefix.size()) : piece;
}

std::size_t Utf8Length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;
}

std::string ToLowerAscii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < word.size()) {
    std::size_t len = Utf8Length(static_cast<unsigned char>(word[i]));
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xc0) != 0x80) {
        len = 1;
        break;
      }
    }
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < static_cast<std::size_t>(kNumSpecialTokens)) {
    throw std::invalid_argument("vocabulary must start with the five special tokens");
  }
  Vocabulary v;
  v.strict_ = true;
  for (std::int32_t i = 0; i < kNumSpecialTokens; ++i) {
    if (tokens[static_cast<std::size_t>(i)] != kSpecialTokens[i]) {
      throw std::invalid_argument("token " + std::to_string(i) + " must be " + std::string(kSpecialTokens[i]) +
                                  ", found '" + tokens[static_cast<std::size_t>(i)] + "'");
    }
    v.special_ids_.push_back(i);
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t.empty() || t == kContinuationPrefix) {
      throw std::invalid_argument("invalid token at line " + std::to_string(i));
    }
    if (!v.index_.emplace(t, static_cast<std::int32_t>(i)).second) {
      throw std::invalid_argument("duplicate token '" + t + "'");
    }
  }
  v.tokens_ = std::move(tokens);
  v.unk_id_ = kUnkId;
  return v;
}

Vocabulary Vocabulary::parse(std::string_view text, bool strict) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    tokens.emplace_back(line);
    start = nl + 1;
  }
  if (strict) return from_tokens(std::move(tokens));

  Vocabulary v;
  v.strict_ = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) continue;
    v.index_.emplace(tokens[i], static_cast<std::int32_t>(i));
  }
  v.tokens_ = std::move(tokens);
  for (std::string_view special : kSpecialTokens) {
    if (auto it = v.index_.find(std::string(special)); it != v.index_.end()) v.special_ids_.push_back(it->second);
  }
  const auto unk = v.index_.find(std::string(kSpecialTokens[kUnkId]));
  if (unk == v.index_.end()) throw std::invalid_argument("vocabulary has no [UNK] token");
  v.unk_id_ = unk->second;
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, bool strict) {
  const std::string text = read_file(path);
  try {
    return parse(text, strict);
  } catch (const std::invalid_argument& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file_atomic(path, to_text()); }

std::optional<std::int32_t> Vocabulary::id_of(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::is_special(std::int32_t id) const {
  return std::find(special_ids_.begin(), special_ids_.end(), id) != special_ids_.end();
}

std::string Vocabulary::content_hash() const { return hex64(fnv1a64(to_text())); }

// ---------------------------------------------------------------------------
// Trainer

namespace {

class PieceTable {
 public:
  std::int32_t intern(const std::string& s) {
    auto [it, inserted] = ids_.emplace(s, static_cast<std::int32_t>(strings_.size()));
    if (inserted) strings_.push_back(s);
    return it->second;
  }
  const std::string& str(std::int32_t id) const { return strings_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return strings_.size(); }

 private:
  std::vector<std::string> strings_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

using PairKey = std::uint64_t;

PairKey MakeKey(std::int32_t left, std::int32_t right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) | static_cast<std::uint32_t>(right);
}
std::int32_t KeyLeft(PairKey k) { return static_cast<std::int32_t>(k >> 32); }
std::int32_t KeyRight(PairKey k) { return static_cast<std::int32_t>(k & 0xffffffffULL); }

struct Word {
  std::vector<std::int32_t> pieces;
  std::int64_t freq = 0;
};

}  // namespace

Vocabulary train_vocab(std::span<const std::string> corpus, const TrainerConfig& config) {
  if (config.min_frequency < 1) throw std::invalid_argument("min_frequency must be >= 1");

  std::map<std::string, std::int64_t> counts;
  std::int64_t total_words = 0;
  for (const auto& text : corpus) {
    for (std::string_view w : SplitWords(text)) {
      ++counts[config.lowercase ? ToLowerAscii(w) : std::string(w)];
      ++total_words;
    }
  }
  if (total_words == 0) throw std::invalid_argument("empty corpus");

  PieceTable table;
  std::vector<Word> words;
  std::set<std::string> initial_chars, continuation_chars;
  for (const auto& [w, freq] : counts) {
    if (freq < config.min_frequency) continue;
    const auto chars = utf8_chars(w);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      initial_chars.insert(chars[i]);
      if (i > 0) continuation_chars.insert(chars[i]);
    }
    words.push_back({{}, freq});
    words.back().pieces.reserve(chars.size());
    for (std::size_t i = 0; i < chars.size(); ++i) {
      words.back().pieces.push_back(table.intern(i == 0 ? chars[i] : std::string(kContinuationPrefix) + chars[i]));
    }
  }

  std::vector<std::string> alphabet(initial_chars.begin(), initial_chars.end());
  for (const auto& c : continuation_chars) alphabet.push_back(std::string(kContinuationPrefix) + c);
  std::sort(alphabet.begin(), alphabet.end());
  if (static_cast<std::size_t>(config.vocab_size) < alphabet.size() + kNumSpecialTokens) {
    throw std::invalid_argument("vocab_size " + std::to_string(config.vocab_size) + " is smaller than alphabet (" +
                                std::to_string(alphabet.size()) + ") plus special tokens");
  }

  std::vector<std::string> vocab(kSpecialTokens, kSpecialTokens + kNumSpecialTokens);
  std::unordered_map<std::string, bool> in_vocab;
  for (const auto& s : vocab) in_vocab[s] = true;
  for (const auto& a : alphabet) {
    if (in_vocab.emplace(a, true).second) vocab.push_back(a);
  }

  std::unordered_map<std::int32_t, std::int64_t> piece_freq;
  std::unordered_map<PairKey, std::int64_t> pair_freq;
  std::unordered_map<PairKey, std::vector<std::uint32_t>> pair_words;
  auto account = [&](std::uint32_t wi, std::int64_t sign) {
    const Word& w = words[wi];
    for (std::size_t i = 0; i < w.pieces.size(); ++i) {
      piece_freq[w.pieces[i]] += sign * w.freq;
      if (i + 1 < w.pieces.size()) {
        const PairKey k = MakeKey(w.pieces[i], w.pieces[i + 1]);
        pair_freq[k] += sign * w.freq;
        if (sign > 0) pair_words[k].push_back(wi);
      }
    }
  };
  for (std::uint32_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

  auto merged_string = [&](PairKey k) {
    return table.str(KeyLeft(k)) + std::string(StripPrefix(table.str(KeyRight(k))));
  };

  while (vocab.size() < static_cast<std::size_t>(config.vocab_size)) {
    // Exact comparison of f_a / (l_a r_a) against f_b / (l_b r_b).
    PairKey best = 0;
    bool have_best = false;
    std::int64_t best_f = 0;
    unsigned __int128 best_den = 1;
    std::string best_str;
    for (const auto& [k, f] : pair_freq) {
      if (f < config.min_frequency || f <= 0) continue;
      const unsigned __int128 den = static_cast<unsigned __int128>(piece_freq[KeyLeft(k)]) *
                                    static_cast<unsigned __int128>(piece_freq[KeyRight(k)]);
      if (!have_best) {
        best = k, best_f = f, best_den = den, best_str = merged_string(k), have_best = true;
        continue;
      }
      const unsigned __int128 lhs = static_cast<unsigned __int128>(f) * best_den;
      const unsigned __int128 rhs = static_cast<unsigned __int128>(best_f) * den;
      if (lhs < rhs) continue;
      if (lhs == rhs) {
        std::string s = merged_string(k);
        if (s > best_str || (s == best_str && k > best)) continue;
        best = k, best_f = f, best_den = den, best_str = std::move(s);
        continue;
      }
      best = k, best_f = f, best_den = den, best_str = merged_string(k);
    }
    if (!have_best) break;

    const std::int32_t left = KeyLeft(best);
    const std::int32_t right = KeyRight(best);
    const std::int32_t merged = table.intern(best_str);
    if (in_vocab.emplace(best_str, true).second) vocab.push_back(best_str);

    std::vector<std::uint32_t> affected = std::move(pair_words[best]);
    pair_words.erase(best);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (std::uint32_t wi : affected) {
      Word& w = words[wi];
      bool present = false;
      for (std::size_t i = 0; i + 1 < w.pieces.size(); ++i) {
        if (w.pieces[i] == left && w.pieces[i + 1] == right) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      account(wi, -1);
      std::vector<std::int32_t> next;
      next.reserve(w.pieces.size());
      for (std::size_t i = 0; i < w.pieces.size(); ++i) {
        if (i + 1 < w.pieces.size() && w.pieces[i] == left && w.pieces[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w.pieces[i]);
        }
      }
      w.pieces = std::move(next);
      account(wi, +1);
    }
    for (auto it = pair_freq.begin(); it != pair_freq.end();) {
      it = it->second == 0 ? pair_freq.erase(it) : std::next(it);
    }
  }
  return Vocabulary::from_tokens(std::move(vocab));
}

// ---------------------------------------------------------------------------
// Tokenizer

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence seq;
  for (std::string_view word : SplitWords(text)) {
    const std::size_t begin = seq.ids.size();
    const auto chars = utf8_chars(word);
    bool unknown = chars.size() > kMaxWordChars;
    std::vector<std::pair<std::int32_t, std::string>> pieces;
    std::size_t start = 0;
    while (!unknown && start < chars.size()) {
      std::optional<std::int32_t> match;
      std::string match_str;
      for (std::size_t end = chars.size(); end > start; --end) {
        std::string candidate = start > 0 ? std::string(kContinuationPrefix) : std::string();
        for (std::size_t k = start; k < end; ++k) candidate += chars[k];
        if (auto id = vocab.id_of(candidate)) {
          match = id;
          match_str = std::move(candidate);
          start = end;
          break;
        }
      }
      if (!match) {
        unknown = true;
        break;
      }
      pieces.emplace_back(*match, std::move(match_str));
    }
    if (unknown) {
      seq.ids.push_back(vocab.unk_id());
      seq.pieces.push_back(vocab.token(vocab.unk_id()));
    } else {
      for (auto& [id, piece] : pieces) {
        seq.ids.push_back(id);
        seq.pieces.push_back(std::move(piece));
      }
    }
    seq.word_boundaries.emplace_back(begin, seq.ids.size());
  }
  return seq;
}

std::string detokenize(const TokenSequence& seq) {
  std::string out;
  for (const auto& [begin, end] : seq.word_boundaries) {
    if (!out.empty()) out += ' ';
    for (std::size_t i = begin; i < end; ++i) {
      out += i == begin ? std::string_view(seq.pieces[i]) : StripPrefix(seq.pieces[i]);
    }
  }
  return out;
}

EncodedText encode_for_model(std::string_view text, const Vocabulary& vocab, int max_len) {
  if (max_len < 3) throw std::invalid_argument("max_len must be >= 3");
  const TokenSequence seq = tokenize(text, vocab);
  const std::size_t n = static_cast<std::size_t>(max_len);
  const std::size_t kept = std::min(seq.ids.size(), n - 2);
  EncodedText out;
  out.ids.reserve(n);
  out.ids.push_back(kClsId);
  out.ids.insert(out.ids.end(), seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(kept));
  out.ids.push_back(kSepId);
  out.attention_mask.assign(out.ids.size(), 1);
  out.ids.resize(n, kPadId);
  out.attention_mask.resize(n, 0);
  return out;
}

}  // namespace pathlm
