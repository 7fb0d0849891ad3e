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

#include "pathlm/coverage.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "pathlm/io.hpp"

namespace pathlm {
namespace {

template <typename Fn>
void ForEachWord(const std::string& text, Fn&& fn) {
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > start) fn(text.substr(start, i - start));
  }
}

}  // namespace

bool covers_word(const Vocabulary& vocab, const std::string& word) {
  if (word.rfind(std::string(kContinuationPrefix), 0) == 0) return false;
  const auto id = vocab.id_of(word);
  return id.has_value() && !vocab.is_special(*id);
}

std::map<int, ThresholdCoverage> word_coverage(std::span<const std::string> corpus, const Vocabulary& vocab,
                                               std::span<const int> thresholds) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] < 1) throw std::invalid_argument("thresholds must be positive");
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) throw std::invalid_argument("thresholds must be ascending");
  }
  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& text : corpus) ForEachWord(text, [&](std::string w) { ++freq[std::move(w)]; });

  std::map<int, ThresholdCoverage> out;
  for (int t : thresholds) out[t] = {};
  for (const auto& [word, f] : freq) {
    const bool covered = covers_word(vocab, word);
    for (auto& [t, row] : out) {
      if (f < t) break;
      ++row.total_words;
      if (covered) ++row.covered_words;
    }
  }
  for (auto& [t, row] : out) {
    row.fraction = row.total_words == 0 ? 0.0 : static_cast<double>(row.covered_words) / row.total_words;
  }
  return out;
}

std::map<std::string, ClassCoverage> class_coverage(std::span<const DiagnosisElement> labeled_elements,
                                                    const Vocabulary& vocab) {
  std::map<std::string, std::set<std::string>> pools;
  std::map<std::string, std::int64_t> support;
  for (const auto& e : labeled_elements) {
    if (!e.labels || e.labels->empty()) {
      throw std::invalid_argument("element from report '" + e.source_report_id + "' has no labels");
    }
    std::set<std::string> distinct(e.labels->begin(), e.labels->end());
    for (const auto& label : distinct) {
      ++support[label];
      auto& pool = pools[label];
      ForEachWord(e.text, [&](std::string w) { pool.insert(std::move(w)); });
    }
  }
  std::map<std::string, ClassCoverage> out;
  for (const auto& [label, pool] : pools) {
    ClassCoverage c;
    c.n_total = static_cast<std::int64_t>(pool.size());
    c.n_present = std::count_if(pool.begin(), pool.end(), [&](const std::string& w) { return covers_word(vocab, w); });
    c.ratio = c.n_total == 0 ? 0.0 : static_cast<double>(c.n_present) / c.n_total;
    c.support = support[label];
    out[label] = c;
  }
  return out;
}

std::string coverage_to_json(const CoverageReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json thresholds = nlohmann::ordered_json::array();
  for (const auto& [t, row] : report.per_threshold) {
    thresholds.push_back({{"threshold", t},
                          {"covered", row.covered_words},
                          {"total", row.total_words},
                          {"fraction", row.fraction}});
  }
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& [label, c] : report.per_class) {
    classes.push_back(
        {{"class", label}, {"np", c.n_present}, {"nn", c.n_total}, {"ratio", c.ratio}, {"support", c.support}});
  }
  j["per_threshold"] = std::move(thresholds);
  j["per_class"] = std::move(classes);
  return j.dump(2) + "\n";
}

std::string threshold_coverage_to_csv(const std::map<int, ThresholdCoverage>& rows) {
  std::string out = "threshold,covered,total,fraction\n";
  for (const auto& [t, row] : rows) {
    out += std::to_string(t) + "," + std::to_string(row.covered_words) + "," + std::to_string(row.total_words) + "," +
           format_number(row.fraction) + "\n";
  }
  return out;
}

std::string class_coverage_to_csv(const std::map<std::string, ClassCoverage>& rows) {
  std::string out = "class,np,nn,ratio,support\n";
  for (const auto& [label, c] : rows) {
    out += csv_field(label) + "," + std::to_string(c.n_present) + "," + std::to_string(c.n_total) + "," +
           format_number(c.ratio) + "," + std::to_string(c.support) + "\n";
  }
  return out;
}

}  // namespace pathlm
