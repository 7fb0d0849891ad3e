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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pathlm/corpus.hpp"
#include "pathlm/wordpiece.hpp"

namespace pathlm {

struct ThresholdCoverage {
  std::int64_t covered_words = 0;
  std::int64_t total_words = 0;
  double fraction = 0.0;
};

struct ClassCoverage {
  std::int64_t n_present = 0;  // unique class words present in the vocabulary
  std::int64_t n_total = 0;    // unique class words
  double ratio = 0.0;
  std::int64_t support = 0;    // member elements
};

struct CoverageReport {
  std::map<int, ThresholdCoverage> per_threshold;
  std::map<std::string, ClassCoverage> per_class;
};

// A word counts as covered only when it is itself a word-initial,
// non-special vocabulary token.
bool covers_word(const Vocabulary& vocab, const std::string& word);

// For each threshold t, counts unique words with corpus frequency >= t.
std::map<int, ThresholdCoverage> word_coverage(std::span<const std::string> corpus, const Vocabulary& vocab,
                                               std::span<const int> thresholds);

// Throws std::invalid_argument if an element has no labels.
std::map<std::string, ClassCoverage> class_coverage(std::span<const DiagnosisElement> labeled_elements,
                                                    const Vocabulary& vocab);

std::string coverage_to_json(const CoverageReport& report);
std::string threshold_coverage_to_csv(const std::map<int, ThresholdCoverage>& rows);
std::string class_coverage_to_csv(const std::map<std::string, ClassCoverage>& rows);

}  // namespace pathlm
