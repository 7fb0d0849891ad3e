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

#include <random>
#include <string>
#include <vector>

#include "pathlm/coverage.hpp"
#include "pathlm/io.hpp"

using pathlm::Vocabulary;

namespace {

Vocabulary Vocab(std::vector<std::string> extra) {
  std::vector<std::string> tokens(pathlm::kSpecialTokens, pathlm::kSpecialTokens + pathlm::kNumSpecialTokens);
  tokens.insert(tokens.end(), extra.begin(), extra.end());
  return Vocabulary::from_tokens(tokens);
}

pathlm::DiagnosisElement Labeled(std::string text, std::vector<std::string> labels) {
  pathlm::DiagnosisElement e;
  e.source_report_id = text;
  e.text = std::move(text);
  e.labels = std::move(labels);
  return e;
}

}  // namespace

TEST_CASE("covers_word") {
  const Vocabulary v = Vocab({"a", "##b", "b"});
  CHECK(pathlm::covers_word(v, "a"));
  CHECK(pathlm::covers_word(v, "b"));
  CHECK_FALSE(pathlm::covers_word(v, "##b"));
  CHECK_FALSE(pathlm::covers_word(v, "[MASK]"));
  CHECK_FALSE(pathlm::covers_word(v, "ab"));
}

TEST_CASE("word_coverage") {
  const std::vector<std::string> corpus{"a b", "a"};
  const std::vector<int> one{1};
  auto r = pathlm::word_coverage(corpus, Vocab({"a", "b"}), one);
  CHECK(r.at(1).covered_words == 2);
  CHECK(r.at(1).total_words == 2);
  CHECK(r.at(1).fraction == 1.0);

  const std::vector<int> two{2};
  r = pathlm::word_coverage(corpus, Vocab({"a"}), two);
  CHECK(r.at(2).covered_words == 1);
  CHECK(r.at(2).total_words == 1);
  CHECK(r.at(2).fraction == 1.0);

  const std::vector<int> high{1, 3};
  r = pathlm::word_coverage(corpus, Vocab({"a"}), high);
  CHECK(r.at(1).fraction == doctest::Approx(0.5));
  CHECK(r.at(3).total_words == 0);
  CHECK(r.at(3).fraction == 0.0);

  const std::vector<int> unsorted{2, 1}, zero{0};
  CHECK_THROWS_AS(pathlm::word_coverage(corpus, Vocab({"a"}), unsorted), std::invalid_argument);
  CHECK_THROWS_AS(pathlm::word_coverage(corpus, Vocab({"a"}), zero), std::invalid_argument);
}

TEST_CASE("class_coverage") {
  const std::vector<pathlm::DiagnosisElement> elements{Labeled("a b", {"x"}), Labeled("b c", {"x", "y"})};
  auto r = pathlm::class_coverage(elements, Vocab({"a", "b", "c"}));
  CHECK(r.at("x").ratio == 1.0);
  CHECK(r.at("x").support == 2);
  CHECK(r.at("y").n_total == 2);

  r = pathlm::class_coverage(elements, Vocab({"a", "b"}));
  CHECK(r.at("x").n_present == 2);
  CHECK(r.at("x").n_total == 3);
  CHECK(r.at("x").ratio == doctest::Approx(2.0 / 3.0));
  CHECK(r.count("z") == 0);

  std::vector<pathlm::DiagnosisElement> unlabeled = elements;
  unlabeled[1].labels.reset();
  CHECK_THROWS_AS(pathlm::class_coverage(unlabeled, Vocab({"a"})), std::invalid_argument);
}

TEST_CASE("coverage never decreases as the vocabulary grows") {
  std::mt19937_64 rng(8);
  std::vector<std::string> words;
  for (int i = 0; i < 60; ++i) words.push_back("w" + std::string(1, static_cast<char>('a' + i % 26)) + std::to_string(i));
  std::vector<std::string> corpus;
  std::vector<pathlm::DiagnosisElement> labeled;
  for (int i = 0; i < 300; ++i) {
    std::string t;
    for (int j = 0; j < 4; ++j) t += (j ? " " : "") + words[(rng() % 60) * (rng() % 2) + rng() % 3];
    corpus.push_back(t);
    labeled.push_back(Labeled(t, {i % 3 ? "common" : "rare"}));
  }
  const std::vector<int> thresholds{1, 2, 5, 10};
  std::vector<std::string> grown;
  auto prev = pathlm::word_coverage(corpus, Vocab(grown), thresholds);
  auto prev_cls = pathlm::class_coverage(labeled, Vocab(grown));
  for (int k = 0; k < 60; k += 7) {
    for (int j = k; j < std::min(60, k + 7); ++j) grown.push_back(words[static_cast<std::size_t>(j)]);
    const auto now = pathlm::word_coverage(corpus, Vocab(grown), thresholds);
    const auto now_cls = pathlm::class_coverage(labeled, Vocab(grown));
    for (int t : thresholds) CHECK(now.at(t).fraction >= prev.at(t).fraction);
    for (const auto& [c, row] : now_cls) CHECK(row.ratio >= prev_cls.at(c).ratio);
    prev = now;
    prev_cls = now_cls;
  }
  for (int t : thresholds) CHECK(prev.at(t).fraction == 1.0);
}

TEST_CASE("csv and json exports") {
  const std::vector<std::string> corpus{"a b", "a"};
  const std::vector<int> thresholds{1, 2};
  pathlm::CoverageReport report;
  report.per_threshold = pathlm::word_coverage(corpus, Vocab({"a"}), thresholds);
  report.per_class = pathlm::class_coverage(std::vector{Labeled("a, b", {"in situ, ductal"})}, Vocab({"a"}));
  const std::string csv = pathlm::threshold_coverage_to_csv(report.per_threshold);
  CHECK(csv == "threshold,covered,total,fraction\n1,1,2,0.5\n2,1,1,1\n");
  const std::string cls = pathlm::class_coverage_to_csv(report.per_class);
  CHECK(cls == "class,np,nn,ratio,support\n\"in situ, ductal\",0,2,0,1\n");
  CHECK(pathlm::coverage_to_json(report).find("\"per_threshold\"") != std::string::npos);
}
