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

#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pathlm/corpus.hpp"
#include "pathlm/io.hpp"
#include "pathlm/synthcorpus.hpp"
#include "pathlm/training.hpp"
#include "pathlm/wordpiece.hpp"

namespace {

std::string Diagnosis(const pathlm::PathologyReport& r) { return *pathlm::extract_section(r, "DIAGNOSIS"); }

// Whitespace words with leading/trailing punctuation removed.
std::set<std::string> BareWords(const std::string& normalized) {
  std::set<std::string> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    while (i < normalized.size() && normalized[i] == ' ') ++i;
    std::size_t j = i;
    while (j < normalized.size() && normalized[j] != ' ') ++j;
    std::string w = normalized.substr(i, j - i);
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.pop_back();
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.front()))) w.erase(0, 1);
    if (!w.empty()) out.insert(w);
    i = j;
  }
  return out;
}

}  // namespace

TEST_CASE("one template with one fill gives identical reports") {
  pathlm::TemplateSpec spec;
  spec.templates = {"invasive {kind} carcinoma"};
  spec.slot_fills["kind"] = {{"ductal", 1.0}};
  spec.label_rules = {{"IBC", {"invasive"}}, {"benign", {"fibroadenoma"}}};
  spec.n_reports = 3;
  const auto reports = pathlm::generate(spec);
  REQUIRE(reports.size() == 3);
  for (const auto& r : reports) {
    CHECK(Diagnosis(r) == "invasive ductal carcinoma");
    CHECK(r.labels == std::vector<std::string>{"IBC"});
  }
  CHECK(reports[0].report_id != reports[1].report_id);
}

TEST_CASE("label rules match whole words and phrases") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> rules{
      {"IBC", {"invasive"}}, {"in situ", {"carcinoma in situ"}}, {"benign", {"fibroadenoma", "Benign"}}};
  CHECK(pathlm::match_labels("invasive ductal carcinoma", rules) == std::vector<std::string>{"IBC"});
  CHECK(pathlm::match_labels("ductal carcinoma in situ, solid", rules) == std::vector<std::string>{"in situ"});
  CHECK(pathlm::match_labels("noninvasive lesion", rules).empty());
  CHECK(pathlm::match_labels("benign. invasive", rules) == std::vector<std::string>{"IBC", "benign"});
}

TEST_CASE("generation is deterministic and order independent") {
  const auto spec = pathlm::default_template_spec(200, 5);
  const auto a = pathlm::generate(spec);
  const auto b = pathlm::generate(spec);
  CHECK(pathlm::reports_to_jsonl(a) == pathlm::reports_to_jsonl(b));
  auto other = spec;
  other.seed = 6;
  CHECK(pathlm::reports_to_jsonl(pathlm::generate(other)) != pathlm::reports_to_jsonl(a));
  // Report i depends only on its own index.
  auto bigger = spec;
  bigger.n_reports = 300;
  const auto c = pathlm::generate(bigger);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(Diagnosis(a[i]) == Diagnosis(c[i]));
}

TEST_CASE("spec validation") {
  pathlm::TemplateSpec spec;
  CHECK_THROWS_AS(spec.validate(), pathlm::InputError);
  spec.templates = {"a {missing} b"};
  CHECK_THROWS_AS(spec.validate(), pathlm::InputError);
  spec.slot_fills["missing"] = {{"x", 0.0}};
  CHECK_THROWS_AS(spec.validate(), pathlm::InputError);
  spec.slot_fills["missing"] = {{"x", 2.0}};
  CHECK_NOTHROW(spec.validate());
  spec.templates = {"a {open"};
  CHECK_THROWS_AS(spec.validate(), pathlm::InputError);
  CHECK(pathlm::template_slots("{a} x {b}, {a}") == std::vector<std::string>{"a", "b", "a"});
}

TEST_CASE("default spec") {
  const auto spec = pathlm::default_template_spec(5000, 42);
  CHECK(spec.templates.size() == 20);
  CHECK(spec.label_rules.size() == 6);
  std::vector<std::string> rule_labels;
  for (const auto& [label, _] : spec.label_rules) rule_labels.push_back(label);
  CHECK(rule_labels == pathlm::default_severity_labels());

  // Oracle vocabulary: literal template words and slot fills, normalized.
  std::set<std::string> expected, lexicon;
  for (const auto& t : spec.templates) {
    std::string literal;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == '{') {
        i = t.find('}', i);
        literal += ' ';
      } else {
        literal += t[i];
      }
    }
    for (const auto& w : BareWords(pathlm::normalize(literal))) expected.insert(w);
  }
  for (const auto& [slot, fills] : spec.slot_fills) {
    for (const auto& f : fills) {
      for (const auto& w : BareWords(pathlm::normalize(f.text))) {
        expected.insert(w);
        lexicon.insert(w);
      }
    }
  }
  CHECK(lexicon.size() >= 150);
  CHECK(lexicon.size() <= 300);

  std::set<std::string> generated;
  std::map<std::string, int> label_counts;
  for (const auto& r : pathlm::generate(spec)) {
    for (const auto& w : BareWords(pathlm::normalize(Diagnosis(r)))) generated.insert(w);
    for (const auto& l : *r.labels) ++label_counts[l];
  }
  CHECK(generated == expected);
  for (const auto& label : pathlm::default_severity_labels()) CHECK(label_counts[label] > 0);
}

TEST_CASE("deterministic spec: every token is fixed by length and position") {
  const auto spec = pathlm::deterministic_template_spec(2000, 42);
  CHECK(spec.templates.size() == 20);
  const auto pre = pathlm::preprocess(pathlm::generate(spec));
  std::map<int, std::string> by_length;
  for (const auto& e : pre.elements) {
    auto [it, fresh] = by_length.emplace(e.token_count, e.text);
    CHECK(it->second == e.text);
  }
  CHECK(by_length.size() == 20);
  CHECK(by_length.begin()->first == 4);
  CHECK(by_length.rbegin()->first == 23);
}

TEST_CASE("spec json round trip") {
  const auto spec = pathlm::default_template_spec(50, 9);
  const std::string text = pathlm::template_spec_to_json(spec);
  const auto back = pathlm::template_spec_from_json(text);
  CHECK(pathlm::template_spec_to_json(back) == text);
  CHECK(pathlm::reports_to_jsonl(pathlm::generate(back)) == pathlm::reports_to_jsonl(pathlm::generate(spec)));

  const auto plain = pathlm::template_spec_from_json(
      R"({"templates": ["x {s}"], "slot_fills": {"s": ["a", {"text": "b", "weight": 3}]}, "n_reports": 2})");
  CHECK(plain.slot_fills.at("s").size() == 2);
  CHECK(plain.slot_fills.at("s")[1].weight == 3.0);
  CHECK_THROWS_AS(pathlm::template_spec_from_json("{"), pathlm::InputError);
  CHECK_THROWS_AS(pathlm::template_spec_from_json(R"({"templates": ["x {s}"]})"), pathlm::InputError);
}
