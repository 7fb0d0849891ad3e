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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pathlm/corpus.hpp"
#include "pathlm/io.hpp"

namespace fs = std::filesystem;
using pathlm::DiagnosisElement;
using pathlm::PathologyReport;

namespace {

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pathlm_test_corpus_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path WriteText(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::vector<DiagnosisElement> Elements(std::size_t n) {
  std::vector<DiagnosisElement> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].source_report_id = "r" + std::to_string(i);
    out[i].patient_id = "p" + std::to_string(i % 7);
    out[i].text = "element";
    out[i].token_count = 1;
  }
  return out;
}

std::set<std::pair<std::string, std::string>> Keys(const std::vector<DiagnosisElement>& v) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& e : v) out.emplace(e.source_report_id, e.text);
  return out;
}

}  // namespace

TEST_CASE("ingest jsonl") {
  const fs::path dir = TempDir("ingest");
  const std::string good =
      R"({"report_id": "a", "patient_id": "p1", "sections": {"history": "h", "DIAGNOSIS": "d"}, "labels": ["benign"], "year": 2012})"
      "\n"
      R"({"report_id": "b", "patient_id": "p1", "sections": {"DIAGNOSIS": "x"}})"
      "\n";

  SUBCASE("three well-formed records") {
    const auto r = pathlm::ingest(
        WriteText(dir / "three.jsonl", good + R"({"report_id": "c", "patient_id": "p2", "sections": {}})" "\n"),
        pathlm::CorpusFormat::kJsonl);
    CHECK(r.reports.size() == 3);
    CHECK(r.skipped == 0);
    const auto& a = r.reports[0];
    CHECK(a.report_id == "a");
    REQUIRE(a.sections.size() == 2);
    CHECK(a.sections[0].first == "HISTORY");  // order kept, names uppercased
    CHECK(a.sections[1].first == "DIAGNOSIS");
    CHECK(a.labels == std::vector<std::string>{"benign"});
    CHECK(a.report_year == 2012);
    CHECK_FALSE(r.reports[1].labels.has_value());
  }
  SUBCASE("record without report_id is skipped") {
    const auto r = pathlm::ingest(
        WriteText(dir / "two.jsonl", good + R"({"patient_id": "p2", "sections": {"DIAGNOSIS": "y"}})" "\n"),
        pathlm::CorpusFormat::kJsonl);
    CHECK(r.reports.size() == 2);
    CHECK(r.skipped == 1);
    CHECK(r.diagnostics.size() == 1);
  }
  SUBCASE("empty file") {
    const auto r = pathlm::ingest(WriteText(dir / "empty.jsonl", ""), pathlm::CorpusFormat::kJsonl);
    CHECK(r.reports.empty());
    CHECK(r.skipped == 0);
  }
  SUBCASE("unreadable path") {
    CHECK_THROWS_AS(pathlm::ingest(dir / "missing.jsonl", pathlm::CorpusFormat::kJsonl), pathlm::InputError);
  }
  SUBCASE("plain directory") {
    const fs::path plain = dir / "plain";
    fs::create_directories(plain);
    WriteText(plain / "r2.txt", "DIAGNOSIS: benign");
    WriteText(plain / "r1.txt", "HISTORY: h\nDIAGNOSIS: invasive carcinoma");
    const auto r = pathlm::ingest(plain, pathlm::CorpusFormat::kPlainDir);
    REQUIRE(r.reports.size() == 2);
    CHECK(r.reports[0].sections.size() == 1);
    CHECK(r.reports[0].sections[0].first.empty());
    CHECK(pathlm::extract_section(r.reports[0], "DIAGNOSIS").has_value());
  }
}

TEST_CASE("section headers") {
  CHECK(pathlm::is_section_header("DIAGNOSIS:"));
  CHECK(pathlm::is_section_header("  FINAL DIAGNOSIS: text"));
  CHECK(pathlm::is_section_header("GROSS/MICRO-DESCRIPTION:"));
  CHECK_FALSE(pathlm::is_section_header("Diagnosis:"));
  CHECK_FALSE(pathlm::is_section_header("AB:"));
  CHECK_FALSE(pathlm::is_section_header("DIAGNOSIS"));
}

TEST_CASE("extract_section") {
  PathologyReport r;
  r.report_id = "x";
  r.sections = {{"HISTORY", "h"}, {"DIAGNOSIS", "d"}};
  CHECK(pathlm::extract_section(r, "DIAGNOSIS") == "d");
  CHECK(pathlm::extract_section(r, "diagnosis") == "d");

  r.sections = {{"HISTORY", "h"}};
  CHECK_FALSE(pathlm::extract_section(r, "DIAGNOSIS").has_value());

  r.sections = {{"", "HISTORY: h\nDIAGNOSIS: invasive carcinoma\nCOMMENTS: c"}};
  CHECK(pathlm::extract_section(r, "DIAGNOSIS") == "invasive carcinoma");
}

TEST_CASE("split_elements") {
  using V = std::vector<std::string>;
  CHECK(pathlm::split_elements("a) benign tissue\nb) invasive carcinoma") == V{"benign tissue", "invasive carcinoma"});
  CHECK(pathlm::split_elements("single finding") == V{"single finding"});
  CHECK(pathlm::split_elements("").empty());
  CHECK(pathlm::split_elements("part 1: left breast\nmass\npart 2: right breast") ==
        V{"left breast\nmass", "right breast"});
  CHECK(pathlm::split_elements("first block\n\n\nsecond block") == V{"first block", "second block"});
  CHECK(pathlm::split_elements("a)\nb) only b") == V{"only b"});
}

TEST_CASE("normalize") {
  CHECK(pathlm::normalize("Invasive Ductal CARCINOMA") == "invasive ductal carcinoma");
  CHECK(pathlm::normalize("nottingham grade 3 tumor 12 mm") == "nottingham grade tumor mm");
  CHECK(pathlm::normalize("") == "");
  CHECK(pathlm::normalize("pT2 stage, 3.5 cm") == "pt stage, cm");
  CHECK(pathlm::normalize("  a \t\n b  ") == "a b");
  CHECK(pathlm::normalize("Reviewed by Dr. Smith today") == "reviewed by today");
  CHECK(pathlm::normalize("accession S-1234567 received") == "accession received");
  CHECK(pathlm::normalize("INVASIVE CARCINOMA") == "invasive carcinoma");
}

TEST_CASE("normalize is idempotent and leaves no digits or capitals") {
  std::mt19937_64 rng(3);
  const std::string alphabet = "aZ9 .,-/:()tT1";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    const std::string once = pathlm::normalize(s);
    CAPTURE(s);
    CHECK(pathlm::normalize(once) == once);
    CHECK(std::none_of(once.begin(), once.end(), [](char c) { return c >= 'A' && c <= 'Z'; }));
    CHECK(std::none_of(once.begin(), once.end(), [](char c) { return c >= '0' && c <= '9'; }));
  }
}

TEST_CASE("make_split") {
  SUBCASE("exact proportional sizes") {
    const auto s = pathlm::make_split(Elements(10), {0.7, 0.1, 0.2}, 42);
    CHECK(s.train.size() == 7);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 2);
    CHECK(s.seed == 42);
  }
  SUBCASE("deterministic under seed") {
    const auto a = pathlm::make_split(Elements(10), {}, 42);
    const auto b = pathlm::make_split(Elements(10), {}, 42);
    const auto c = pathlm::make_split(Elements(10), {}, 43);
    auto ids = [](const std::vector<DiagnosisElement>& v) {
      std::vector<std::string> out;
      for (const auto& e : v) out.push_back(e.source_report_id);
      return out;
    };
    CHECK(ids(a.train) == ids(b.train));
    CHECK(ids(a.test) == ids(b.test));
    CHECK(ids(a.train) != ids(c.train));
  }
  SUBCASE("corpus-scale totals") {
    // Floor rounding on 340,492 elements; within a few elements of 238,342 / 34,050 / 68,100.
    const auto s = pathlm::make_split(Elements(340492), {}, 1);
    CHECK(s.train.size() == 238344);
    CHECK(s.validation.size() == 34049);
    CHECK(s.test.size() == 68099);
    CHECK(std::abs(static_cast<long>(s.train.size()) - 238342) <= 3);
    CHECK(std::abs(static_cast<long>(s.validation.size()) - 34050) <= 3);
    CHECK(std::abs(static_cast<long>(s.test.size()) - 68100) <= 3);
  }
  SUBCASE("buckets partition the input") {
    for (std::size_t n : {1u, 2u, 3u, 17u, 101u}) {
      const auto s = pathlm::make_split(Elements(n), {}, 9);
      const auto tr = Keys(s.train), va = Keys(s.validation), te = Keys(s.test);
      CHECK(tr.size() + va.size() + te.size() == n);
      std::set<std::pair<std::string, std::string>> all = tr;
      all.insert(va.begin(), va.end());
      all.insert(te.begin(), te.end());
      CHECK(all == Keys(Elements(n)));
      // Floor for train and validation; the remainder absorbs both roundings.
      CHECK(s.train.size() == static_cast<std::size_t>(std::floor(0.7 * n)));
      CHECK(s.validation.size() == static_cast<std::size_t>(std::floor(0.1 * n)));
      CHECK(std::abs(static_cast<double>(s.test.size()) - 0.2 * n) < 2.0);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH_AS(pathlm::make_split({}, {}, 1), "empty corpus", std::invalid_argument);
    CHECK_THROWS_AS(pathlm::make_split(Elements(4), {0.5, 0.1, 0.1}, 1), std::invalid_argument);
    auto dup = Elements(3);
    dup.push_back(dup[0]);
    CHECK_THROWS_AS(pathlm::make_split(dup, {}, 1), std::invalid_argument);
  }
}

TEST_CASE("compute_stats") {
  auto make = [](std::vector<std::string> texts) {
    std::vector<DiagnosisElement> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      DiagnosisElement e;
      e.source_report_id = "r" + std::to_string(i);
      e.patient_id = "p";
      e.text = texts[i];
      e.token_count = pathlm::whitespace_token_count(texts[i]);
      e.report_year = 2010 + static_cast<int>(i);
      out.push_back(e);
    }
    return out;
  };
  const auto s = pathlm::compute_stats(make({"a b", "a b c d"}));
  CHECK(s.overall.n_words == 6);
  CHECK(s.overall.n_unique_tokens == 4);
  CHECK(s.overall.mean_report_size == doctest::Approx(3.0));
  CHECK(s.overall.std_report_size == doctest::Approx(1.0));
  CHECK(s.overall.n_reports == 2);
  CHECK(s.overall.n_patients == 1);
  CHECK(s.per_year.size() == 2);
  CHECK(s.per_year.at(2011).n_words == 4);

  const auto one = pathlm::compute_stats(make({"a"}));
  CHECK(one.overall.mean_report_size == 1.0);
  CHECK(one.overall.std_report_size == 0.0);

  const auto none = pathlm::compute_stats({});
  CHECK(none.overall.n_words == 0);
  CHECK(none.overall.mean_report_size == 0.0);
  CHECK(none.overall.std_report_size == 0.0);

  const auto copies = pathlm::compute_stats(make({"x y z", "x y z", "x y z"}));
  CHECK(copies.overall.std_report_size == 0.0);
  CHECK(copies.overall.mean_report_size == 3.0);
}

TEST_CASE("preprocess pipeline") {
  PathologyReport r1;
  r1.report_id = "r1";
  r1.patient_id = "p";
  r1.labels = std::vector<std::string>{"benign"};
  r1.report_year = 2015;
  r1.sections = {{"HISTORY", "Mass"}, {"DIAGNOSIS", "A) Benign tissue 2 cm\nB) Benign tissue 2 cm\nC) Fibroadenoma"}};
  PathologyReport r2;
  r2.report_id = "r2";
  r2.patient_id = "q";
  r2.sections = {{"HISTORY", "none"}};
  PathologyReport r3;
  r3.report_id = "r3";
  r3.patient_id = "q";
  r3.sections = {{"", "HISTORY: x\nDIAGNOSIS:\nPART 1: Invasive carcinoma\nCOMMENTS: none"}};

  const auto out = pathlm::preprocess({r1, r2, r3});
  CHECK(out.reports_without_section == 1);
  CHECK(out.duplicate_elements == 1);
  REQUIRE(out.elements.size() == 3);
  CHECK(out.elements[0].text == "benign tissue cm");
  CHECK(out.elements[0].token_count == 3);
  CHECK(out.elements[0].labels == std::vector<std::string>{"benign"});
  CHECK(out.elements[0].report_year == 2015);
  CHECK(out.elements[1].text == "fibroadenoma");
  CHECK(out.elements[2].text == "invasive carcinoma");
  for (const auto& e : out.elements) {
    CHECK(pathlm::normalize(e.text) == e.text);
    CHECK(e.token_count == pathlm::whitespace_token_count(e.text));
    CHECK(e.text.find("comments") == std::string::npos);
  }
}

TEST_CASE("element jsonl round trip") {
  const fs::path dir = TempDir("roundtrip");
  std::vector<DiagnosisElement> v = Elements(3);
  v[1].labels = std::vector<std::string>{"benign", "negative"};
  v[2].text = "quote \" and, comma";
  WriteText(dir / "e.jsonl", pathlm::elements_to_jsonl(v));
  const auto back = pathlm::read_elements_jsonl(dir / "e.jsonl");
  REQUIRE(back.size() == 3);
  CHECK(back[1].labels == v[1].labels);
  CHECK(back[2].text == v[2].text);
  CHECK(back[0].patient_id == v[0].patient_id);
  CHECK(pathlm::elements_to_jsonl(back) == pathlm::elements_to_jsonl(v));
}
