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

// Report ingestion and preprocessing: section extraction, splitting a
// multi-part DIAGNOSIS section into elements, normalization, de-identification,
// train/validation/test splits and descriptive statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pathlm {

struct PathologyReport {
  std::string report_id;
  std::string patient_id;
  // Input order is preserved. Names are uppercase; plain-dir reports carry a
  // single section with an empty name.
  std::vector<std::pair<std::string, std::string>> sections;
  std::optional<std::vector<std::string>> labels;
  std::optional<int> report_year;
};

struct DiagnosisElement {
  std::string source_report_id;
  std::string patient_id;
  std::string text;
  int token_count = 0;
  std::optional<std::vector<std::string>> labels;
  std::optional<int> report_year;
};

struct CorpusSplit {
  std::vector<DiagnosisElement> train;
  std::vector<DiagnosisElement> validation;
  std::vector<DiagnosisElement> test;
  std::uint64_t seed = 0;
};

struct SummaryStats {
  int n_patients = 0;
  int n_reports = 0;
  double mean_report_size = 0.0;
  double std_report_size = 0.0;
  std::int64_t n_words = 0;
  std::int64_t n_unique_tokens = 0;
};

struct CorpusStats {
  SummaryStats overall;
  std::map<int, SummaryStats> per_year;
};

enum class CorpusFormat { kJsonl, kPlainDir };

struct IngestResult {
  std::vector<PathologyReport> reports;
  int skipped = 0;
  std::vector<std::string> diagnostics;
};

// Throws InputError when `path` cannot be read. Malformed records are skipped
// and reported in `diagnostics`.
IngestResult ingest(const std::filesystem::path& path, CorpusFormat format);

// Parses one JSONL line; returns nullopt and sets `why` for malformed input.
std::optional<PathologyReport> parse_report_json(std::string_view line, std::string* why);

// True when `line` (after trimming) starts a section, e.g. "DIAGNOSIS:".
bool is_section_header(std::string_view line);

std::optional<std::string> extract_section(const PathologyReport& report, std::string_view section);

std::vector<std::string> split_elements(std::string_view section_text);

std::string normalize(std::string_view text);

int whitespace_token_count(std::string_view text);

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

CorpusSplit make_split(std::vector<DiagnosisElement> elements, SplitRatios ratios, std::uint64_t seed);

CorpusStats compute_stats(const std::vector<DiagnosisElement>& elements);

struct PreprocessResult {
  std::vector<DiagnosisElement> elements;
  int reports_without_section = 0;
  int duplicate_elements = 0;
};

// extract_section -> split_elements -> normalize for every report. Report
// labels and year propagate to each element; empty elements and repeated
// (report, text) pairs are dropped. Output order follows input order.
PreprocessResult preprocess(const std::vector<PathologyReport>& reports, std::string_view section = "DIAGNOSIS");

std::string elements_to_jsonl(const std::vector<DiagnosisElement>& elements);
std::vector<DiagnosisElement> read_elements_jsonl(const std::filesystem::path& path);
std::string reports_to_jsonl(const std::vector<PathologyReport>& reports);
std::string stats_to_json(const CorpusStats& stats);

}  // namespace pathlm
