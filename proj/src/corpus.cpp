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

#include "pathlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "pathlm/io.hpp"
#include "pathlm/parallel.hpp"

namespace pathlm {
namespace {

using ordered_json = nlohmann::ordered_json;

bool IsSpace(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool IsUpper(char c) { return c >= 'A' && c <= 'Z'; }
bool IsDigit(char c) { return c >= '0' && c <= '9'; }
bool IsAsciiAlpha(char c) { return (c >= 'a' && c <= 'z') || IsUpper(c); }

std::string_view Trim(std::string_view s) {
  while (!s.empty() && IsSpace(s.front())) s.remove_prefix(1);
  while (!s.empty() && IsSpace(s.back())) s.remove_suffix(1);
  return s;
}

std::string ToUpper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string ToLowerAscii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (IsUpper(c)) c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool IEquals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && ToUpper(a) == ToUpper(b);
}

std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

// Length of the header name if `line` starts a section, else 0. The grammar
// is `[A-Z][A-Z /-]{2,40}:`; "PART <x>:" lines are part markers, not headers.
std::size_t HeaderNameLength(std::string_view line) {
  line = Trim(line);
  if (line.empty() || !IsUpper(line[0])) return 0;
  std::size_t i = 1;
  while (i < line.size() && (IsUpper(line[i]) || line[i] == ' ' || line[i] == '/' || line[i] == '-')) ++i;
  const std::size_t body = i - 1;
  if (i >= line.size() || line[i] != ':' || body < 2 || body > 40) return 0;
  static const std::regex kPartMarker(R"(^PART\s+[A-Z0-9]+\s*$)");
  const std::string name(line.substr(0, i));
  if (std::regex_match(name, kPartMarker)) return 0;
  return i;
}

struct ParsedSection {
  std::string name;  // empty for text before the first header
  std::string text;
};

std::vector<ParsedSection> ParseSections(std::string_view blob) {
  std::vector<ParsedSection> sections(1);
  for (std::string_view line : SplitLines(blob)) {
    const std::string_view trimmed = Trim(line);
    if (const std::size_t n = HeaderNameLength(trimmed); n > 0) {
      sections.push_back({std::string(Trim(trimmed.substr(0, n))), std::string(Trim(trimmed.substr(n + 1)))});
      continue;
    }
    std::string& text = sections.back().text;
    if (!text.empty()) text += '\n';
    text += line;
  }
  for (auto& s : sections) s.text = std::string(Trim(s.text));
  return sections;
}

bool IsPartMarkerLine(std::string_view line, std::size_t* marker_len) {
  static const std::regex kLettered(R"(^[a-zA-Z]\))");
  static const std::regex kPart(R"(^[pP][aA][rR][tT] [a-zA-Z0-9]+[:.])");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(line.begin(), line.end(), m, kLettered) ||
      std::regex_search(line.begin(), line.end(), m, kPart)) {
    *marker_len = static_cast<std::size_t>(m.length(0));
    return true;
  }
  return false;
}

// Removes numbers from one whitespace token. Decimal, ratio and time forms
// ("3.5", "1/2", "10:30") go as a unit; a token that held digits and has no
// letters left is dropped entirely.
std::string StripNumbers(std::string_view token) {
  if (std::none_of(token.begin(), token.end(), IsDigit)) return std::string(token);
  std::string out;
  std::size_t i = 0;
  while (i < token.size()) {
    if (!IsDigit(token[i])) {
      out += token[i++];
      continue;
    }
    while (i < token.size() && IsDigit(token[i])) ++i;
    while (i + 1 < token.size() && (token[i] == '.' || token[i] == ',' || token[i] == '/' || token[i] == ':') &&
           IsDigit(token[i + 1])) {
      ++i;
      while (i < token.size() && IsDigit(token[i])) ++i;
    }
  }
  const bool has_letter = std::any_of(out.begin(), out.end(), [](char c) {
    return IsAsciiAlpha(c) || static_cast<unsigned char>(c) >= 0x80;
  });
  return has_letter ? out : std::string();
}

std::string Deidentify(std::string_view text) {
  static const std::regex kHonorificName(
      R"(\b(?:[Dd][Rr]|[Mm][Rr][Ss]?|[Mm][Ss]|[Pp][Rr][Oo][Ff])\.\s*[A-Z][A-Za-z'-]*(?:\s+[A-Z]\.)?(?:\s+[A-Z][A-Za-z'-]*)?)");
  static const std::regex kAccession(R"(\b[A-Za-z]{1,3}-?[0-9]{5,}\b)");
  std::string out = std::regex_replace(std::string(text), kHonorificName, " ");
  return std::regex_replace(out, kAccession, " ");
}

std::vector<std::string> OptionalStringList(const ordered_json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

ordered_json ElementToJson(const DiagnosisElement& e) {
  ordered_json j;
  j["report_id"] = e.source_report_id;
  j["patient_id"] = e.patient_id;
  j["text"] = e.text;
  if (e.labels) j["labels"] = *e.labels;
  if (e.report_year) j["year"] = *e.report_year;
  return j;
}

}  // namespace

std::optional<PathologyReport> parse_report_json(std::string_view line, std::string* why) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    *why = std::string("invalid JSON: ") + e.what();
    return std::nullopt;
  }
  if (!j.is_object()) {
    *why = "record is not an object";
    return std::nullopt;
  }
  if (!j.contains("report_id") || !j["report_id"].is_string() || j["report_id"].get<std::string>().empty()) {
    *why = "missing report_id";
    return std::nullopt;
  }
  if (!j.contains("sections") || !j["sections"].is_object()) {
    *why = "missing sections";
    return std::nullopt;
  }
  PathologyReport r;
  r.report_id = j["report_id"].get<std::string>();
  if (j.contains("patient_id") && j["patient_id"].is_string()) r.patient_id = j["patient_id"].get<std::string>();
  for (const auto& [name, text] : j["sections"].items()) {
    if (!text.is_string()) {
      *why = "section '" + name + "' is not a string";
      return std::nullopt;
    }
    r.sections.emplace_back(ToUpper(Trim(name)), text.get<std::string>());
  }
  if (j.contains("labels") && !j["labels"].is_null()) {
    if (!j["labels"].is_array() || !std::all_of(j["labels"].begin(), j["labels"].end(),
                                                [](const ordered_json& v) { return v.is_string(); })) {
      *why = "labels must be a list of strings";
      return std::nullopt;
    }
    r.labels = OptionalStringList(j["labels"]);
  }
  if (j.contains("year") && j["year"].is_number_integer()) r.report_year = j["year"].get<int>();
  return r;
}

IngestResult ingest(const std::filesystem::path& path, CorpusFormat format) {
  IngestResult result;
  std::unordered_set<std::string> seen;
  auto accept = [&](PathologyReport r, const std::string& where) {
    if (!seen.insert(r.report_id).second) {
      ++result.skipped;
      result.diagnostics.push_back(where + ": duplicate report_id '" + r.report_id + "'");
      return;
    }
    result.reports.push_back(std::move(r));
  };

  if (format == CorpusFormat::kPlainDir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(path, ec)) throw InputError("cannot read directory " + path.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      PathologyReport r;
      r.report_id = f.stem().string();
      r.sections.emplace_back("", read_file(f));
      accept(std::move(r), f.string());
    }
    return result;
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    std::string why;
    auto r = parse_report_json(line, &why);
    if (!r) {
      ++result.skipped;
      result.diagnostics.push_back(path.string() + ":" + std::to_string(line_no) + ": " + why);
      continue;
    }
    accept(std::move(*r), path.string() + ":" + std::to_string(line_no));
  }
  return result;
}

bool is_section_header(std::string_view line) { return HeaderNameLength(line) > 0; }

std::optional<std::string> extract_section(const PathologyReport& report, std::string_view section) {
  for (const auto& [name, text] : report.sections) {
    if (!IEquals(name, section)) continue;
    // Stop at any header embedded in the section body.
    auto parsed = ParseSections(text);
    if (parsed.front().text.empty() && parsed.size() > 1 && IEquals(parsed[1].name, section)) {
      return parsed[1].text;
    }
    return parsed.front().text;
  }
  for (const auto& [name, text] : report.sections) {
    for (const auto& parsed : ParseSections(text)) {
      if (!parsed.name.empty() && IEquals(parsed.name, section)) return parsed.text;
    }
  }
  return std::nullopt;
}

std::vector<std::string> split_elements(std::string_view section_text) {
  const auto lines = SplitLines(section_text);
  std::vector<std::string> blocks;
  auto push = [&](std::string& block) {
    const std::string_view t = Trim(block);
    if (!t.empty()) blocks.emplace_back(t);
    block.clear();
  };

  bool has_markers = false;
  for (std::string_view line : lines) {
    std::size_t len = 0;
    if (IsPartMarkerLine(Trim(line), &len)) {
      has_markers = true;
      break;
    }
  }

  std::string block;
  if (has_markers) {
    for (std::string_view line : lines) {
      const std::string_view trimmed = Trim(line);
      std::size_t len = 0;
      if (IsPartMarkerLine(trimmed, &len)) {
        push(block);
        block = std::string(trimmed.substr(len));
        continue;
      }
      block += '\n';
      block += line;
    }
    push(block);
    return blocks;
  }

  // Blank-line separated blocks; a text without blank lines is one block.
  for (std::string_view line : lines) {
    if (Trim(line).empty()) {
      push(block);
      continue;
    }
    if (!block.empty()) block += '\n';
    block += line;
  }
  push(block);
  return blocks;
}

std::string normalize(std::string_view text) {
  const std::string lowered = ToLowerAscii(Deidentify(text));
  std::string out;
  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && IsSpace(lowered[i])) ++i;
    const std::size_t start = i;
    while (i < lowered.size() && !IsSpace(lowered[i])) ++i;
    if (start == i) break;
    std::string token = StripNumbers(std::string_view(lowered).substr(start, i - start));
    if (token.empty()) continue;
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

int whitespace_token_count(std::string_view text) {
  int count = 0;
  bool in_token = false;
  for (char c : text) {
    if (IsSpace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

CorpusSplit make_split(std::vector<DiagnosisElement> elements, SplitRatios ratios, std::uint64_t seed) {
  if (elements.empty()) throw std::invalid_argument("empty corpus");
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9 || ratios.train < 0 ||
      ratios.validation < 0 || ratios.test < 0) {
    throw std::invalid_argument("split ratios must be nonnegative and sum to 1");
  }
  {
    std::set<std::pair<std::string_view, std::string_view>> keys;
    for (const auto& e : elements) {
      if (!keys.emplace(e.source_report_id, e.text).second) {
        throw std::invalid_argument("duplicate element (" + e.source_report_id + ", \"" + e.text + "\")");
      }
    }
  }
  const std::size_t n = elements.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.train + 1e-9));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.validation + 1e-9)));

  CorpusSplit split;
  split.seed = seed;
  split.train.reserve(n_train);
  split.validation.reserve(n_val);
  split.test.reserve(n - n_train - n_val);
  for (std::size_t i = 0; i < n; ++i) {
    auto& bucket = i < n_train ? split.train : (i < n_train + n_val ? split.validation : split.test);
    bucket.push_back(std::move(elements[order[i]]));
  }
  return split;
}

namespace {

SummaryStats Summarize(const std::vector<const DiagnosisElement*>& elements) {
  SummaryStats s;
  if (elements.empty()) return s;
  std::unordered_set<std::string_view> patients, reports, tokens;
  double sum = 0.0;
  for (const auto* e : elements) {
    patients.insert(e->patient_id);
    reports.insert(e->source_report_id);
    sum += e->token_count;
    s.n_words += e->token_count;
    std::string_view text = e->text;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && IsSpace(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !IsSpace(text[i])) ++i;
      if (i > start) tokens.insert(text.substr(start, i - start));
    }
  }
  const double n = static_cast<double>(elements.size());
  s.mean_report_size = sum / n;
  double sq = 0.0;
  for (const auto* e : elements) {
    const double d = e->token_count - s.mean_report_size;
    sq += d * d;
  }
  s.std_report_size = std::sqrt(sq / n);
  s.n_patients = static_cast<int>(patients.size());
  s.n_reports = static_cast<int>(reports.size());
  s.n_unique_tokens = static_cast<std::int64_t>(tokens.size());
  return s;
}

}  // namespace

CorpusStats compute_stats(const std::vector<DiagnosisElement>& elements) {
  CorpusStats stats;
  std::vector<const DiagnosisElement*> all;
  std::map<int, std::vector<const DiagnosisElement*>> by_year;
  for (const auto& e : elements) {
    all.push_back(&e);
    if (e.report_year) by_year[*e.report_year].push_back(&e);
  }
  stats.overall = Summarize(all);
  for (const auto& [year, members] : by_year) stats.per_year[year] = Summarize(members);
  return stats;
}

PreprocessResult preprocess(const std::vector<PathologyReport>& reports, std::string_view section) {
  struct PerReport {
    std::vector<DiagnosisElement> elements;
    bool missing = false;
  };
  std::vector<PerReport> staged(reports.size());
  parallel_for(reports.size(), [&](std::size_t i) {
    const PathologyReport& r = reports[i];
    const auto text = extract_section(r, section);
    if (!text) {
      staged[i].missing = true;
      return;
    }
    for (const auto& raw : split_elements(*text)) {
      DiagnosisElement e;
      e.source_report_id = r.report_id;
      e.patient_id = r.patient_id;
      e.text = normalize(raw);
      if (e.text.empty()) continue;
      e.token_count = whitespace_token_count(e.text);
      e.labels = r.labels;
      e.report_year = r.report_year;
      staged[i].elements.push_back(std::move(e));
    }
  });

  PreprocessResult result;
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& s : staged) {
    if (s.missing) ++result.reports_without_section;
    for (auto& e : s.elements) {
      if (!seen.emplace(e.source_report_id, e.text).second) {
        ++result.duplicate_elements;
        continue;
      }
      result.elements.push_back(std::move(e));
    }
  }
  return result;
}

std::string elements_to_jsonl(const std::vector<DiagnosisElement>& elements) {
  std::string out;
  for (const auto& e : elements) {
    out += ElementToJson(e).dump();
    out += '\n';
  }
  return out;
}

std::vector<DiagnosisElement> read_elements_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<DiagnosisElement> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      DiagnosisElement e;
      e.source_report_id = j.at("report_id").get<std::string>();
      e.patient_id = j.value("patient_id", std::string());
      e.text = j.at("text").get<std::string>();
      e.token_count = whitespace_token_count(e.text);
      if (j.contains("labels") && !j["labels"].is_null()) e.labels = OptionalStringList(j["labels"]);
      if (j.contains("year") && j["year"].is_number_integer()) e.report_year = j["year"].get<int>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::string reports_to_jsonl(const std::vector<PathologyReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    ordered_json j;
    j["report_id"] = r.report_id;
    j["patient_id"] = r.patient_id;
    ordered_json sections = ordered_json::object();
    for (const auto& [name, text] : r.sections) sections[name] = text;
    j["sections"] = std::move(sections);
    if (r.labels) j["labels"] = *r.labels;
    if (r.report_year) j["year"] = *r.report_year;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string stats_to_json(const CorpusStats& stats) {
  auto to_json = [](const SummaryStats& s) {
    ordered_json j;
    j["n_patients"] = s.n_patients;
    j["n_reports"] = s.n_reports;
    j["mean_report_size"] = s.mean_report_size;
    j["std_report_size"] = s.std_report_size;
    j["n_words"] = s.n_words;
    j["n_unique_tokens"] = s.n_unique_tokens;
    return j;
  };
  ordered_json j;
  j["overall"] = to_json(stats.overall);
  ordered_json years = ordered_json::object();
  for (const auto& [year, s] : stats.per_year) years[std::to_string(year)] = to_json(s);
  j["per_year"] = std::move(years);
  return j.dump(2) + "\n";
}

}  // namespace pathlm
