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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pathlm/corpus.hpp"

namespace pathlm {

struct WeightedFill {
  std::string text;
  double weight = 1.0;
};

// Templates reference slots as "{name}"; each occurrence is sampled
// independently. A label is assigned when any of its trigger phrases occurs
// as a whole-word sequence in the normalized diagnosis text.
struct TemplateSpec {
  std::vector<std::string> templates;
  std::map<std::string, std::vector<WeightedFill>> slot_fills;
  std::vector<std::pair<std::string, std::vector<std::string>>> label_rules;
  std::vector<std::string> history;  // optional HISTORY section texts
  int n_reports = 100;
  std::uint64_t seed = 42;
  int first_year = 2008;
  int n_years = 5;

  // Throws InputError on a slot without fills, a non-positive weight, or an
  // empty template list.
  void validate() const;
};

// Slot names referenced by a template, in order of appearance.
std::vector<std::string> template_slots(std::string_view tmpl);

// Report i draws only from derive_seed(spec.seed, i).
std::vector<PathologyReport> generate(const TemplateSpec& spec);

std::vector<std::string> match_labels(std::string_view normalized_text,
                                      const std::vector<std::pair<std::string, std::vector<std::string>>>& rules);

// 20 breast-pathology templates with a lexicon of roughly 200 terms and the
// six severity labels.
TemplateSpec default_template_spec(int n_reports = 1000, std::uint64_t seed = 42);

// 20 templates, each with a different word count and only single-fill slots,
// so every token is determined by the sequence length and its position.
TemplateSpec deterministic_template_spec(int n_reports = 5000, std::uint64_t seed = 42);

TemplateSpec template_spec_from_json(std::string_view text);
std::string template_spec_to_json(const TemplateSpec& spec);

}  // namespace pathlm
