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

#include "pathlm/synthcorpus.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pathlm/io.hpp"
#include "pathlm/parallel.hpp"

namespace pathlm {

void TemplateSpec::validate() const {
  if (templates.empty()) throw InputError("template spec has no templates");
  if (n_reports < 0) throw InputError("n_reports must be >= 0");
  if (n_years < 1) throw InputError("n_years must be positive");
  for (const auto& t : templates) {
    for (const auto& slot : template_slots(t)) {
      const auto it = slot_fills.find(slot);
      if (it == slot_fills.end() || it->second.empty()) throw InputError("slot '" + slot + "' has no fills");
    }
  }
  for (const auto& [slot, fills] : slot_fills) {
    for (const auto& f : fills) {
      if (!(f.weight > 0.0)) throw InputError("slot '" + slot + "' has a non-positive weight");
    }
  }
  for (const auto& [label, triggers] : label_rules) {
    if (triggers.empty()) throw InputError("label '" + label + "' has no trigger phrases");
  }
}

std::vector<std::string> template_slots(std::string_view tmpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string_view::npos) {
    const std::size_t end = tmpl.find('}', pos);
    if (end == std::string_view::npos) throw InputError("unterminated slot in template: " + std::string(tmpl));
    out.emplace_back(tmpl.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return out;
}

namespace {

std::vector<std::string> Words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) {
    // Edge punctuation does not separate a trigger from the text.
    const auto b = w.find_first_not_of(".,;:()");
    const auto e = w.find_last_not_of(".,;:()");
    if (b != std::string::npos) out.push_back(w.substr(b, e - b + 1));
  }
  return out;
}

const WeightedFill& Pick(const std::vector<WeightedFill>& fills, std::mt19937_64& rng) {
  if (fills.size() == 1) return fills.front();
  std::vector<double> weights;
  for (const auto& f : fills) weights.push_back(f.weight);
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return fills[dist(rng)];
}

std::string Fill(const std::string& tmpl, const TemplateSpec& spec, std::mt19937_64& rng) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) break;
    const std::size_t close = tmpl.find('}', open);
    out.append(tmpl, pos, open - pos);
    out += Pick(spec.slot_fills.at(tmpl.substr(open + 1, close - open - 1)), rng).text;
    pos = close + 1;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

}  // namespace

std::vector<std::string> match_labels(std::string_view normalized_text,
                                      const std::vector<std::pair<std::string, std::vector<std::string>>>& rules) {
  const auto words = Words(normalized_text);
  std::vector<std::string> out;
  for (const auto& [label, triggers] : rules) {
    const bool hit = std::any_of(triggers.begin(), triggers.end(), [&](const std::string& trigger) {
      const auto phrase = Words(normalize(trigger));
      if (phrase.empty()) return false;
      return std::search(words.begin(), words.end(), phrase.begin(), phrase.end()) != words.end();
    });
    if (hit) out.push_back(label);
  }
  return out;
}

std::vector<PathologyReport> generate(const TemplateSpec& spec) {
  spec.validate();
  std::vector<PathologyReport> reports(static_cast<std::size_t>(spec.n_reports));
  const int n_patients = std::max(1, spec.n_reports * 3 / 4);
  parallel_for(reports.size(), [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(spec.seed, i));
    PathologyReport& r = reports[i];
    char id[32];
    std::snprintf(id, sizeof(id), "R%07zu", i);
    r.report_id = id;
    std::uniform_int_distribution<int> patient(0, n_patients - 1);
    std::snprintf(id, sizeof(id), "P%06d", patient(rng));
    r.patient_id = id;
    std::uniform_int_distribution<int> year(0, spec.n_years - 1);
    r.report_year = spec.first_year + year(rng);
    if (!spec.history.empty()) {
      std::uniform_int_distribution<std::size_t> h(0, spec.history.size() - 1);
      r.sections.emplace_back("HISTORY", spec.history[h(rng)]);
    }
    std::uniform_int_distribution<std::size_t> t(0, spec.templates.size() - 1);
    const std::string diagnosis = Fill(spec.templates[t(rng)], spec, rng);
    r.sections.emplace_back("DIAGNOSIS", diagnosis);
    r.labels = match_labels(normalize(diagnosis), spec.label_rules);
  });
  return reports;
}

// --- bundled specs ------------------------------------------------------------------

namespace {

std::vector<WeightedFill> Uniform(std::initializer_list<const char*> texts) {
  std::vector<WeightedFill> out;
  for (const char* t : texts) out.push_back({t, 1.0});
  return out;
}

}  // namespace

TemplateSpec default_template_spec(int n_reports, std::uint64_t seed) {
  TemplateSpec s;
  s.n_reports = n_reports;
  s.seed = seed;
  s.templates = {
      "{side} breast, {procedure}: {ibc}, {grade}.",
      "{side} breast, {location}, {procedure}: {ibc}, {grade}, {extra}.",
      "{side} breast, {procedure}: {ibc} and {isc}, {dcis_grade}.",
      "{side} breast, {procedure}: {isc}, {dcis_grade}, {extra}.",
      "{side} breast, {location}, {procedure}: {isc}.",
      "{side} breast, {procedure}: {hrl}.",
      "{side} breast, {procedure}: {hrl} with {benign}.",
      "{side} breast, {location}, {procedure}: {hrl}, {extra}.",
      "{side} breast, {procedure}: {benign}.",
      "{side} breast, {procedure}: {benign} and {benign}, {extra}.",
      "{side} breast, {location}, {procedure}: {benign}, {extra}.",
      "{side} breast, {procedure}: benign breast tissue, {negative}.",
      "{side} breast, {procedure}: {negative}.",
      "{side} axillary lymph node, {node_procedure}: {node_result}.",
      "{organ}, {nb_procedure}: {nbc}.",
      "{organ}, {nb_procedure}: {nbc}, {nb_extra}.",
      "{organ}, {nb_procedure}: {nb_benign}.",
      "{side} breast, {procedure}: {nbc}, {nb_extra}.",
      "{side} breast, {procedure}: {ibc}, {grade}, tumor size {size} mm, {receptor}.",
      "{side} breast, {procedure}: residual {ibc} following neoadjuvant therapy, {extra}.",
  };
  s.slot_fills["side"] = {{"LEFT", 1.0}, {"RIGHT", 1.0}, {"Left", 0.5}, {"Right", 0.5}, {"bilateral", 0.1}};
  s.slot_fills["procedure"] = Uniform({"core needle biopsy", "ultrasound guided core biopsy", "stereotactic core biopsy",
                                       "excisional biopsy", "lumpectomy", "partial mastectomy",
                                       "wire-directed segmental mastectomy", "total mastectomy", "re-excision",
                                       "reduction mammoplasty", "vacuum assisted biopsy", "mri guided biopsy"});
  s.slot_fills["location"] = Uniform({"upper outer quadrant", "upper inner quadrant", "lower outer quadrant",
                                      "lower inner quadrant", "retroareolar", "subareolar", "central", "axillary tail",
                                      "12 o'clock", "3:00", "10 cm from nipple"});
  s.slot_fills["ibc"] = {{"invasive ductal carcinoma", 4.0},
                         {"invasive lobular carcinoma", 2.0},
                         {"invasive mammary carcinoma with ductal and lobular features", 1.0},
                         {"invasive micropapillary carcinoma", 0.5},
                         {"tubular carcinoma", 0.5},
                         {"mucinous carcinoma", 0.5},
                         {"medullary carcinoma", 0.3},
                         {"metaplastic carcinoma", 0.3},
                         {"apocrine carcinoma", 0.2}};
  s.slot_fills["grade"] = Uniform({"nottingham grade 1", "nottingham grade 2", "nottingham grade 3",
                                   "well differentiated", "moderately differentiated", "poorly differentiated",
                                   "nottingham score 7/9"});
  s.slot_fills["isc"] = {{"ductal carcinoma in situ, solid type", 2.0},
                         {"ductal carcinoma in situ, cribriform type", 2.0},
                         {"ductal carcinoma in situ with comedo necrosis", 1.5},
                         {"lobular carcinoma in situ, pleomorphic type", 0.7},
                         {"intracystic papillary carcinoma", 0.3},
                         {"intraductal papillary carcinoma", 0.3},
                         {"paget disease of the nipple", 0.2}};
  s.slot_fills["dcis_grade"] = Uniform({"low nuclear grade", "intermediate nuclear grade", "high nuclear grade"});
  s.slot_fills["hrl"] = Uniform({"atypical ductal hyperplasia", "atypical lobular hyperplasia",
                                 "flat epithelial atypia", "radial scar", "intraductal papilloma",
                                 "atypical papilloma", "columnar cell change with atypia", "atypical phyllodes tumor",
                                 "complex sclerosing lesion"});
  s.slot_fills["benign"] = Uniform(
      {"fibroadenoma", "fibrocystic changes", "usual ductal hyperplasia", "apocrine metaplasia", "sclerosing adenosis",
       "fat necrosis", "pseudoangiomatous stromal hyperplasia", "columnar cell change without atypia",
       "biopsy site changes", "duct ectasia", "simple cyst", "hamartoma", "granular cell tumor", "lactational change",
       "fibroadenomatoid change", "stromal fibrosis", "benign phyllodes tumor", "mucocele-like lesion", "seroma",
       "hemangioma"});
  s.slot_fills["negative"] = Uniform({"negative for malignancy", "no evidence of malignancy",
                                      "negative for atypia and malignancy", "no diagnostic abnormality"});
  s.slot_fills["extra"] = Uniform({"with associated calcifications", "margins are free of tumor",
                                   "lymphovascular invasion not identified", "lymphovascular invasion present",
                                   "microcalcifications identified in benign ducts", "see comment",
                                   "surgical margins uninvolved", "closest margin 2 mm (anterior)",
                                   "tumor involves the inked posterior margin", "calcifications present"});
  s.slot_fills["node_procedure"] = Uniform({"sentinel lymph node biopsy", "excision", "fine needle aspiration"});
  s.slot_fills["node_result"] = {{"negative for malignancy", 3.0},
                                 {"metastatic ductal carcinoma, invasive ductal carcinoma type, 4 mm", 1.0},
                                 {"reactive lymphoid hyperplasia", 1.0},
                                 {"metastatic melanoma", 0.3},
                                 {"follicular lymphoma", 0.3}};
  s.slot_fills["organ"] = Uniform({"stomach", "colon", "skin", "lung", "liver", "ovary", "bone marrow", "thyroid",
                                   "chest wall"});
  s.slot_fills["nb_procedure"] = Uniform({"biopsy", "endoscopic biopsy", "punch biopsy", "resection",
                                          "needle core biopsy"});
  s.slot_fills["nbc"] = Uniform({"metastatic melanoma", "diffuse large b-cell lymphoma", "follicular lymphoma",
                                 "metastatic adenocarcinoma of pulmonary origin", "colonic adenocarcinoma",
                                 "metastatic serous carcinoma of ovarian origin", "angiosarcoma",
                                 "malignant phyllodes tumor", "squamous cell carcinoma", "papillary thyroid carcinoma"});
  s.slot_fills["nb_extra"] = Uniform({"immunostains support the diagnosis", "see comment", "ck7 positive, ck20 negative",
                                      "ttf-1 positive", "clinical correlation recommended",
                                      "deep margin involved"});
  s.slot_fills["nb_benign"] = Uniform({"chronic gastritis", "tubular adenoma", "hyperplastic polyp",
                                       "reactive lymphoid hyperplasia", "seborrheic keratosis",
                                       "benign follicular nodule"});
  s.slot_fills["size"] = Uniform({"12", "7", "23", "1.5", "0.8", "31"});
  s.slot_fills["receptor"] = Uniform({"estrogen receptor positive, progesterone receptor positive, her2 negative",
                                      "estrogen receptor negative, her2 positive (3+)", "triple negative phenotype",
                                      "ki-67 proliferation index 20%", "her2 equivocal by ihc, fish pending"});
  s.label_rules = {
      {"invasive breast cancer",
       {"invasive ductal carcinoma", "invasive lobular carcinoma", "invasive mammary carcinoma",
        "invasive micropapillary carcinoma", "tubular carcinoma", "mucinous carcinoma", "medullary carcinoma",
        "metaplastic carcinoma", "apocrine carcinoma", "metastatic ductal carcinoma"}},
      {"in situ breast cancer",
       {"ductal carcinoma in situ", "lobular carcinoma in situ", "intracystic papillary carcinoma",
        "intraductal papillary carcinoma", "paget disease"}},
      {"high risk lesion",
       {"atypical ductal hyperplasia", "atypical lobular hyperplasia", "flat epithelial atypia", "radial scar",
        "intraductal papilloma", "atypical papilloma", "columnar cell change with atypia", "atypical phyllodes",
        "complex sclerosing lesion"}},
      {"non-breast cancer",
       {"melanoma", "lymphoma", "adenocarcinoma", "serous carcinoma", "angiosarcoma", "malignant phyllodes",
        "squamous cell carcinoma", "papillary thyroid carcinoma"}},
      {"benign",
       {"fibroadenoma", "fibrocystic changes", "usual ductal hyperplasia", "apocrine metaplasia", "sclerosing adenosis",
        "fat necrosis", "pseudoangiomatous stromal hyperplasia", "columnar cell change without atypia",
        "biopsy site changes", "duct ectasia", "simple cyst", "hamartoma", "granular cell tumor",
        "lactational change", "fibroadenomatoid change", "stromal fibrosis", "benign phyllodes", "mucocele-like lesion",
        "seroma", "hemangioma", "chronic gastritis", "tubular adenoma", "hyperplastic polyp",
        "reactive lymphoid hyperplasia", "seborrheic keratosis", "benign follicular nodule"}},
      {"negative",
       {"negative for malignancy", "no evidence of malignancy", "negative for atypia and malignancy",
        "no diagnostic abnormality"}},
  };
  s.history = {"abnormal mammogram", "palpable mass", "screening detected calcifications", "history of breast cancer",
               "BI-RADS 4 lesion", "nipple discharge", "Dr. Smith requests evaluation", "MRI enhancement"};
  return s;
}

TemplateSpec deterministic_template_spec(int n_reports, std::uint64_t seed) {
  // Word counts 4 through 23, one template per count. The last word of each
  // template is a slot with a single fill.
  static const char* const kLines[] = {
      "apocrine metaplasia without {t0}",
      "right breast excision fat {t1}",
      "left breast core biopsy sclerosing {t2}",
      "stomach biopsy chronic gastritis with regenerative {t3}",
      "right breast lumpectomy invasive lobular carcinoma classic {t4}",
      "left breast stereotactic biopsy flat epithelial atypia with {t5}",
      "axillary lymph node excision metastatic melanoma involving one of {t6}",
      "right breast core needle biopsy ductal carcinoma in situ solid {t7}",
      "left breast wire segmental mastectomy atypical ductal hyperplasia and columnar cell {t8}",
      "right breast guided biopsy invasive ductal carcinoma nottingham grade three with lobular {t9}",
      "left breast partial mastectomy usual ductal hyperplasia apocrine metaplasia and cysts with associated {t10}",
      "colon biopsy tubular adenoma with low grade dysplasia negative for high grade dysplasia and {t11}",
      "right breast reduction mammoplasty benign breast tissue with fibrocystic changes and duct ectasia negative for "
      "{t12}",
      "left breast vacuum assisted biopsy intraductal papilloma with usual ductal hyperplasia and sclerosing adenosis "
      "no atypia {t13}",
      "right breast mastectomy residual invasive ductal carcinoma following neoadjuvant therapy with treatment effect "
      "margins are free of {t14}",
      "left breast excisional biopsy pseudoangiomatous stromal hyperplasia nodular mass with adjacent fibroadenoma and "
      "apocrine metaplasia no atypia is {t15}",
      "right breast core needle biopsy ductal carcinoma in situ cribriform and micropapillary types intermediate "
      "nuclear grade with necrosis and {t16}",
      "skin excision superficial spreading melanoma invasive to papillary dermis with regression peripheral and deep "
      "margins are negative for melanoma in {t17}",
      "left breast lumpectomy invasive mammary carcinoma with ductal and lobular features nottingham grade two "
      "lymphovascular invasion not identified margins negative for {t18}",
      "right breast wire localized excision benign breast tissue with biopsy site changes fat necrosis and foreign "
      "body reaction no residual atypical ductal {t19}",
  };
  static const char* const kLast[] = {
      "atypia", "necrosis", "adenosis", "changes", "type", "calcifications", "three", "type", "change", "pattern",
      "calcifications", "malignancy", "malignancy", "identified", "tumor", "seen", "microcalcifications", "situ",
      "carcinoma", "hyperplasia",
  };
  TemplateSpec s;
  s.n_reports = n_reports;
  s.seed = seed;
  for (std::size_t i = 0; i < std::size(kLines); ++i) {
    s.templates.emplace_back(kLines[i]);
    s.slot_fills["t" + std::to_string(i)] = {{kLast[i], 1.0}};
  }
  s.label_rules = default_template_spec(0, seed).label_rules;
  return s;
}

// --- JSON ------------------------------------------------------------------------

TemplateSpec template_spec_from_json(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("template spec is not valid JSON: ") + e.what());
  }
  TemplateSpec s;
  try {
    s.templates = j.at("templates").get<std::vector<std::string>>();
    if (j.contains("slot_fills")) {
      for (const auto& [slot, fills] : j["slot_fills"].items()) {
        auto& out = s.slot_fills[slot];
        for (const auto& f : fills) {
          if (f.is_string()) {
            out.push_back({f.get<std::string>(), 1.0});
          } else {
            out.push_back({f.at("text").get<std::string>(), f.value("weight", 1.0)});
          }
        }
      }
    }
    if (j.contains("label_rules")) {
      for (const auto& [label, triggers] : j["label_rules"].items()) {
        s.label_rules.emplace_back(label, triggers.get<std::vector<std::string>>());
      }
    }
    s.history = j.value("history", std::vector<std::string>{});
    s.n_reports = j.value("n_reports", s.n_reports);
    s.seed = j.value("seed", s.seed);
    s.first_year = j.value("first_year", s.first_year);
    s.n_years = j.value("n_years", s.n_years);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed template spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string template_spec_to_json(const TemplateSpec& spec) {
  nlohmann::ordered_json j;
  j["templates"] = spec.templates;
  nlohmann::ordered_json fills = nlohmann::ordered_json::object();
  for (const auto& [slot, list] : spec.slot_fills) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& f : list) arr.push_back({{"text", f.text}, {"weight", f.weight}});
    fills[slot] = std::move(arr);
  }
  j["slot_fills"] = std::move(fills);
  nlohmann::ordered_json rules = nlohmann::ordered_json::object();
  for (const auto& [label, triggers] : spec.label_rules) rules[label] = triggers;
  j["label_rules"] = std::move(rules);
  j["history"] = spec.history;
  j["n_reports"] = spec.n_reports;
  j["seed"] = spec.seed;
  j["first_year"] = spec.first_year;
  j["n_years"] = spec.n_years;
  return j.dump(2) + "\n";
}

}  // namespace pathlm
