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

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pathlm/encoder.hpp"
#include "pathlm/wordpiece.hpp"

namespace pathlm::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::int64_t n_checked = 0;
};

// Relative error with a floor on the denominator so entries whose true
// gradient is numerically zero are judged on absolute error.
inline double RelError(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of `loss(weights)` at every entry of every tensor.
template <typename LossFn>
GradCheckResult CheckGradients(ModelWeights<double> weights, const ModelWeights<double>& analytic, LossFn loss,
                               double step) {
  GradCheckResult out;
  ModelWeights<double> numeric = ModelWeights<double>::zeros(weights.config);
  for_each_tensor(
      [&](const std::string&, auto& w, auto& n) {
        for (Eigen::Index i = 0; i < w.size(); ++i) {
          const double saved = w.data()[i];
          w.data()[i] = saved + step;
          const double up = loss(weights);
          w.data()[i] = saved - step;
          const double down = loss(weights);
          w.data()[i] = saved;
          n.data()[i] = (up - down) / (2.0 * step);
        }
      },
      weights, numeric);
  for_each_tensor(
      [&](const std::string& name, const auto& a, const auto& n) {
        for (Eigen::Index i = 0; i < a.size(); ++i) {
          const double e = RelError(a.data()[i], n.data()[i]);
          ++out.n_checked;
          if (e > out.max_rel_error) {
            out.max_rel_error = e;
            out.worst_tensor = name;
          }
        }
      },
      analytic, numeric);
  return out;
}

struct BruteMetrics {
  std::vector<double> precision, recall, f1;
  std::vector<std::int64_t> support;
  double micro_p = 0, micro_r = 0, micro_f1 = 0, accuracy = 0;
};

// Per-label confusion matrices built by literal set membership.
inline BruteMetrics BruteForceMetrics(const std::vector<std::vector<std::string>>& pred,
                                      const std::vector<std::vector<std::string>>& truth,
                                      const std::vector<std::string>& labels) {
  BruteMetrics m;
  long double TP = 0, FP = 0, FN = 0;
  std::int64_t exact = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::set<std::string> p(pred[i].begin(), pred[i].end()), t(truth[i].begin(), truth[i].end());
    exact += p == t;
  }
  for (const auto& label : labels) {
    long double tp = 0, fp = 0, fn = 0;
    std::int64_t support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = std::count(pred[i].begin(), pred[i].end(), label) > 0;
      const bool t = std::count(truth[i].begin(), truth[i].end(), label) > 0;
      if (p && t) tp += 1;
      if (p && !t) fp += 1;
      if (!p && t) fn += 1;
      support += t;
    }
    const long double prec = tp + fp > 0 ? tp / (tp + fp) : 0;
    const long double rec = tp + fn > 0 ? tp / (tp + fn) : 0;
    m.precision.push_back(static_cast<double>(prec));
    m.recall.push_back(static_cast<double>(rec));
    m.f1.push_back(prec + rec > 0 ? static_cast<double>(2 * prec * rec / (prec + rec)) : 0.0);
    m.support.push_back(support);
    TP += tp;
    FP += fp;
    FN += fn;
  }
  const long double mp = TP + FP > 0 ? TP / (TP + FP) : 0, mr = TP + FN > 0 ? TP / (TP + FN) : 0;
  m.micro_p = static_cast<double>(mp);
  m.micro_r = static_cast<double>(mr);
  m.micro_f1 = mp + mr > 0 ? static_cast<double>(2 * mp * mr / (mp + mr)) : 0.0;
  m.accuracy = static_cast<double>(exact) / static_cast<double>(truth.size());
  return m;
}

// Checks that every emitted piece is the longest vocabulary match at its
// position: no longer prefix of the remaining word (with "##" after the
// first piece) is in the vocabulary. Returns the first offending word, or "".
inline std::string FirstNonMaximalWord(const TokenSequence& seq, const Vocabulary& vocab) {
  for (const auto& [begin, end] : seq.word_boundaries) {
    if (end - begin == 1 && seq.ids[begin] == vocab.unk_id()) continue;
    std::vector<std::string> chars;
    std::vector<std::size_t> piece_chars;
    for (std::size_t p = begin; p < end; ++p) {
      std::string body = seq.pieces[p];
      if (p > begin) body = body.substr(kContinuationPrefix.size());
      const auto cs = utf8_chars(body);
      chars.insert(chars.end(), cs.begin(), cs.end());
      piece_chars.push_back(cs.size());
    }
    std::size_t start = 0;
    for (std::size_t k = 0; k < piece_chars.size(); ++k) {
      std::string candidate = k == 0 ? "" : std::string(kContinuationPrefix);
      for (std::size_t c = start; c < start + piece_chars[k]; ++c) candidate += chars[c];
      for (std::size_t c = start + piece_chars[k]; c < chars.size(); ++c) {
        candidate += chars[c];
        if (vocab.contains(candidate)) {
          std::string word;
          for (const auto& ch : chars) word += ch;
          return word;
        }
      }
      start += piece_chars[k];
    }
  }
  return "";
}

}  // namespace pathlm::testing
