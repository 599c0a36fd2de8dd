/* Copyright 2026 The SLT Baseline Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "slt/error.hpp"

namespace slt::metrics {

using Tokens = std::vector<std::string>;

struct EditOps {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t total() const { return substitutions + deletions + insertions; }
};

/// Levenshtein alignment of `hyp` against `ref`. Among minimum-cost
/// alignments the backtrace prefers match/substitution, then deletion, then
/// insertion, so the split into operation kinds is deterministic.
template <typename T>
EditOps edit_ops(const std::vector<T>& hyp, const std::vector<T>& ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditOps ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++ops.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

/// Sentence WER, may exceed 1. Throws UndefinedError for an empty reference.
template <typename T>
double wer(const std::vector<T>& hyp, const std::vector<T>& ref) {
  if (ref.empty()) throw UndefinedError("WER is undefined for an empty reference");
  return static_cast<double>(edit_ops(hyp, ref).total()) / static_cast<double>(ref.size());
}

/// Corpus WER: summed edit operations over summed reference lengths.
template <typename T>
double corpus_wer(const std::vector<std::vector<T>>& hyps, const std::vector<std::vector<T>>& refs) {
  if (hyps.size() != refs.size()) {
    throw CorpusError("corpus size mismatch: " + std::to_string(hyps.size()) + " hypotheses, " +
                      std::to_string(refs.size()) + " references");
  }
  std::size_t errors = 0, words = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    errors += edit_ops(hyps[i], refs[i]).total();
    words += refs[i].size();
  }
  if (words == 0) throw UndefinedError("corpus WER is undefined for an empty reference corpus");
  return static_cast<double>(errors) / static_cast<double>(words);
}

/// Corpus BLEU-n in [0, 100]: clipped n-gram precisions pooled over the
/// corpus, geometric mean with uniform weights, brevity penalty. Unsmoothed:
/// any zero precision gives 0. Orders for which the hypotheses contain no
/// n-gram at all are skipped rather than counted as zero.
double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int n);
std::array<double, 4> bleu_1_to_4(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

/// Mean sentence ROUGE-L F1 (beta = 1) in [0, 100].
double rouge_l(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

// ---------------------------------------------------------------------------

enum class Task { sign2gloss, gloss2text, sign2gloss2text, sign2text };

std::string to_string(Task task);
/// Throws ArgumentError listing the valid names.
Task task_from_string(const std::string& name);

struct DecodingSettings {
  std::optional<int> beam_width;
  std::optional<double> length_penalty;
  std::optional<int> ctc_beam_width;
  std::optional<std::string> ctc_beam_width_source;  // "dev_sweep" or "fixed"
};

struct EvalReport {
  Task task = Task::sign2gloss;
  std::string split = "dev";
  std::size_t n_samples = 0;
  std::optional<double> wer;  // percent
  std::optional<std::array<double, 4>> bleu;
  std::optional<double> rouge;
  DecodingSettings decoding;
  std::size_t skipped = 0;

  /// Checks that wer is present exactly for sign2gloss and bleu/rouge
  /// otherwise.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

}  // namespace slt::metrics
