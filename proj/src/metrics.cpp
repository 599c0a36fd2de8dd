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

#include "slt/metrics.hpp"

#include <cmath>
#include <map>

namespace slt::metrics {

namespace {

void check_corpus(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size()) {
    throw CorpusError("corpus size mismatch: " + std::to_string(hyps.size()) + " hypotheses, " +
                      std::to_string(refs.size()) + " references");
  }
  if (hyps.empty()) throw UndefinedError("metric is undefined on an empty corpus");
}

std::map<Tokens, std::size_t> ngram_counts(const Tokens& s, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Tokens(s.begin() + i, s.begin() + i + n)];
  return counts;
}

}  // namespace

double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int n) {
  check_corpus(hyps, refs);
  if (n < 1 || n > 4) throw ArgumentError("BLEU order must be in 1..4, got " + std::to_string(n));
  std::size_t hyp_len = 0, ref_len = 0;
  std::vector<std::size_t> matched(n, 0), total(n, 0);
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += hyps[s].size();
    ref_len += refs[s].size();
    for (int k = 1; k <= n; ++k) {
      const auto h = ngram_counts(hyps[s], k);
      const auto r = ngram_counts(refs[s], k);
      for (const auto& [gram, count] : h) {
        total[k - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matched[k - 1] += std::min(count, it->second);
      }
    }
  }
  // Orders with no hypothesis n-gram at all (every sentence shorter than k)
  // carry no evidence either way and are left out of the geometric mean.
  double log_precision = 0.0;
  int orders = 0;
  for (int k = 0; k < n; ++k) {
    if (total[k] == 0) continue;
    if (matched[k] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matched[k]) / static_cast<double>(total[k]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double brevity =
      hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * brevity * std::exp(log_precision / orders);
}

std::array<double, 4> bleu_1_to_4(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  return {bleu(hyps, refs, 1), bleu(hyps, refs, 2), bleu(hyps, refs, 3), bleu(hyps, refs, 4)};
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  check_corpus(hyps, refs);
  double sum = 0.0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& h = hyps[s];
    const auto& r = refs[s];
    if (h.empty() && r.empty()) {
      sum += 1.0;
      continue;
    }
    const std::size_t lcs = lcs_length(h, r);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / static_cast<double>(h.size());
    const double rec = static_cast<double>(lcs) / static_cast<double>(r.size());
    sum += 2.0 * p * rec / (p + rec);
  }
  return 100.0 * sum / static_cast<double>(hyps.size());
}

// ---------------------------------------------------------------------------

std::string to_string(Task task) {
  switch (task) {
    case Task::sign2gloss: return "sign2gloss";
    case Task::gloss2text: return "gloss2text";
    case Task::sign2gloss2text: return "sign2gloss2text";
    case Task::sign2text: return "sign2text";
  }
  return "unknown";
}

Task task_from_string(const std::string& name) {
  for (auto t : {Task::sign2gloss, Task::gloss2text, Task::sign2gloss2text, Task::sign2text}) {
    if (to_string(t) == name) return t;
  }
  throw ArgumentError("unknown task '" + name + "'; valid tasks: sign2gloss, gloss2text, sign2gloss2text, sign2text");
}

void EvalReport::validate() const {
  const bool gloss = task == Task::sign2gloss;
  if (gloss != wer.has_value()) throw EvaluationError("report field 'wer' must be present only for sign2gloss");
  if (gloss == bleu.has_value() || gloss == rouge.has_value()) {
    throw EvaluationError("report fields 'bleu' and 'rouge' must be present only for text tasks");
  }
  if (split != "dev" && split != "test") throw EvaluationError("report split must be dev or test");
}

nlohmann::ordered_json EvalReport::to_json() const {
  validate();
  nlohmann::ordered_json j;
  j["task"] = to_string(task);
  j["split"] = split;
  j["n_samples"] = n_samples;
  if (wer) j["wer"] = *wer;
  if (bleu) j["bleu"] = *bleu;
  if (rouge) {
    j["rouge"] = *rouge;
    j["rouge_variant"] = "rouge_l_f1";
  }
  nlohmann::ordered_json dec = nlohmann::ordered_json::object();
  if (decoding.beam_width) dec["beam_width"] = *decoding.beam_width;
  if (decoding.length_penalty) dec["length_penalty"] = *decoding.length_penalty;
  if (decoding.ctc_beam_width) dec["ctc_beam_width"] = *decoding.ctc_beam_width;
  if (decoding.ctc_beam_width_source) dec["ctc_beam_width_source"] = *decoding.ctc_beam_width_source;
  j["decoding"] = dec;
  j["skipped"] = skipped;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.task = task_from_string(j.at("task").get<std::string>());
    r.split = j.at("split").get<std::string>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("wer")) r.wer = j["wer"].get<double>();
    if (j.contains("bleu")) r.bleu = j["bleu"].get<std::array<double, 4>>();
    if (j.contains("rouge")) r.rouge = j["rouge"].get<double>();
    if (j.contains("decoding")) {
      const auto& d = j["decoding"];
      if (d.contains("beam_width")) r.decoding.beam_width = d["beam_width"].get<int>();
      if (d.contains("length_penalty")) r.decoding.length_penalty = d["length_penalty"].get<double>();
      if (d.contains("ctc_beam_width")) r.decoding.ctc_beam_width = d["ctc_beam_width"].get<int>();
      if (d.contains("ctc_beam_width_source")) {
        r.decoding.ctc_beam_width_source = d["ctc_beam_width_source"].get<std::string>();
      }
    }
    if (j.contains("skipped")) r.skipped = j["skipped"].get<std::size_t>();
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed evaluation report: ") + e.what());
  }
}

}  // namespace slt::metrics
