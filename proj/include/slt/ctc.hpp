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

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "slt/tensor.hpp"

/// Connectionist temporal classification: loss, gradient, decoders and an
/// exhaustive-path oracle. The blank label is always id 0.
namespace slt::ctc {

inline constexpr int kBlank = 0;

using GlossSequence = std::vector<int>;

/// Gloss labels with ids 1..K; id 0 is reserved for the blank.
class GlossVocab {
 public:
  GlossVocab() = default;
  explicit GlossVocab(std::vector<std::string> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  int blank_id() const { return kBlank; }
  const std::string& label(int id) const;
  int id(const std::string& label) const;
  bool contains(const std::string& label) const { return ids_.count(label) > 0; }
  const std::vector<std::string>& labels() const { return labels_; }

  GlossSequence encode(const std::string& space_separated) const;
  std::string decode(std::span<const int> seq) const;

  friend bool operator==(const GlossVocab& a, const GlossVocab& b) { return a.labels_ == b.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> ids_;
};

/// Frame-level distribution over blank + K glosses, shape T' x (K+1).
class GlossPosterior {
 public:
  explicit GlossPosterior(num::Tensor probs);
  static GlossPosterior from_logits(const num::Tensor& logits);

  std::size_t frames() const { return probs_.dim(0); }
  std::size_t classes() const { return probs_.dim(1); }
  double prob(std::size_t t, std::size_t c) const { return probs_.at(t, c); }
  const num::Tensor& probs() const { return probs_; }

 private:
  num::Tensor probs_;
};

/// Merge adjacent repeats, then drop blanks.
GlossSequence collapse(std::span<const int> path);

/// -ln p(target | posterior); +inf when no alignment fits.
double ctc_forward(const GlossPosterior& post, std::span<const int> target);

/// d ctc_forward(softmax(logits), target) / d logits, i.e. softmax minus the
/// per-frame alignment posterior. Throws InfeasibleError if no path exists.
num::Tensor ctc_gradient(const num::Tensor& logits, std::span<const int> target);

/// Mean CTC loss over packed sequences as a differentiable scalar.
/// `lengths` splits the rows of `logits` into per-sample frame blocks.
num::Tensor ctc_loss(const num::Tensor& logits, std::span<const std::size_t> lengths,
                     const std::vector<GlossSequence>& targets);

bool ctc_feasible(std::size_t frames, std::span<const int> target);

GlossSequence ctc_greedy_decode(const GlossPosterior& post);

struct BeamResult {
  GlossSequence sequence;
  double log_prob;  // prefix-merged probability among beam survivors
};

/// Prefix beam search keeping blank / non-blank ending mass per prefix.
BeamResult ctc_beam_search(const GlossPosterior& post, int width);
GlossSequence ctc_beam_decode(const GlossPosterior& post, int width);

struct OracleResult {
  GlossSequence best;
  double probability = 0.0;
  double total_mass = 0.0;
  std::map<GlossSequence, double> marginals;
};

inline constexpr std::size_t kOracleMaxFrames = 8;
inline constexpr std::size_t kOracleMaxGlosses = 4;

/// Enumerates all (K+1)^T' paths. Refuses beyond T' <= 8, K <= 4.
OracleResult ctc_brute_force_oracle(const GlossPosterior& post);

}  // namespace slt::ctc
