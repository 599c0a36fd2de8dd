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

#include "slt/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "slt/error.hpp"

namespace slt::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

void check_target(std::span<const int> target, std::size_t classes) {
  for (int id : target) {
    if (id <= kBlank || static_cast<std::size_t>(id) >= classes) {
      throw VocabularyError("target gloss id " + std::to_string(id) + " outside 1.." +
                            std::to_string(classes - 1));
    }
  }
}

// Log-space alpha/beta over the blank-interleaved target b l1 b l2 ... b.
struct Lattice {
  std::size_t frames = 0, states = 0;
  std::vector<int> ext;
  std::vector<double> alpha, beta;  // frames x states; beta excludes emission at t
  double log_likelihood = kNegInf;
};

std::vector<int> extend(std::span<const int> target) {
  std::vector<int> ext(2 * target.size() + 1, kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  return ext;
}

bool can_skip(const std::vector<int>& ext, std::size_t s) {
  return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
}

Lattice run_lattice(std::span<const double> logp, std::size_t frames, std::size_t classes,
                    std::span<const int> target, bool with_beta) {
  Lattice lat;
  lat.frames = frames;
  lat.ext = extend(target);
  const std::size_t S = lat.ext.size();
  lat.states = S;
  if (frames == 0) {
    lat.log_likelihood = target.empty() ? 0.0 : kNegInf;
    return lat;
  }
  auto lp = [&](std::size_t t, std::size_t s) { return logp[t * classes + lat.ext[s]]; };
  lat.alpha.assign(frames * S, kNegInf);
  lat.alpha[0] = lp(0, 0);
  if (S > 1) lat.alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    const double* prev = lat.alpha.data() + (t - 1) * S;
    double* cur = lat.alpha.data() + t * S;
    for (std::size_t s = 0; s < S; ++s) {
      double a = prev[s];
      if (s >= 1) a = log_add(a, prev[s - 1]);
      if (can_skip(lat.ext, s)) a = log_add(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + lp(t, s);
    }
  }
  const double* last = lat.alpha.data() + (frames - 1) * S;
  lat.log_likelihood = S > 1 ? log_add(last[S - 1], last[S - 2]) : last[0];

  if (with_beta) {
    lat.beta.assign(frames * S, kNegInf);
    double* end = lat.beta.data() + (frames - 1) * S;
    end[S - 1] = 0.0;
    if (S > 1) end[S - 2] = 0.0;
    for (std::size_t t = frames - 1; t-- > 0;) {
      const double* next = lat.beta.data() + (t + 1) * S;
      double* cur = lat.beta.data() + t * S;
      for (std::size_t s = 0; s < S; ++s) {
        double b = next[s] == kNegInf ? kNegInf : next[s] + lp(t + 1, s);
        if (s + 1 < S && next[s + 1] != kNegInf) b = log_add(b, next[s + 1] + lp(t + 1, s + 1));
        if (s + 2 < S && can_skip(lat.ext, s + 2) && next[s + 2] != kNegInf) {
          b = log_add(b, next[s + 2] + lp(t + 1, s + 2));
        }
        cur[s] = b;
      }
    }
  }
  return lat;
}

std::vector<double> log_softmax_rows(std::span<const double> logits, std::size_t frames,
                                     std::size_t classes) {
  std::vector<double> out(frames * classes);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* row = logits.data() + t * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) out[t * classes + c] = row[c] - lse;
  }
  return out;
}

// Writes softmax - posterior into `grad` (frames x classes); returns the loss.
double gradient_into(std::span<const double> logp, std::size_t frames, std::size_t classes,
                     std::span<const int> target, std::span<double> grad) {
  Lattice lat = run_lattice(logp, frames, classes, target, true);
  if (lat.log_likelihood == kNegInf) {
    throw InfeasibleError("no CTC alignment of " + std::to_string(target.size()) +
                          " glosses fits " + std::to_string(frames) + " frames");
  }
  const std::size_t S = lat.states;
  std::vector<double> occ(classes);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(occ.begin(), occ.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const double a = lat.alpha[t * S + s], b = lat.beta[t * S + s];
      if (a == kNegInf || b == kNegInf) continue;
      occ[lat.ext[s]] = log_add(occ[lat.ext[s]], a + b);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const double post = occ[c] == kNegInf ? 0.0 : std::exp(occ[c] - lat.log_likelihood);
      grad[t * classes + c] = std::exp(logp[t * classes + c]) - post;
    }
  }
  return -lat.log_likelihood;
}

}  // namespace

// ---------------------------------------------------------------------------

GlossVocab::GlossVocab(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty()) throw VocabularyError("empty gloss label");
    if (!ids_.emplace(labels_[i], static_cast<int>(i) + 1).second) {
      throw VocabularyError("duplicate gloss label: " + labels_[i]);
    }
  }
}

const std::string& GlossVocab::label(int id) const {
  if (id < 1 || id > size()) throw VocabularyError("gloss id " + std::to_string(id) + " not in vocabulary");
  return labels_[static_cast<std::size_t>(id) - 1];
}

int GlossVocab::id(const std::string& label) const {
  auto it = ids_.find(label);
  if (it == ids_.end()) throw VocabularyError("unknown gloss: " + label);
  return it->second;
}

GlossSequence GlossVocab::encode(const std::string& space_separated) const {
  GlossSequence out;
  std::istringstream in(space_separated);
  std::string tok;
  while (in >> tok) out.push_back(id(tok));
  return out;
}

std::string GlossVocab::decode(std::span<const int> seq) const {
  std::string out;
  for (int id : seq) {
    if (!out.empty()) out += ' ';
    out += label(id);
  }
  return out;
}

GlossPosterior::GlossPosterior(num::Tensor probs) : probs_(std::move(probs)) {
  if (probs_.rank() != 2 || probs_.dim(1) < 1) {
    throw DimensionError("gloss posterior must be T' x (K+1), got " + num::shape_string(probs_.shape()));
  }
  const std::size_t n = probs_.dim(1);
  for (std::size_t t = 0; t < probs_.dim(0); ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double p = probs_.at(t, c);
      if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("posterior entry outside [0,1]");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ArgumentError("posterior row " + std::to_string(t) + " does not sum to 1");
  }
}

GlossPosterior GlossPosterior::from_logits(const num::Tensor& logits) {
  num::NoGradGuard guard;
  return GlossPosterior(num::softmax(logits).detach());
}

GlossSequence collapse(std::span<const int> path) {
  GlossSequence out;
  int prev = -1;
  for (int label : path) {
    if (label != prev && label != kBlank) out.push_back(label);
    prev = label;
  }
  return out;
}

bool ctc_feasible(std::size_t frames, std::span<const int> target) {
  std::size_t need = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) need += target[i] == target[i - 1] ? 1 : 0;
  return need <= frames;
}

double ctc_forward(const GlossPosterior& post, std::span<const int> target) {
  check_target(target, post.classes());
  const std::size_t T = post.frames(), C = post.classes();
  std::vector<double> logp(T * C);
  for (std::size_t i = 0; i < logp.size(); ++i) logp[i] = std::log(post.probs().at(i));
  const double ll = run_lattice(logp, T, C, target, false).log_likelihood;
  return ll == kNegInf ? std::numeric_limits<double>::infinity() : -ll;
}

num::Tensor ctc_gradient(const num::Tensor& logits, std::span<const int> target) {
  if (logits.rank() != 2) throw RankError("ctc_gradient expects T' x (K+1) logits");
  const std::size_t T = logits.dim(0), C = logits.dim(1);
  check_target(target, C);
  for (double v : logits.values()) {
    if (!std::isfinite(v)) throw ArgumentError("ctc_gradient: non-finite logit");
  }
  auto logp = log_softmax_rows(logits.values(), T, C);
  std::vector<double> grad(T * C);
  gradient_into(logp, T, C, target, grad);
  return num::Tensor({T, C}, std::move(grad));
}

num::Tensor ctc_loss(const num::Tensor& logits, std::span<const std::size_t> lengths,
                     const std::vector<GlossSequence>& targets) {
  if (logits.rank() != 2) throw RankError("ctc_loss expects packed (sum T') x (K+1) logits");
  if (lengths.size() != targets.size() || targets.empty()) {
    throw DimensionError("ctc_loss: " + std::to_string(lengths.size()) + " sequences, " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t C = logits.dim(1);
  std::size_t total = 0;
  for (auto l : lengths) total += l;
  if (total != logits.dim(0)) throw DimensionError("ctc_loss: lengths do not cover the logits");

  auto logp = log_softmax_rows(logits.values(), logits.dim(0), C);
  auto grad = std::make_shared<std::vector<double>>(logits.size());
  double loss = 0.0;
  std::size_t off = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    check_target(targets[i], C);
    const std::size_t n = lengths[i] * C;
    loss += gradient_into(std::span<const double>(logp).subspan(off, n), lengths[i], C, targets[i],
                          std::span<double>(*grad).subspan(off, n));
    off += n;
  }
  const double inv = 1.0 / static_cast<double>(lengths.size());
  return num::make_op({}, {loss * inv}, {logits}, [logits, grad, inv](std::span<const double> g) {
    auto acc = logits.grad_accumulator();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[0] * inv * (*grad)[i];
  });
}

// ---------------------------------------------------------------------------

GlossSequence ctc_greedy_decode(const GlossPosterior& post) {
  std::vector<int> path(post.frames());
  for (std::size_t t = 0; t < post.frames(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < post.classes(); ++c) {
      if (post.prob(t, c) > post.prob(t, best)) best = c;
    }
    path[t] = static_cast<int>(best);
  }
  return collapse(path);
}

BeamResult ctc_beam_search(const GlossPosterior& post, int width) {
  if (width < 1) throw ArgumentError("beam width must be >= 1, got " + std::to_string(width));
  struct Mass {
    double blank = kNegInf;
    double label = kNegInf;
    double total() const { return log_add(blank, label); }
  };
  const std::size_t C = post.classes();
  std::map<GlossSequence, Mass> beam;
  beam[{}] = {0.0, kNegInf};

  std::vector<double> lp(C);
  for (std::size_t t = 0; t < post.frames(); ++t) {
    for (std::size_t c = 0; c < C; ++c) lp[c] = std::log(post.prob(t, c));
    std::map<GlossSequence, Mass> next;
    for (const auto& [prefix, mass] : beam) {
      const double total = mass.total();
      auto& stay = next[prefix];
      stay.blank = log_add(stay.blank, total + lp[kBlank]);
      if (!prefix.empty()) {
        stay.label = log_add(stay.label, mass.label + lp[static_cast<std::size_t>(prefix.back())]);
      }
      for (std::size_t c = 1; c < C; ++c) {
        if (lp[c] == kNegInf) continue;
        GlossSequence grown = prefix;
        grown.push_back(static_cast<int>(c));
        auto& entry = next[grown];
        // A repeated label only extends through an intervening blank.
        const double from = (!prefix.empty() && prefix.back() == static_cast<int>(c)) ? mass.blank : total;
        entry.label = log_add(entry.label, from + lp[c]);
      }
    }
    std::vector<std::pair<GlossSequence, Mass>> ranked(next.begin(), next.end());
    // std::map order is lexicographic, so a stable sort breaks ties toward the
    // lexicographically smaller sequence.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
    if (ranked.size() > static_cast<std::size_t>(width)) ranked.resize(static_cast<std::size_t>(width));
    beam = std::map<GlossSequence, Mass>(ranked.begin(), ranked.end());
  }

  BeamResult best{{}, kNegInf};
  bool first = true;
  for (const auto& [prefix, mass] : beam) {
    if (first || mass.total() > best.log_prob) {
      best = {prefix, mass.total()};
      first = false;
    }
  }
  return best;
}

GlossSequence ctc_beam_decode(const GlossPosterior& post, int width) {
  return ctc_beam_search(post, width).sequence;
}

OracleResult ctc_brute_force_oracle(const GlossPosterior& post) {
  const std::size_t T = post.frames(), C = post.classes();
  if (T > kOracleMaxFrames || C - 1 > kOracleMaxGlosses) {
    throw ArgumentError("brute-force oracle limited to T' <= 8 and K <= 4 (got T'=" + std::to_string(T) +
                        ", K=" + std::to_string(C - 1) + ")");
  }
  OracleResult result;
  std::vector<int> path(T, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t t = 0; t < T; ++t) p *= post.prob(t, static_cast<std::size_t>(path[t]));
    result.marginals[collapse(path)] += p;
    result.total_mass += p;
    std::size_t t = 0;
    while (t < T && path[t] == static_cast<int>(C) - 1) path[t++] = 0;
    if (t == T) break;
    ++path[t];
  }
  bool first = true;
  for (const auto& [seq, p] : result.marginals) {
    if (first || p > result.probability) {
      result.best = seq;
      result.probability = p;
      first = false;
    }
  }
  return result;
}

}  // namespace slt::ctc
