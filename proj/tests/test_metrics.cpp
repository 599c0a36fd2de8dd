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

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "slt/metrics.hpp"
#include "support/oracles.hpp"

using namespace slt;
using metrics::Tokens;

using oracle::as_tokens;
using oracle::random_seq;
using oracle::words;

TEST_CASE("WER examples") {
  CHECK(metrics::wer(words("a b c"), words("a b c")) == 0.0);
  CHECK(metrics::wer(words("a x c"), words("a b c")) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(metrics::wer(Tokens{}, words("a b c")) == 1.0);
  auto ops = metrics::edit_ops(Tokens{}, words("a b c"));
  CHECK(ops.deletions == 3);
  ops = metrics::edit_ops(words("a b c d e"), words("a c"));
  CHECK(ops.insertions == 3);
  CHECK(ops.total() == 3);
  CHECK(metrics::wer(words("x y z w"), words("a")) == 4.0);
  CHECK_THROWS_AS(metrics::wer(words("a"), Tokens{}), UndefinedError);

  std::vector<Tokens> hyps{words("a x c"), words("d")};
  std::vector<Tokens> refs{words("a b c"), words("d e")};
  CHECK(metrics::corpus_wer(hyps, refs) == doctest::Approx(2.0 / 5).epsilon(1e-15));
  CHECK_THROWS_AS(metrics::corpus_wer(std::vector<Tokens>{}, std::vector<Tokens>{}), UndefinedError);
  CHECK_THROWS_AS(metrics::corpus_wer(hyps, std::vector<Tokens>{refs[0]}), CorpusError);
}

TEST_CASE("Levenshtein operation counts are symmetric") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    auto a = random_seq(rng, 8, 4);
    auto b = random_seq(rng, 8, 4);
    auto ab = metrics::edit_ops(a, b);
    auto ba = metrics::edit_ops(b, a);
    CHECK(ab.total() == ba.total());
    CHECK(ab.total() == oracle::edit_distance(a, b));
    // Dropped reference tokens one way are inserted ones the other way.
    CHECK(ab.deletions + ab.substitutions + (a.size() - ab.substitutions - ab.insertions) == b.size());
    CHECK(metrics::edit_ops(a, a).total() == 0);
  }
}

TEST_CASE("BLEU examples") {
  std::vector<Tokens> refs{words("the cat sat on the mat"), words("heute regnet es in berlin sehr stark")};
  for (int n = 1; n <= 4; ++n) CHECK(metrics::bleu(refs, refs, n) == doctest::Approx(100.0).epsilon(1e-14));

  std::vector<Tokens> hyp{words("the cat the cat on the mat")};
  std::vector<Tokens> ref{words("the cat sat on the mat")};
  // Frozen from exact rational arithmetic: p1 = 5/7, p2 = 3/6, p3 = 1/5,
  // p4 = 0/4, no brevity penalty.
  const double expected[4] = {71.4285714285714285714, 59.7614304667196819984, 41.4913266683121720500, 0.0};
  for (int n = 1; n <= 4; ++n) {
    INFO("n = " << n);
    CHECK(std::abs(metrics::bleu(hyp, ref, n) - expected[n - 1]) <= 1e-9);
    CHECK(std::abs(metrics::bleu(hyp, ref, n) - oracle::bleu(hyp, ref, n)) <= 1e-9);
  }

  std::vector<Tokens> scrambled{words("the cat sat on a mat")};
  std::vector<Tokens> disjoint4{words("a b c d e")};
  std::vector<Tokens> other4{words("a b c x d e")};
  CHECK(metrics::bleu(disjoint4, other4, 4) == 0.0);
  CHECK(metrics::bleu(scrambled, ref, 4) > 0.0);

  CHECK_THROWS_AS(metrics::bleu(hyp, refs, 4), CorpusError);
  CHECK_THROWS_AS(metrics::bleu({}, {}, 4), UndefinedError);
  CHECK_THROWS_AS(metrics::bleu(hyp, ref, 5), ArgumentError);
}

TEST_CASE("BLEU agrees with the scan-based oracle on random corpora") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Tokens> hyps, refs;
    for (int s = 0; s < 5; ++s) {
      hyps.push_back(as_tokens(random_seq(rng, 9, 5)));
      refs.push_back(as_tokens(random_seq(rng, 9, 5)));
    }
    for (int n = 1; n <= 4; ++n) CHECK(std::abs(metrics::bleu(hyps, refs, n) - oracle::bleu(hyps, refs, n)) <= 1e-9);
  }
}

TEST_CASE("BLEU reaches 100 only on exact matches") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Tokens> refs;
    for (int s = 0; s < 4; ++s) {
      auto seq = random_seq(rng, 7, 6);
      if (seq.empty()) seq.push_back(0);
      refs.push_back(as_tokens(seq));
    }
    auto hyps = refs;
    for (int n = 1; n <= 4; ++n) CHECK(metrics::bleu(hyps, refs, n) == doctest::Approx(100.0).epsilon(1e-14));
    // Perturb one sentence: substitute, drop, or append a token.
    std::uniform_int_distribution<std::size_t> pick(0, hyps.size() - 1);
    auto& h = hyps[pick(rng)];
    switch (trial % 3) {
      case 0: h[0] = "zz"; break;
      case 1: h.pop_back(); break;
      default: h.push_back("zz"); break;
    }
    for (int n = 1; n <= 4; ++n) CHECK(metrics::bleu(hyps, refs, n) < 100.0);
  }
}

TEST_CASE("ROUGE-L examples") {
  std::vector<Tokens> refs{words("the cat sat")};
  CHECK(metrics::rouge_l(refs, refs) == doctest::Approx(100.0));
  CHECK(metrics::rouge_l({words("dog ran")}, refs) == 0.0);
  CHECK(metrics::rouge_l({words("the cat")}, refs) == doctest::Approx(80.0).epsilon(1e-14));
  CHECK(metrics::lcs_length(words("a b c d"), words("b d a c")) == 2);
  CHECK_THROWS_AS(metrics::rouge_l({}, {}), UndefinedError);
}

TEST_CASE("metrics ignore corpus order") {
  std::mt19937_64 rng(9);
  std::vector<Tokens> hyps, refs;
  std::vector<std::vector<int>> ghyps, grefs;
  for (int s = 0; s < 12; ++s) {
    auto r = random_seq(rng, 8, 5);
    r.push_back(1);
    auto h = random_seq(rng, 8, 5);
    grefs.push_back(r);
    ghyps.push_back(h);
    refs.push_back(as_tokens(r));
    hyps.push_back(as_tokens(h));
  }
  std::vector<std::size_t> perm(hyps.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Tokens> ph, pr;
  std::vector<std::vector<int>> pgh, pgr;
  for (auto i : perm) {
    ph.push_back(hyps[i]);
    pr.push_back(refs[i]);
    pgh.push_back(ghyps[i]);
    pgr.push_back(grefs[i]);
  }
  for (int n = 1; n <= 4; ++n) CHECK(metrics::bleu(ph, pr, n) == metrics::bleu(hyps, refs, n));
  CHECK(metrics::rouge_l(ph, pr) == doctest::Approx(metrics::rouge_l(hyps, refs)).epsilon(1e-13));
  CHECK(metrics::corpus_wer(pgh, pgr) == metrics::corpus_wer(ghyps, grefs));
}

TEST_CASE("evaluation report schema") {
  metrics::EvalReport g2t;
  g2t.task = metrics::Task::gloss2text;
  g2t.split = "test";
  g2t.n_samples = 50;
  g2t.bleu = std::array<double, 4>{90, 80, 70, 60};
  g2t.rouge = 88.0;
  g2t.decoding.beam_width = 4;
  g2t.decoding.length_penalty = 1.0;
  auto j = g2t.to_json();
  CHECK_FALSE(j.contains("wer"));
  CHECK(j["bleu"].size() == 4);
  CHECK(j["decoding"]["beam_width"] == 4);
  auto back = metrics::EvalReport::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.bleu == g2t.bleu);
  CHECK(back.decoding.length_penalty == 1.0);

  metrics::EvalReport s2g;
  s2g.wer = 3.5;
  s2g.decoding.ctc_beam_width = 3;
  auto js = s2g.to_json();
  CHECK(js["wer"] == 3.5);
  CHECK_FALSE(js.contains("bleu"));
  CHECK_FALSE(js.contains("rouge"));

  s2g.bleu = std::array<double, 4>{};
  CHECK_THROWS_AS(s2g.validate(), EvaluationError);
  g2t.wer = 1.0;
  CHECK_THROWS_AS(g2t.to_json(), EvaluationError);
  CHECK_THROWS_AS(metrics::EvalReport::from_json(nlohmann::json{{"task", "sign2gloss"}}), ParseError);

  CHECK(metrics::task_from_string("sign2text") == metrics::Task::sign2text);
  try {
    metrics::task_from_string("text2sign");
    FAIL("expected an error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("sign2gloss2text") != std::string::npos);
  }
}
