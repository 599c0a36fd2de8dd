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

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "slt/error.hpp"
#include "slt/optim.hpp"
#include "slt/translation.hpp"

using namespace slt;
using num::Tensor;
using translation::BeamOptions;
using translation::EncoderInput;
using translation::Hypothesis;
using translation::Mode;
using translation::TextVocab;
using translation::TranslationConfig;
using translation::TranslationModel;

namespace {

TranslationConfig tiny_config() {
  TranslationConfig c;
  c.layers_enc = 2;
  c.layers_dec = 2;
  c.d_model = 8;
  c.heads = 2;
  c.d_ff = 12;
  c.dropout = 0.0;
  c.label_smoothing = 0.0;
  c.max_len = 16;
  return c;
}

// Deterministic pseudo-random next-token distribution that depends on the
// whole prefix.
translation::StepFunction hashed_step(std::size_t vocab, std::uint64_t seed) {
  return [vocab, seed](const std::vector<std::vector<int>>& prefixes) {
    std::vector<std::vector<double>> out;
    for (const auto& p : prefixes) {
      std::uint64_t h = seed;
      for (int t : p) h = h * 1000003ULL + static_cast<std::uint64_t>(t) + 1;
      num::Rng rng(h);
      std::normal_distribution<double> n(0.0, 1.5);
      std::vector<double> logits(vocab);
      double mx = -1e300;
      for (auto& l : logits) mx = std::max(mx, l = n(rng));
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      for (auto& l : logits) l = l - mx - std::log(z);
      out.push_back(logits);
    }
    return out;
  };
}

std::vector<int> greedy(const translation::StepFunction& step, const BeamOptions& o) {
  std::vector<int> prefix;
  while (prefix.size() < o.max_len) {
    auto lp = step({prefix}).front();
    int best = -1;
    for (int v = 0; v < static_cast<int>(lp.size()); ++v) {
      if (std::find(o.banned.begin(), o.banned.end(), v) != o.banned.end()) continue;
      if (best < 0 || lp[v] > lp[best]) best = v;
    }
    if (best == o.eos) break;
    prefix.push_back(best);
  }
  return prefix;
}

double sequence_logp(const translation::StepFunction& step, const std::vector<int>& seq) {
  double lp = 0.0;
  std::vector<int> prefix;
  for (int t : seq) {
    lp += step({prefix}).front()[t];
    prefix.push_back(t);
  }
  return lp;
}

EncoderInput random_source(std::size_t length, std::size_t d, num::Rng& rng) {
  return {Tensor::randn({length, d}, 1.0, rng), {length}, {}};
}

}  // namespace

TEST_CASE("vocabulary layout and tokenization") {
  auto v = TextVocab::build({"heute nacht", "nacht  regen heute"}, {"de_DE"});
  CHECK(v.size() == 3 + 1 + 3);
  CHECK(v.token(TextVocab::kPad) == "<pad>");
  CHECK(v.token(TextVocab::kUnk) == "<unk>");
  CHECK(v.token(TextVocab::kEos) == "</s>");
  CHECK(v.language_id("de_DE") == 3);
  CHECK(v.token(4) == "heute");
  CHECK(v.is_special(3));
  CHECK_FALSE(v.is_special(4));
  CHECK_THROWS_AS(v.language_id("zh_CN"), VocabularyError);

  auto ids = v.tokenize("heute nacht");
  CHECK(ids == std::vector<int>{v.id("heute"), v.id("nacht")});
  CHECK(v.detokenize(ids) == "heute nacht");
  CHECK(v.detokenize(v.tokenize("  heute   regen ")) == "heute regen");
  CHECK(v.tokenize("morgen") == std::vector<int>{TextVocab::kUnk});
  CHECK(v.tokenize("").empty());
  std::vector<int> with_specials{3, v.id("regen"), TextVocab::kEos, TextVocab::kPad};
  CHECK(v.detokenize(with_specials) == "regen");
}

TEST_CASE("vocabulary file round trip and validation") {
  auto v = TextVocab::build({"b a c"}, {"de_DE", "zh_CN"});
  auto path = std::filesystem::temp_directory_path() / "slt_vocab_test.txt";
  v.save(path.string());
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first == "<pad>");
  auto back = TextVocab::load(path.string());
  CHECK(back == v);
  CHECK(back.language_tags() == std::vector<std::string>{"de_DE", "zh_CN"});
  std::filesystem::remove(path);

  CHECK_THROWS_AS(TextVocab::from_lines({"<unk>", "<pad>", "</s>"}), ParseError);
  CHECK_THROWS_AS(TextVocab::from_lines({"<pad>", "<unk>", "</s>", "a", "a"}), VocabularyError);
  CHECK_THROWS_AS(TextVocab::load("/nonexistent/vocab.txt"), IoError);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(TranslationModel(c, 5, 10, 1, 0), ConfigError);
}

TEST_CASE("encoder contract") {
  TranslationModel model(tiny_config(), 6, 10, 1, 1);
  num::Rng rng(2);
  auto src = random_source(5, 8, rng);
  auto mem = model.encode(src, Mode::eval);
  CHECK(mem.states.shape() == src.embeddings.shape());

  SUBCASE("padded positions do not leak") {
    for (std::size_t pads = 1; pads <= 3; ++pads) {
      EncoderInput padded{num::concat_rows({src.embeddings, Tensor::randn({pads, 8}, 3.0, rng)}),
                          {5 + pads},
                          std::vector<std::uint8_t>(5 + pads, 1)};
      for (std::size_t i = 5; i < 5 + pads; ++i) padded.key_mask[i] = 0;
      auto pm = model.encode(padded, Mode::eval);
      for (std::size_t i = 0; i < 5 * 8; ++i) CHECK(std::abs(pm.states.at(i) - mem.states.at(i)) <= 1e-9);
    }
  }

  SUBCASE("empty input") {
    EncoderInput empty{Tensor::zeros({0, 8}), {0}, {}};
    CHECK_THROWS_AS(model.encode(empty, Mode::eval), EmptySequenceError);
  }

  SUBCASE("gradient check") {
    Tensor x = Tensor::randn({7, 8}, 1.0, rng, true);
    Tensor w = Tensor::randn({7, 8}, 1.0, rng);
    auto f = [&] {
      return num::sum(num::mul(model.encode({x, {3, 4}, {}}, Mode::train).states, w));
    };
    CHECK(num::finite_difference_check_param(f, x, 1e-6) <= 1e-4);
    for (const auto* p : model.params().with_prefix("translation.encoder")) {
      INFO(p->name);
      CHECK(num::finite_difference_check_param(f, p->tensor, 1e-6, 16, 3) <= 1e-4);
    }
  }
}

TEST_CASE("decoder is causal") {
  TranslationModel model(tiny_config(), 6, 10, 1, 4);
  num::Rng rng(5);
  auto mem = model.encode(random_source(4, 8, rng), Mode::eval);
  std::vector<int> a{3, 5, 6, 7, 8, 9};
  auto base = model.decode(mem, a, std::vector<std::size_t>{6}, Mode::eval);
  for (std::size_t t = 0; t + 1 < a.size(); ++t) {
    auto b = a;
    for (std::size_t u = t + 1; u < b.size(); ++u) b[u] = 4 + static_cast<int>((u * 7 + t) % 6);
    auto other = model.decode(mem, b, std::vector<std::size_t>{6}, Mode::eval);
    for (std::size_t r = 0; r <= t; ++r) {
      for (std::size_t c = 0; c < 10; ++c) CHECK(std::abs(other.at(r, c) - base.at(r, c)) <= 1e-9);
    }
  }
}

TEST_CASE("translation loss") {
  TranslationModel model(tiny_config(), 6, 10, 1, 6);
  num::Rng rng(7);
  auto mem = model.encode(model.embed_glosses({{1, 2, 3}}, 0), Mode::eval);
  auto loss = model.loss(mem, {{4, 5, 6}}, 3, Mode::eval);
  CHECK(loss.item() >= 0.0);
  CHECK_THROWS_AS(model.loss(mem, {{}}, 3, Mode::eval), ArgumentError);
  CHECK_THROWS_AS(model.embed_glosses({{0}}, 0), VocabularyError);
  CHECK_THROWS_AS(model.embed_glosses({{6}}, 0), VocabularyError);

  // A decoder that puts all mass on the target has zero loss.
  Tensor peaked = Tensor::matrix(2, 3, {800, 0, 0, 0, 800, 0});
  std::vector<int> targets{0, 1};
  CHECK(num::cross_entropy_label_smoothed(peaked, targets, 0.0, -1).item() == doctest::Approx(0.0));
}

TEST_CASE("loss decreases on a tiny batch") {
  auto c = tiny_config();
  c.dropout = 0.3;
  c.label_smoothing = 0.2;
  TranslationModel model(c, 8, 12, 1, 8);
  std::vector<ctc::GlossSequence> src{{1, 2}, {3, 4, 5}, {6, 7}};
  std::vector<std::vector<int>> tgt{{5, 6}, {7, 8, 9}, {10, 11, 4}};
  num::Adam adam({{model.params().trainable_tensors(), 1e-3}}, {});
  auto eval_loss = [&] {
    num::NoGradGuard g;
    return model.loss(model.encode(model.embed_glosses(src, 0), Mode::eval), tgt, 3, Mode::eval).item();
  };
  const double start = eval_loss();
  for (int step = 0; step < 5; ++step) {
    adam.zero_grad();
    num::backward(model.loss(model.encode(model.embed_glosses(src, 0), Mode::train), tgt, 3, Mode::train));
    adam.step();
  }
  CHECK(eval_loss() < start);
}

TEST_CASE("a repeated pair is memorized") {
  TranslationModel model(tiny_config(), 6, 12, 1, 9);
  std::vector<ctc::GlossSequence> src{{1, 2, 3}};
  std::vector<std::vector<int>> tgt{{5, 9, 7, 4}};
  num::Adam adam({{model.params().trainable_tensors(), 3e-3}}, {});
  double loss = 1e9;
  int steps = 0;
  for (; steps < 500 && loss >= 0.01; ++steps) {
    adam.zero_grad();
    auto l = model.loss(model.encode(model.embed_glosses(src, 0), Mode::train), tgt, 3, Mode::train);
    loss = l.item();
    num::backward(l);
    adam.step();
  }
  INFO("steps " << steps << " loss " << loss);
  CHECK(loss < 0.01);
}

TEST_CASE("beam search against oracles") {
  SUBCASE("width 1 is greedy") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto step = hashed_step(6, seed);
      BeamOptions o;
      o.width = 1;
      o.max_len = 7;
      o.banned = {0, 1};
      auto h = translation::beam_search(step, o);
      CHECK(h.tokens == greedy(step, o));
    }
  }

  SUBCASE("alpha 0 scores raw log probability") {
    auto step = hashed_step(5, 77);
    BeamOptions o;
    o.alpha = 0.0;
    o.max_len = 6;
    auto h = translation::beam_search(step, o);
    CHECK(h.score == h.log_prob);
    auto full = h.tokens;
    if (h.finished) full.push_back(o.eos);
    CHECK(h.log_prob == doctest::Approx(sequence_logp(step, full)).epsilon(1e-12));
  }

  SUBCASE("unpruned beam equals exhaustive search") {
    // Vocabulary {x=0, y=1, </s>=2}, up to three generated tokens.
    for (double alpha : {0.0, 0.6, 1.0, 2.0}) {
      for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto step = hashed_step(3, seed * 31 + 5);
        BeamOptions o;
        o.width = 64;
        o.alpha = alpha;
        o.max_len = 3;
        o.eos = 2;
        std::vector<int> best;
        double best_score = -1e300;
        auto consider = [&](const std::vector<int>& words, bool eos) {
          auto seq = words;
          if (eos) seq.push_back(2);
          double s = translation::length_normalized(sequence_logp(step, seq), seq.size(), alpha);
          if (s > best_score || (s == best_score && words < best)) {
            best_score = s;
            best = words;
          }
        };
        for (std::size_t len = 0; len <= 3; ++len) {
          for (int code = 0; code < (1 << len); ++code) {
            std::vector<int> words;
            for (std::size_t i = 0; i < len; ++i) words.push_back((code >> i) & 1);
            consider(words, len < 3);
          }
        }
        auto h = translation::beam_search(step, o);
        INFO("alpha " << alpha << " seed " << seed);
        CHECK(h.tokens == best);
        CHECK(h.score == doctest::Approx(best_score).epsilon(1e-12));
      }
    }
  }

  SUBCASE("argument checks") {
    BeamOptions o;
    o.width = 0;
    CHECK_THROWS_AS(translation::beam_search(hashed_step(3, 1), o), ArgumentError);
  }
}

TEST_CASE("model beam translation") {
  auto c = tiny_config();
  TranslationModel model(c, 6, 12, 2, 10);
  std::vector<int> banned{TextVocab::kPad, TextVocab::kUnk, 3, 4};
  for (int lang = 0; lang < 2; ++lang) {
    num::NoGradGuard g;
    auto mem = model.encode(model.embed_glosses({{1, 4, 2, 5}}, lang), Mode::eval);
    BeamOptions o;
    o.banned = banned;
    o.max_len = 10;
    auto w4 = translation::beam_translate(model, mem, 3 + lang, o);
    CHECK(w4.tokens == translation::beam_translate(model, mem, 3 + lang, o).tokens);
    for (int t : w4.tokens) {
      CHECK(t >= 5);
      CHECK(t < 12);
    }
    o.width = 1;
    auto w1 = translation::beam_translate(model, mem, 3 + lang, o);
    CHECK(w1.tokens == greedy(translation::decoder_step(model, mem, 3 + lang), o));
  }
}

TEST_CASE("padding the source never changes the translation") {
  TranslationModel model(tiny_config(), 6, 12, 1, 11);
  num::Rng rng(12);
  num::NoGradGuard g;
  auto src = model.embed_glosses({{2, 3, 1}}, 0);
  auto mem = model.encode(src, Mode::eval);
  BeamOptions o;
  o.banned = {0, 1, 3};
  o.max_len = 8;
  auto base = translation::beam_translate(model, mem, 3, o);
  for (std::size_t pads = 1; pads <= 4; ++pads) {
    EncoderInput padded{num::concat_rows({src.embeddings, Tensor::randn({pads, 8}, 1.0, rng)}),
                        {4 + pads},
                        std::vector<std::uint8_t>(4 + pads, 1)};
    for (std::size_t i = 4; i < 4 + pads; ++i) padded.key_mask[i] = 0;
    auto h = translation::beam_translate(model, model.encode(padded, Mode::eval), 3, o);
    CHECK(h.tokens == base.tokens);
    CHECK(h.score == doctest::Approx(base.score).epsilon(1e-9));
  }
}

TEST_CASE("wider beams score at least as well") {
  auto c = tiny_config();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TranslationModel model(c, 6, 12, 1, 100 + seed);
    num::Rng rng(seed);
    std::uniform_int_distribution<int> gloss(1, 5);
    num::NoGradGuard g;
    for (int sample = 0; sample < 10; ++sample) {
      ctc::GlossSequence src;
      for (int i = 0; i < 2 + sample % 4; ++i) src.push_back(gloss(rng));
      auto mem = model.encode(model.embed_glosses({src}, 0), Mode::eval);
      BeamOptions o;
      o.banned = {0, 1, 3};
      o.max_len = 10;
      o.width = 1;
      auto w1 = translation::beam_translate(model, mem, 3, o);
      o.width = 4;
      auto w4 = translation::beam_translate(model, mem, 3, o);
      INFO("seed " << seed << " sample " << sample);
      // Equal hypotheses can differ in the last bits because the decoder
      // batches a different number of prefixes per step.
      CHECK(w4.score >= w1.score - 1e-12);
    }
  }
}
