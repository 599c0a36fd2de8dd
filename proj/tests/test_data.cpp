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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "slt/data.hpp"
#include "slt/error.hpp"

namespace fs = std::filesystem;
using namespace slt;
using namespace slt::data;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("slt_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.num_glosses = 8;
  spec.feature_dim = 16;
  spec.seed = 11;
  return spec;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("generator is deterministic in the seed") {
  const auto a = generate_corpus(small_spec(), 20, 5, 5);
  const auto b = generate_corpus(small_spec(), 20, 5, 5);
  CHECK(a.train == b.train);
  CHECK(a.dev == b.dev);
  CHECK(a.test == b.test);
  auto other = small_spec();
  other.seed = 12;
  const auto c = generate_corpus(other, 20, 5, 5);
  CHECK_FALSE(a.train == c.train);
}

TEST_CASE("frame count is glosses times frames per gloss") {
  const auto spec = small_spec();
  const auto corpus = generate_corpus(spec, 30, 5, 5);
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& s : *split) {
      CHECK(s.features.frames() == s.gloss.size() * static_cast<std::size_t>(spec.frames_per_gloss));
      CHECK(s.features.dim() == static_cast<std::size_t>(spec.feature_dim));
      CHECK(static_cast<int>(s.gloss.size()) >= spec.min_gloss_len);
      CHECK(static_cast<int>(s.gloss.size()) <= spec.max_gloss_len);
      for (std::size_t i = 1; i < s.gloss.size(); ++i) CHECK(s.gloss[i] != s.gloss[i - 1]);
      for (double v : s.features.values.values()) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("noise-free frames equal the prototype of their gloss") {
  auto spec = small_spec();
  spec.noise = 0.0;
  const auto protos = gloss_prototypes(spec);
  const auto labels = gloss_labels(spec.num_glosses);
  const auto corpus = generate_corpus(spec, 10, 2, 2);
  const auto d = static_cast<std::size_t>(spec.feature_dim);
  for (const auto& s : corpus.train) {
    for (std::size_t t = 0; t < s.features.frames(); ++t) {
      const auto& label = s.gloss[t / static_cast<std::size_t>(spec.frames_per_gloss)];
      const auto k = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), label) - labels.begin());
      for (std::size_t i = 0; i < d; ++i) {
        CHECK(s.features.values.at(t, i) == doctest::Approx(protos.at(k, i)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("low-noise frames are nearest to their own prototype") {
  auto spec = small_spec();
  spec.noise = 0.05;
  const auto protos = gloss_prototypes(spec);
  const auto labels = gloss_labels(spec.num_glosses);
  const auto corpus = generate_corpus(spec, 20, 2, 2);
  const auto d = static_cast<std::size_t>(spec.feature_dim);
  std::size_t hits = 0, frames = 0;
  for (const auto& s : corpus.train) {
    for (std::size_t t = 0; t < s.features.frames(); ++t, ++frames) {
      std::size_t best = 0;
      double best_dist = INFINITY;
      for (std::size_t k = 0; k < labels.size(); ++k) {
        double dist = 0.0;
        for (std::size_t i = 0; i < d; ++i) dist += std::pow(s.features.values.at(t, i) - protos.at(k, i), 2);
        if (dist < best_dist) best_dist = dist, best = k;
      }
      hits += labels[best] == s.gloss[t / static_cast<std::size_t>(spec.frames_per_gloss)];
    }
  }
  CHECK(hits == frames);
}

TEST_CASE("text is a function of gloss and can be inverted") {
  CHECK(grammar({"HEUTE", "REGEN"}) == "regen heute");
  CHECK(grammar({"HEUTE", "REGEN", "NORD"}) == "regen heute und nord");
  CHECK(grammar({"A"}) == "a");
  CHECK_FALSE(invert_grammar("a b c").has_value());
  CHECK_FALSE(invert_grammar("").has_value());
  const auto corpus = generate_corpus(small_spec(), 50, 10, 10);
  std::set<std::vector<std::string>> sequences;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& s : *split) {
      CHECK(s.text == grammar(s.gloss));
      const auto back = invert_grammar(s.text);
      REQUIRE(back.has_value());
      CHECK(*back == s.gloss);
      CHECK(sequences.insert(s.gloss).second);
    }
  }
  const auto labels = gloss_labels(50);
  CHECK(std::set<std::string>(labels.begin(), labels.end()).size() == 50);
  CHECK(std::find(labels.begin(), labels.end(), "UND") == labels.end());
}

TEST_CASE("specification errors") {
  auto spec = small_spec();
  spec.num_glosses = 1;
  CHECK_THROWS_AS(generate_corpus(spec, 1, 1, 1), ConfigError);
  spec = small_spec();
  spec.frames_per_gloss = 6;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.num_glosses = 2;
  spec.min_gloss_len = 1;
  spec.max_gloss_len = 1;
  CHECK_THROWS_AS(generate_corpus(spec, 2, 1, 1), CorpusError);
}

TEST_CASE("corpus round trip through disk is exact") {
  const auto dir = scratch_dir("roundtrip");
  const auto corpus = generate_corpus(small_spec(), 12, 3, 3);
  write_split(dir.string(), "train", corpus.train);
  write_split(dir.string(), "dev", corpus.dev);
  write_split(dir.string(), "test", corpus.test);
  const auto loaded = load_splits(dir.string());
  CHECK(loaded.train == corpus.train);
  CHECK(loaded.dev == corpus.dev);
  CHECK(loaded.test == corpus.test);
  fs::remove_all(dir);
}

TEST_CASE("manifest parsing") {
  const auto dir = scratch_dir("manifest");
  const auto corpus = generate_corpus(small_spec(), 2, 1, 1);
  write_split(dir.string(), "train", corpus.train);
  const auto manifest = dir / "train.jsonl";
  const std::string original = slurp(manifest);

  SUBCASE("unknown fields are ignored and language is optional") {
    std::ofstream(manifest) << R"({"id":"x","features":"features/train/train_00000.sltf","gloss":"A B","text":"b a","extra":[1,2]})"
                            << "\n";
    const auto samples = load_corpus(manifest.string());
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].language == "de_DE");
    CHECK(samples[0].gloss == std::vector<std::string>{"A", "B"});
  }
  SUBCASE("malformed line names its line number") {
    std::ofstream(manifest) << original << "{not json\n";
    try {
      load_corpus(manifest.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("missing field") {
    std::ofstream(manifest) << R"({"id":"x","gloss":"A","text":"a"})" << "\n";
    CHECK_THROWS_AS(load_corpus(manifest.string()), ParseError);
  }
  SUBCASE("missing feature file names the sample") {
    fs::remove(dir / "features" / "train" / "train_00001.sltf");
    try {
      load_corpus(manifest.string());
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("train_00001") != std::string::npos);
    }
  }
  SUBCASE("missing manifest") { CHECK_THROWS_AS(load_corpus((dir / "nope.jsonl").string()), IoError); }
  fs::remove_all(dir);
}

TEST_CASE("feature file corruption") {
  const auto dir = scratch_dir("corrupt");
  const auto path = (dir / "x.sltf").string();
  visual::VideoFeatures v{num::Tensor({5, 3}, std::vector<double>(15, 0.25))};
  write_features(path, v);
  const std::string bytes = slurp(path);
  CHECK(bytes.size() == 16 + 4 * 15);

  SUBCASE("truncated payload reports expected and actual sizes") {
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 4);
    try {
      read_features(path);
      FAIL("expected CorruptionError");
    } catch (const CorruptionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("76") != std::string::npos);
      CHECK(msg.find("72") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    std::ofstream(path, std::ios::binary) << bytes << "xx";
    CHECK_THROWS_AS(read_features(path), CorruptionError);
  }
  SUBCASE("short header") {
    std::ofstream(path, std::ios::binary) << bytes.substr(0, 7);
    CHECK_THROWS_AS(read_features(path), CorruptionError);
  }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    std::ofstream(path, std::ios::binary) << b;
    CHECK_THROWS_AS(read_features(path), CorruptionError);
  }
  SUBCASE("unknown version") {
    std::string b = bytes;
    b[4] = 2;
    std::ofstream(path, std::ios::binary) << b;
    CHECK_THROWS_AS(read_features(path), UnsupportedVersionError);
  }
  SUBCASE("non-finite value") {
    std::string b = bytes;
    const float nan = NAN;
    std::memcpy(b.data() + 16, &nan, 4);
    std::ofstream(path, std::ios::binary) << b;
    CHECK_THROWS_AS(read_features(path), CorruptionError);
  }
  fs::remove_all(dir);
}

TEST_CASE("frame-rate augmentation") {
  std::vector<double> ramp;
  for (int t = 0; t < 16; ++t) ramp.insert(ramp.end(), {static_cast<double>(t), 2.0 * t});
  const visual::VideoFeatures video{num::Tensor({16, 2}, ramp)};

  SUBCASE("rate 1 is the identity") {
    const auto out = frame_rate_augment(video, 1.0);
    CHECK(out.values.shape() == video.values.shape());
    for (std::size_t i = 0; i < ramp.size(); ++i) CHECK(out.values.at(i) == ramp[i]);
  }
  SUBCASE("rate 0.5 halves the length and keeps the endpoints") {
    const auto out = frame_rate_augment(video, 0.5);
    REQUIRE(out.frames() == 8);
    CHECK(out.values.at(0, 0) == 0.0);
    CHECK(out.values.at(7, 0) == doctest::Approx(15.0));
    // A linear signal stays linear under linear interpolation.
    for (std::size_t t = 0; t < 8; ++t) {
      CHECK(out.values.at(t, 0) == doctest::Approx(15.0 * t / 7.0));
      CHECK(out.values.at(t, 1) == doctest::Approx(2.0 * out.values.at(t, 0)));
    }
  }
  SUBCASE("rate 1.5") { CHECK(frame_rate_augment(video, 1.5).frames() == 24); }
  SUBCASE("length never drops below 4") {
    const visual::VideoFeatures tiny{num::Tensor({5, 1}, {1, 2, 3, 4, 5})};
    CHECK(frame_rate_augment(tiny, 0.5).frames() == 4);
  }
  SUBCASE("constant input stays constant") {
    const visual::VideoFeatures flat{num::Tensor({10, 3}, std::vector<double>(30, 0.7))};
    num::Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const auto out = frame_rate_augment(flat, rng);
      CHECK(out.frames() >= 5);
      CHECK(out.frames() <= 15);
      for (double v : out.values.values()) CHECK(v == doctest::Approx(0.7));
    }
  }
  SUBCASE("rate outside the range") {
    CHECK_THROWS_AS(frame_rate_augment(video, 0.49), ArgumentError);
    CHECK_THROWS_AS(frame_rate_augment(video, 1.51), ArgumentError);
    CHECK_THROWS_AS(frame_rate_augment(video, NAN), ArgumentError);
  }
}
