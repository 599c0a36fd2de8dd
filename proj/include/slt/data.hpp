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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slt/tensor.hpp"
#include "slt/visual_encoder.hpp"

/// Synthetic (features, gloss, text) triplets and the on-disk corpus format:
/// a JSONL manifest per split pointing at SLTF feature files.
namespace slt::data {

struct SyntheticSpec {
  int num_glosses = 20;
  int frames_per_gloss = 8;
  int feature_dim = 64;
  double noise = 0.1;
  int min_gloss_len = 2;
  int max_gloss_len = 6;
  std::string language = "de_DE";
  std::uint64_t seed = 0;

  void validate() const;
};

struct Triplet {
  std::string id;
  visual::VideoFeatures features;
  std::vector<std::string> gloss;  // labels, e.g. {"HEUTE", "REGEN"}
  std::string text;
  std::string language = "de_DE";

  friend bool operator==(const Triplet& a, const Triplet& b);
};

struct Corpus {
  std::vector<Triplet> train, dev, test;
};

/// Gloss labels of the generator, in id order (id = index + 1).
std::vector<std::string> gloss_labels(int num_glosses);

/// Spoken form of one gloss label.
std::string spoken_word(const std::string& gloss_label);

/// Deterministic gloss -> text transduction: glosses are taken in pairs, each
/// pair is spoken in swapped order, and pairs are joined by "und".
std::string grammar(const std::vector<std::string>& gloss);
/// Inverse of `grammar` on its image; nullopt for text it cannot produce.
std::optional<std::vector<std::string>> invert_grammar(const std::string& text);

/// One fixed random unit vector per gloss, rows in id order.
num::Tensor gloss_prototypes(const SyntheticSpec& spec);

/// Train, dev and test splits with pairwise-distinct gloss sequences. Feature
/// values are rounded to float32 so that a write/read round trip is exact.
Corpus generate_corpus(const SyntheticSpec& spec, int n_train, int n_dev, int n_test);

// ---------------------------------------------------------------------------

void write_features(const std::string& path, const visual::VideoFeatures& features);
visual::VideoFeatures read_features(const std::string& path);

/// Writes `<dir>/<split>.jsonl` and `<dir>/features/<split>/<id>.sltf`.
void write_split(const std::string& dir, const std::string& split, const std::vector<Triplet>& samples);
/// Parses a JSONL manifest; feature paths resolve against its directory.
std::vector<Triplet> load_corpus(const std::string& manifest_path);
/// Loads `<dir>/{train,dev,test}.jsonl`.
Corpus load_splits(const std::string& dir);

// ---------------------------------------------------------------------------

constexpr double kMinFrameRate = 0.5;
constexpr double kMaxFrameRate = 1.5;

/// Linear resampling in time to max(4, round(T * rate)) frames.
visual::VideoFeatures frame_rate_augment(const visual::VideoFeatures& video, double rate);
/// Draws a rate uniformly from [0.5, 1.5] and resamples.
visual::VideoFeatures frame_rate_augment(const visual::VideoFeatures& video, num::Rng& rng);

}  // namespace slt::data
