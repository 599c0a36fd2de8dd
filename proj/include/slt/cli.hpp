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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "slt/data.hpp"
#include "slt/pipeline.hpp"

namespace slt::cli {

/// Everything a run needs, read from one JSON document:
///
///   {"data":  {<SyntheticSpec fields>, "n_train", "n_dev", "n_test"},
///    "model": {"visual": {...}, "translation": {...}, "mapper": {...}},
///    "train": {<TrainConfig fields except stage>,
///              "pretrain_visual": {...}, "pretrain_translation": {...},
///              "train_joint": {...}}}
///
/// Stage sections override the shared train fields for that stage. Every
/// field is optional; unknown keys are rejected.
struct RunConfig {
  data::SyntheticSpec data;
  int n_train = 500;
  int n_dev = 50;
  int n_test = 50;
  pipeline::ModelConfig model;
  nlohmann::json train = nlohmann::json::object();

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  /// Effective configuration with every default spelled out.
  nlohmann::ordered_json to_json() const;
  pipeline::TrainConfig train_config(pipeline::Stage stage) const;
  /// Sets the data and training seeds.
  void override_seed(std::uint64_t seed);
};

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kEnvironmentError = 1;
inline constexpr int kUsageError = 2;

/// Runs one command line (without the program name). Machine-readable output
/// goes to `out`, logs and error messages to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slt::cli
