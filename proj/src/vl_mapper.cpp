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

#include "slt/vl_mapper.hpp"

#include <cmath>

#include "slt/error.hpp"

namespace slt::mapper {

std::string to_string(InputKind kind) {
  switch (kind) {
    case InputKind::gloss_representation: return "gloss_representation";
    case InputKind::gloss_logits: return "gloss_logits";
    case InputKind::s3d_features: return "s3d_features";
    case InputKind::gloss_probabilities: return "gloss_probabilities";
  }
  return "unknown";
}

InputKind input_kind_from_string(const std::string& name) {
  for (auto k : {InputKind::gloss_representation, InputKind::gloss_logits, InputKind::s3d_features,
                 InputKind::gloss_probabilities}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown mapper input_kind '" + name +
                    "' (expected gloss_representation, gloss_logits, s3d_features or gloss_probabilities)");
}

void MapperConfig::validate() const {
  if (d_in == 0 || d_out == 0) throw ConfigError("mapper dimensions must be positive");
  if (init_from_embedding && input_kind != InputKind::gloss_probabilities) {
    throw ConfigError("init_from_embedding is only valid with input_kind gloss_probabilities");
  }
}

std::size_t expected_input_dim(InputKind kind, const visual::VisualEncoderConfig& visual) {
  switch (kind) {
    case InputKind::gloss_representation: return visual.d_z;
    case InputKind::s3d_features: return visual.d_backbone;
    case InputKind::gloss_logits:
    case InputKind::gloss_probabilities: return visual.num_glosses + 1;
  }
  return 0;
}

num::Tensor select_visual_feature(const visual::VisualOutputs& outputs, InputKind kind) {
  auto need = [](const std::optional<num::Tensor>& tap, const char* name) -> const num::Tensor& {
    if (!tap) throw PipelineOrderError(std::string("visual tap '") + name + "' unavailable: run the full visual forward first");
    return *tap;
  };
  switch (kind) {
    case InputKind::gloss_representation: return need(outputs.gloss_repr, "gloss_representation");
    case InputKind::gloss_logits: return need(outputs.logits, "gloss_logits");
    case InputKind::s3d_features: return need(outputs.backbone, "s3d_features");
    case InputKind::gloss_probabilities: return num::softmax(need(outputs.logits, "gloss_probabilities"));
  }
  throw ConfigError("unknown mapper input kind");
}

VlMapper::VlMapper(MapperConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  num::Rng rng(seed);
  const std::size_t h = config_.hidden();
  auto init = [&](std::size_t fan_in, num::Shape shape) {
    return num::Tensor::uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  };
  w1_ = params_.add("mapper.fc1.weight", init(config_.d_in, {config_.d_in, h}));
  b1_ = params_.add("mapper.fc1.bias", init(config_.d_in, {h}));
  w2_ = params_.add("mapper.fc2.weight", init(h, {h, h}));
  b2_ = params_.add("mapper.fc2.bias", init(h, {h}));
  w3_ = params_.add("mapper.fc3.weight", init(h, {h, config_.d_out}));
  b3_ = params_.add("mapper.fc3.bias", init(h, {config_.d_out}));
}

num::Tensor VlMapper::map(const num::Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != config_.d_in) {
    throw ConfigError("mapper expects " + std::to_string(config_.d_in) + "-dim " + to_string(config_.input_kind) +
                      " features, got " + num::shape_string(x.shape()));
  }
  auto h = num::relu(num::linear(x, w1_, b1_));
  h = num::relu(num::linear(h, w2_, b2_));
  return num::linear(h, w3_, b3_);
}

void VlMapper::init_from_embedding(const num::Tensor& table) {
  if (config_.input_kind != InputKind::gloss_probabilities) {
    throw ConfigError("init_from_embedding requires input_kind gloss_probabilities");
  }
  if (table.rank() != 2 || table.dim(0) != config_.d_in || table.dim(1) != config_.d_out) {
    throw ConfigError("embedding table " + num::shape_string(table.shape()) + " does not match mapper " +
                      std::to_string(config_.d_in) + " -> " + std::to_string(config_.d_out));
  }
  const std::size_t h = config_.hidden(), d_in = config_.d_in, d_out = config_.d_out;
  if (h < d_in) {
    throw ConfigError("embedding initialization needs hidden width >= " + std::to_string(d_in) + ", got " +
                      std::to_string(h));
  }
  std::vector<double> w1(d_in * h, 0.0), w2(h * h, 0.0), w3(h * d_out, 0.0);
  for (std::size_t i = 0; i < d_in; ++i) {
    w1[i * h + i] = 1.0;
    w2[i * h + i] = 1.0;
  }
  std::copy(table.values().begin(), table.values().end(), w3.begin());
  params_.assign("mapper.fc1.weight", w1);
  params_.assign("mapper.fc2.weight", w2);
  params_.assign("mapper.fc3.weight", w3);
  params_.assign("mapper.fc1.bias", std::vector<double>(h, 0.0));
  params_.assign("mapper.fc2.bias", std::vector<double>(h, 0.0));
  params_.assign("mapper.fc3.bias", std::vector<double>(d_out, 0.0));
  config_.init_from_embedding = true;
}

}  // namespace slt::mapper
