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
#include <string>

#include "slt/tensor.hpp"
#include "slt/visual_encoder.hpp"

/// Visual-language mapper: a per-frame MLP with two hidden layers that lifts a
/// visual feature stream into the translation encoder's input space.
namespace slt::mapper {

enum class InputKind { gloss_representation, gloss_logits, s3d_features, gloss_probabilities };

std::string to_string(InputKind kind);
InputKind input_kind_from_string(const std::string& name);

struct MapperConfig {
  InputKind input_kind = InputKind::gloss_representation;
  std::size_t d_in = 0;
  std::size_t d_hidden = 0;  // 0 means d_out
  std::size_t d_out = 0;
  bool init_from_embedding = false;

  std::size_t hidden() const { return d_hidden == 0 ? d_out : d_hidden; }
  void validate() const;
};

/// Input width implied by the tap: d_z, K+1, d_backbone or K+1.
std::size_t expected_input_dim(InputKind kind, const visual::VisualEncoderConfig& visual);

/// Returns the configured tap of a visual forward pass. Probabilities are the
/// row softmax of the logits and stay differentiable.
num::Tensor select_visual_feature(const visual::VisualOutputs& outputs, InputKind kind);

class VlMapper {
 public:
  VlMapper(MapperConfig config, std::uint64_t seed);
  VlMapper(const VlMapper&) = delete;
  VlMapper& operator=(const VlMapper&) = delete;
  VlMapper(VlMapper&&) = default;
  VlMapper& operator=(VlMapper&&) = default;

  const MapperConfig& config() const { return config_; }
  num::ParameterStore& params() { return params_; }
  const num::ParameterStore& params() const { return params_; }

  /// linear -> relu -> linear -> relu -> linear, applied per frame.
  num::Tensor map(const num::Tensor& x) const;

  /// Seeds the mapper with a translation source embedding table of shape
  /// (K+1) x d_out so that a one-hot probability row on gloss k maps to row k.
  /// Hidden layers pass the probabilities through (identity on the first
  /// d_in units, zero elsewhere) and the output layer carries the table.
  void init_from_embedding(const num::Tensor& table);

 private:
  MapperConfig config_;
  num::ParameterStore params_;
  num::Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace slt::mapper
