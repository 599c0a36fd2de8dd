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
#include <span>
#include <vector>

#include "slt/ctc.hpp"
#include "slt/tensor.hpp"

namespace slt::visual {

enum class Mode { train, eval };

/// Per-frame feature sequence standing in for a sign video, T x D_in.
struct VideoFeatures {
  num::Tensor values;

  std::size_t frames() const { return values.rank() == 2 ? values.dim(0) : 0; }
  std::size_t dim() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

struct VisualEncoderConfig {
  std::size_t d_in = 64;
  std::size_t d_backbone = 256;
  std::size_t d_z = 128;
  std::size_t num_glosses = 0;  // K, excluding the blank
  std::size_t backbone_blocks = 2;
  bool freeze_backbone = false;

  void validate() const;
};

/// Output length of the x4 temporal downsampling: ceil(ceil(T/2)/2) = ceil(T/4).
std::size_t downsampled_length(std::size_t frames);

/// Every intermediate tap of one packed forward pass. Taps past the stage that
/// was run stay undefined.
struct VisualOutputs {
  std::vector<std::size_t> lengths;  // T' per sample
  std::optional<num::Tensor> backbone;     // sum(T') x d_backbone
  std::optional<num::Tensor> gloss_repr;   // sum(T') x d_z
  std::optional<num::Tensor> logits;       // sum(T') x (K+1)

  std::vector<ctc::GlossPosterior> posteriors() const;
};

struct CtcDecodeOptions {
  // nullopt selects greedy decoding.
  std::optional<int> beam_width;
};

/// Sign2Gloss network: stride-2 temporal conv backbone, projection + temporal
/// convolution head, and a linear gloss classifier (blank at column 0).
class VisualEncoder {
 public:
  VisualEncoder(VisualEncoderConfig config, std::uint64_t seed);
  VisualEncoder(const VisualEncoder&) = delete;
  VisualEncoder& operator=(const VisualEncoder&) = delete;
  VisualEncoder(VisualEncoder&&) = default;
  VisualEncoder& operator=(VisualEncoder&&) = default;

  const VisualEncoderConfig& config() const { return config_; }
  num::ParameterStore& params() { return params_; }
  const num::ParameterStore& params() const { return params_; }

  void set_freeze_backbone(bool frozen);

  num::Tensor backbone_forward(const num::Tensor& packed, std::span<const std::size_t> lengths, Mode mode,
                               std::vector<std::size_t>& out_lengths);
  num::Tensor head_forward(const num::Tensor& features, std::span<const std::size_t> lengths, Mode mode);
  num::Tensor classify(const num::Tensor& gloss_repr) const;
  /// Same, after checking that `vocab` matches the classifier width.
  num::Tensor classify(const num::Tensor& gloss_repr, const ctc::GlossVocab& vocab) const;

  VisualOutputs forward(std::span<const VideoFeatures> videos, Mode mode);
  VisualOutputs forward_backbone_only(std::span<const VideoFeatures> videos, Mode mode);

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  /// Backbone -> head -> classifier -> CTC decode, in evaluation mode.
  ctc::GlossSequence predict(const VideoFeatures& video, const CtcDecodeOptions& decode);

 private:
  struct BnRefs {
    num::Tensor gamma, beta;
    num::BatchNormState state;
  };
  BnRefs make_bn(const std::string& prefix, std::size_t channels);
  num::Tensor pack(std::span<const VideoFeatures> videos, std::vector<std::size_t>& lengths) const;

  VisualEncoderConfig config_;
  num::ParameterStore params_;
  struct Block {
    num::Tensor w, b;
    BnRefs bn;
  };
  std::vector<Block> backbone_;
  num::Tensor proj_w_, proj_b_;
  BnRefs proj_bn_;
  num::Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  num::Tensor lin_w_, lin_b_;
  num::Tensor cls_w_, cls_b_;
  bool trained_ = false;
};

}  // namespace slt::visual
