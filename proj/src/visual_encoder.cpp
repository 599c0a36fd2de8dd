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

#include "slt/visual_encoder.hpp"

#include <cmath>

#include "slt/error.hpp"

namespace slt::visual {

namespace {

num::Tensor kaiming_uniform(num::Shape shape, std::size_t fan_in, num::Rng& rng) {
  return num::Tensor::uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace

void VisualEncoderConfig::validate() const {
  if (d_in == 0 || d_backbone == 0 || d_z == 0) throw ConfigError("visual encoder dimensions must be positive");
  if (num_glosses < 1) throw ConfigError("visual encoder needs at least one gloss class");
  if ((std::size_t{1} << backbone_blocks) != 4) {
    throw ConfigError("backbone must downsample time by exactly 4 (two stride-2 blocks), got " +
                      std::to_string(backbone_blocks) + " blocks");
  }
}

std::size_t downsampled_length(std::size_t frames) { return ((frames + 1) / 2 + 1) / 2; }

std::vector<ctc::GlossPosterior> VisualOutputs::posteriors() const {
  if (!logits) throw PipelineOrderError("gloss logits unavailable: classifier was not run");
  std::vector<ctc::GlossPosterior> out;
  std::size_t off = 0;
  for (auto len : lengths) {
    out.push_back(ctc::GlossPosterior::from_logits(num::slice_rows(logits->detach(), off, off + len)));
    off += len;
  }
  return out;
}

VisualEncoder::BnRefs VisualEncoder::make_bn(const std::string& prefix, std::size_t channels) {
  BnRefs bn;
  bn.gamma = params_.add(prefix + ".weight", num::Tensor::full({channels}, 1.0));
  bn.beta = params_.add(prefix + ".bias", num::Tensor::zeros({channels}));
  bn.state.running_mean = params_.add_buffer(prefix + ".running_mean", num::Tensor::zeros({channels}));
  bn.state.running_var = params_.add_buffer(prefix + ".running_var", num::Tensor::full({channels}, 1.0));
  return bn;
}

VisualEncoder::VisualEncoder(VisualEncoderConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  num::Rng rng(seed);
  const auto& c = config_;
  std::size_t cin = c.d_in;
  for (std::size_t i = 0; i < c.backbone_blocks; ++i) {
    const std::string p = "visual.backbone.block" + std::to_string(i);
    Block blk;
    blk.w = params_.add(p + ".conv.weight", kaiming_uniform({c.d_backbone, cin, 3}, cin * 3, rng));
    blk.b = params_.add(p + ".conv.bias", kaiming_uniform({c.d_backbone}, cin * 3, rng));
    blk.bn = make_bn(p + ".bn", c.d_backbone);
    backbone_.push_back(std::move(blk));
    cin = c.d_backbone;
  }
  proj_w_ = params_.add("visual.head.proj.weight", kaiming_uniform({c.d_backbone, c.d_z}, c.d_backbone, rng));
  proj_b_ = params_.add("visual.head.proj.bias", kaiming_uniform({c.d_z}, c.d_backbone, rng));
  proj_bn_ = make_bn("visual.head.proj_bn", c.d_z);
  conv1_w_ = params_.add("visual.head.conv1.weight", kaiming_uniform({c.d_z, c.d_z, 3}, c.d_z * 3, rng));
  conv1_b_ = params_.add("visual.head.conv1.bias", kaiming_uniform({c.d_z}, c.d_z * 3, rng));
  conv2_w_ = params_.add("visual.head.conv2.weight", kaiming_uniform({c.d_z, c.d_z, 3}, c.d_z * 3, rng));
  conv2_b_ = params_.add("visual.head.conv2.bias", kaiming_uniform({c.d_z}, c.d_z * 3, rng));
  lin_w_ = params_.add("visual.head.linear.weight", kaiming_uniform({c.d_z, c.d_z}, c.d_z, rng));
  lin_b_ = params_.add("visual.head.linear.bias", kaiming_uniform({c.d_z}, c.d_z, rng));
  cls_w_ = params_.add("visual.classifier.weight", kaiming_uniform({c.d_z, c.num_glosses + 1}, c.d_z, rng));
  cls_b_ = params_.add("visual.classifier.bias", kaiming_uniform({c.num_glosses + 1}, c.d_z, rng));
  set_freeze_backbone(c.freeze_backbone);
}

void VisualEncoder::set_freeze_backbone(bool frozen) {
  config_.freeze_backbone = frozen;
  params_.set_trainable("visual.backbone", !frozen);
}

num::Tensor VisualEncoder::backbone_forward(const num::Tensor& packed, std::span<const std::size_t> lengths,
                                            Mode mode, std::vector<std::size_t>& out_lengths) {
  if (packed.rank() != 2 || packed.dim(1) != config_.d_in) {
    throw DimensionError("backbone expects T x " + std::to_string(config_.d_in) + " features, got " +
                         num::shape_string(packed.shape()));
  }
  for (auto t : lengths) {
    if (t < 4) throw EmptySequenceError("sequence too short for x4 downsampling: " + std::to_string(t) + " frames");
  }
  // A frozen backbone also keeps its batch-norm statistics fixed.
  const bool training = mode == Mode::train && !config_.freeze_backbone;
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  num::Tensor x = packed;
  for (auto& blk : backbone_) {
    x = num::temporal_conv1d(x, blk.w, blk.b, 2, lens);
    lens = num::conv_output_lengths(lens, 2);
    x = num::relu(num::batch_norm(x, blk.bn.gamma, blk.bn.beta, blk.bn.state, training));
  }
  out_lengths = std::move(lens);
  return x;
}

num::Tensor VisualEncoder::head_forward(const num::Tensor& features, std::span<const std::size_t> lengths,
                                        Mode mode) {
  const bool training = mode == Mode::train;
  auto x = num::linear(features, proj_w_, proj_b_);
  x = num::relu(num::batch_norm(x, proj_bn_.gamma, proj_bn_.beta, proj_bn_.state, training));
  x = num::temporal_conv1d(x, conv1_w_, conv1_b_, 1, lengths);
  x = num::temporal_conv1d(x, conv2_w_, conv2_b_, 1, lengths);
  return num::relu(num::linear(x, lin_w_, lin_b_));
}

num::Tensor VisualEncoder::classify(const num::Tensor& gloss_repr) const {
  if (cls_w_.dim(1) != config_.num_glosses + 1) {
    throw ConfigError("classifier width does not match the gloss vocabulary");
  }
  return num::linear(gloss_repr, cls_w_, cls_b_);
}

num::Tensor VisualEncoder::classify(const num::Tensor& gloss_repr, const ctc::GlossVocab& vocab) const {
  if (static_cast<std::size_t>(vocab.size()) != config_.num_glosses) {
    throw ConfigError("gloss vocabulary has " + std::to_string(vocab.size()) + " glosses, classifier expects " +
                      std::to_string(config_.num_glosses));
  }
  return classify(gloss_repr);
}

num::Tensor VisualEncoder::pack(std::span<const VideoFeatures> videos, std::vector<std::size_t>& lengths) const {
  if (videos.empty()) throw EmptySequenceError("no videos to encode");
  std::vector<num::Tensor> parts;
  lengths.clear();
  for (const auto& v : videos) {
    if (v.dim() != config_.d_in) {
      throw DimensionError("video features have dim " + std::to_string(v.dim()) + ", encoder expects " +
                           std::to_string(config_.d_in));
    }
    parts.push_back(v.values);
    lengths.push_back(v.frames());
  }
  return parts.size() == 1 ? parts.front() : num::concat_rows(parts);
}

VisualOutputs VisualEncoder::forward_backbone_only(std::span<const VideoFeatures> videos, Mode mode) {
  std::vector<std::size_t> lengths;
  auto packed = pack(videos, lengths);
  VisualOutputs out;
  out.backbone = backbone_forward(packed, lengths, mode, out.lengths);
  return out;
}

VisualOutputs VisualEncoder::forward(std::span<const VideoFeatures> videos, Mode mode) {
  VisualOutputs out = forward_backbone_only(videos, mode);
  out.gloss_repr = head_forward(*out.backbone, out.lengths, mode);
  out.logits = classify(*out.gloss_repr);
  return out;
}

ctc::GlossSequence VisualEncoder::predict(const VideoFeatures& video, const CtcDecodeOptions& decode) {
  if (!trained_) throw CheckpointRequiredError("visual encoder has not been trained or loaded from a checkpoint");
  num::NoGradGuard guard;
  auto out = forward(std::span<const VideoFeatures>(&video, 1), Mode::eval);
  auto post = out.posteriors().front();
  return decode.beam_width ? ctc::ctc_beam_decode(post, *decode.beam_width) : ctc::ctc_greedy_decode(post);
}

}  // namespace slt::visual
