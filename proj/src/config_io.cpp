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

#include "slt/config_io.hpp"

#include <algorithm>

#include "slt/error.hpp"

namespace slt::config {

ObjectReader::ObjectReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
  if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
}

void ObjectReader::finish() const {
  for (const auto& item : j_.items()) {
    if (std::find(known_.begin(), known_.end(), item.key()) == known_.end()) {
      throw ConfigError("unknown config key '" + where_ + "." + item.key() + "'");
    }
  }
}

Json to_json(const data::SyntheticSpec& s) {
  Json j;
  j["num_glosses"] = s.num_glosses;
  j["frames_per_gloss"] = s.frames_per_gloss;
  j["feature_dim"] = s.feature_dim;
  j["noise"] = s.noise;
  j["min_gloss_len"] = s.min_gloss_len;
  j["max_gloss_len"] = s.max_gloss_len;
  j["language"] = s.language;
  j["seed"] = s.seed;
  return j;
}

void read(const nlohmann::json& j, data::SyntheticSpec& s, const std::string& where) {
  ObjectReader r(j, where);
  r.field("num_glosses", s.num_glosses);
  r.field("frames_per_gloss", s.frames_per_gloss);
  r.field("feature_dim", s.feature_dim);
  r.field("noise", s.noise);
  r.field("min_gloss_len", s.min_gloss_len);
  r.field("max_gloss_len", s.max_gloss_len);
  r.field("language", s.language);
  r.field("seed", s.seed);
  r.finish();
}

Json to_json(const visual::VisualEncoderConfig& c) {
  Json j;
  j["d_in"] = c.d_in;
  j["d_backbone"] = c.d_backbone;
  j["d_z"] = c.d_z;
  j["num_glosses"] = c.num_glosses;
  j["backbone_blocks"] = c.backbone_blocks;
  j["freeze_backbone"] = c.freeze_backbone;
  return j;
}

void read(const nlohmann::json& j, visual::VisualEncoderConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  r.field("d_in", c.d_in);
  r.field("d_backbone", c.d_backbone);
  r.field("d_z", c.d_z);
  r.field("num_glosses", c.num_glosses);
  r.field("backbone_blocks", c.backbone_blocks);
  r.field("freeze_backbone", c.freeze_backbone);
  r.finish();
}

Json to_json(const translation::TranslationConfig& c) {
  Json j;
  j["layers_enc"] = c.layers_enc;
  j["layers_dec"] = c.layers_dec;
  j["d_model"] = c.d_model;
  j["heads"] = c.heads;
  j["d_ff"] = c.d_ff;
  j["dropout"] = c.dropout;
  j["label_smoothing"] = c.label_smoothing;
  j["max_len"] = c.max_len;
  j["freeze_src_embedding"] = c.freeze_src_embedding;
  j["freeze_tgt_embedding"] = c.freeze_tgt_embedding;
  return j;
}

void read(const nlohmann::json& j, translation::TranslationConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  r.field("layers_enc", c.layers_enc);
  r.field("layers_dec", c.layers_dec);
  r.field("d_model", c.d_model);
  r.field("heads", c.heads);
  r.field("d_ff", c.d_ff);
  r.field("dropout", c.dropout);
  r.field("label_smoothing", c.label_smoothing);
  r.field("max_len", c.max_len);
  r.field("freeze_src_embedding", c.freeze_src_embedding);
  r.field("freeze_tgt_embedding", c.freeze_tgt_embedding);
  r.finish();
}

Json to_json(const mapper::MapperConfig& c) {
  Json j;
  j["input_kind"] = mapper::to_string(c.input_kind);
  j["d_in"] = c.d_in;
  j["d_hidden"] = c.d_hidden;
  j["d_out"] = c.d_out;
  j["init_from_embedding"] = c.init_from_embedding;
  return j;
}

void read(const nlohmann::json& j, mapper::MapperConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  std::string kind = mapper::to_string(c.input_kind);
  r.field("input_kind", kind);
  c.input_kind = mapper::input_kind_from_string(kind);
  r.field("d_in", c.d_in);
  r.field("d_hidden", c.d_hidden);
  r.field("d_out", c.d_out);
  r.field("init_from_embedding", c.init_from_embedding);
  r.finish();
}

}  // namespace slt::config
