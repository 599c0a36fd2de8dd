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

#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "slt/data.hpp"
#include "slt/error.hpp"
#include "slt/translation.hpp"
#include "slt/visual_encoder.hpp"
#include "slt/vl_mapper.hpp"

/// JSON views of the configuration structs. Readers start from the struct's
/// defaults, accept any subset of fields and reject unknown keys with a
/// ConfigError naming the key.
namespace slt::config {

using Json = nlohmann::ordered_json;

Json to_json(const data::SyntheticSpec& spec);
Json to_json(const visual::VisualEncoderConfig& config);
Json to_json(const translation::TranslationConfig& config);
Json to_json(const mapper::MapperConfig& config);

void read(const nlohmann::json& j, data::SyntheticSpec& spec, const std::string& where);
void read(const nlohmann::json& j, visual::VisualEncoderConfig& config, const std::string& where);
void read(const nlohmann::json& j, translation::TranslationConfig& config, const std::string& where);
void read(const nlohmann::json& j, mapper::MapperConfig& config, const std::string& where);

/// Field-by-field reader used by the functions above.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where);

  template <typename T>
  void field(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (j_.at(key).is_number_integer() && j_.at(key).template get<long long>() < 0) {
        throw ConfigError(where_ + "." + key + " must not be negative");
      }
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }
  /// Throws ConfigError naming the first key never passed to `field`.
  void finish() const;
  void seen(const std::string& key) { known_.push_back(key); }
  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json& at(const char* key) const { return j_.at(key); }
  const std::string& where() const { return where_; }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> known_;
};

}  // namespace slt::config
