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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "slt/ctc.hpp"
#include "slt/data.hpp"
#include "slt/metrics.hpp"
#include "slt/translation.hpp"
#include "slt/visual_encoder.hpp"
#include "slt/vl_mapper.hpp"

/// Staged training (visual pretraining, translation pretraining, joint
/// fine-tuning), evaluation of the four tasks, and the SLTC checkpoint file.
namespace slt::pipeline {

enum class Stage { pretrain_visual, pretrain_translation, train_joint };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);
/// 80, 80 and 40 epochs.
int default_epochs(Stage stage);

struct TrainConfig {
  Stage stage = Stage::pretrain_visual;
  std::optional<int> epochs;  // default_epochs(stage) when unset
  std::size_t batch_size = 8;
  double lr_visual = 1e-3;       // visual encoder and mapper
  double lr_translation = 1e-5;
  double weight_decay = 1e-3;
  double ctc_weight = 1.0;
  double ce_weight = 1.0;
  bool freeze_backbone = true;  // joint stage only
  // Frame-rate augmentation of training videos; on by default for visual
  // pretraining only.
  std::optional<bool> augment;
  // Translation beam width used for the per-epoch dev BLEU-4.
  int dev_beam_width = 1;
  // Return the best-dev epoch; false returns the last epoch.
  bool keep_best = true;
  std::uint64_t seed = 0;

  int effective_epochs() const { return epochs.value_or(default_epochs(stage)); }
  bool effective_augment() const { return augment.value_or(stage == Stage::pretrain_visual); }
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
/// Reads over `config` (keeps fields that are absent); unknown keys throw.
void read(const nlohmann::json& j, TrainConfig& config, const std::string& where);

/// Architecture of the three sub-networks. Data-dependent sizes (gloss count,
/// feature width, mapper widths) may be left at 0 and are filled in from the
/// corpus and the other configs.
struct ModelConfig {
  visual::VisualEncoderConfig visual;
  translation::TranslationConfig translation;
  mapper::MapperConfig mapper;
};

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& where);

/// The trained system. Parts are present only after the stage that creates
/// them has run (or been loaded).
class PipelineModel {
 public:
  ModelConfig config;
  ctc::GlossVocab glosses;
  translation::TextVocab text;
  std::optional<visual::VisualEncoder> visual;
  std::optional<mapper::VlMapper> mapper;
  std::optional<translation::TranslationModel> translation;
  std::vector<std::string> provenance;  // stages run, in order

  /// Throws CheckpointRequiredError naming the first missing part.
  void require(metrics::Task task) const;
  bool supports(metrics::Task task) const;

  /// Index into the translation model's language table.
  int language_index(const std::string& tag) const;
  int bos_token(const std::string& tag) const { return text.language_id(tag); }

  /// Every parameter and buffer of the present parts, in a fixed order.
  std::vector<const num::Parameter*> all_parameters() const;
};

struct EpochRecord {
  Stage stage = Stage::pretrain_visual;
  int epoch = 0;  // 0 is the initialization
  std::optional<double> train_loss;
  std::optional<double> train_ctc;
  std::optional<double> train_ce;
  std::optional<double> dev_wer;    // percent
  std::optional<double> dev_bleu4;
  double lr = 0.0;                  // at the epoch's last step
  bool best = false;
  std::size_t skipped = 0;

  nlohmann::ordered_json to_json() const;
};

struct TrainResult {
  PipelineModel model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::size_t skipped = 0;  // distinct training samples skipped
};

/// Receives human-readable warnings and progress lines.
using Logger = std::function<void(const std::string&)>;

/// The untrained model a pretraining stage starts from (vocabularies built
/// from the corpus, parameters seeded from `config.seed`).
PipelineModel initial_model(const data::Corpus& corpus, const ModelConfig& model, const TrainConfig& config);

TrainResult pretrain_visual(const data::Corpus& corpus, const ModelConfig& model, const TrainConfig& config,
                            const Logger& log = {});
TrainResult pretrain_translation(const data::Corpus& corpus, const ModelConfig& model, const TrainConfig& config,
                                 const Logger& log = {});

struct JointInit {
  std::optional<PipelineModel> visual;       // from pretrain_visual
  std::optional<PipelineModel> translation;  // from pretrain_translation
  // Trains the missing parts from scratch instead of refusing.
  bool allow_scratch = false;
};

TrainResult train_joint(const data::Corpus& corpus, const ModelConfig& model, const TrainConfig& config,
                        JointInit init, const Logger& log = {});

/// Mean training objective of `samples` for `stage`, in evaluation mode and
/// without augmentation. Joint losses are weighted as in `config`.
struct LossBreakdown {
  double total = 0.0;
  double ctc = 0.0;
  double ce = 0.0;
};
LossBreakdown dataset_loss(PipelineModel& model, const std::vector<data::Triplet>& samples,
                           const TrainConfig& config);

// ---------------------------------------------------------------------------

struct EvalOptions {
  int beam_width = 4;
  double length_penalty = 1.0;
  // Fixed CTC beam width; when unset the width is chosen from 1..10 by dev
  // WER and reused on the evaluated split.
  std::optional<int> ctc_beam_width;
  std::size_t max_output_len = 32;
};

metrics::EvalReport evaluate(PipelineModel& model, const data::Corpus& corpus, metrics::Task task,
                             const std::string& split, const EvalOptions& options = {});

/// Decoded outputs for a list of samples (used by evaluate and the CLI).
std::vector<ctc::GlossSequence> predict_glosses(PipelineModel& model, const std::vector<data::Triplet>& samples,
                                                std::optional<int> ctc_beam_width);
std::vector<std::string> translate_glosses(PipelineModel& model, const std::vector<ctc::GlossSequence>& glosses,
                                           const std::vector<std::string>& languages, const EvalOptions& options);
std::vector<std::string> translate_videos(PipelineModel& model, const std::vector<data::Triplet>& samples,
                                          const EvalOptions& options);

// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const PipelineModel& model, const std::string& path);
PipelineModel load_checkpoint(const std::string& path);

}  // namespace slt::pipeline
