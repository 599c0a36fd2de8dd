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

#include "slt/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <zlib.h>

#include "slt/config_io.hpp"
#include "slt/error.hpp"
#include "slt/optim.hpp"

namespace slt::pipeline {

using metrics::Task;
using Json = nlohmann::ordered_json;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed * 0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL + 1;
}

void emit(const Logger& log, const std::string& line) {
  if (log) log(line);
}

// ---------------------------------------------------------------------------
// Vocabularies and configuration.

ctc::GlossVocab build_gloss_vocab(const data::Corpus& corpus) {
  std::set<std::string> labels;
  for (const auto& s : corpus.train) labels.insert(s.gloss.begin(), s.gloss.end());
  if (labels.empty()) throw CorpusError("training split has no gloss labels");
  return ctc::GlossVocab(std::vector<std::string>(labels.begin(), labels.end()));
}

translation::TextVocab build_text_vocab(const data::Corpus& corpus) {
  std::set<std::string> tags;
  std::vector<std::string> sentences;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& s : *split) tags.insert(s.language);
  }
  for (const auto& s : corpus.train) sentences.push_back(s.text);
  return translation::TextVocab::build(sentences, std::vector<std::string>(tags.begin(), tags.end()));
}

std::size_t feature_dim(const data::Corpus& corpus) {
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& s : *split) return s.features.dim();
  }
  throw CorpusError("corpus is empty");
}

visual::VisualEncoderConfig resolve_visual(visual::VisualEncoderConfig c, const ctc::GlossVocab& glosses,
                                           std::size_t d_in) {
  c.d_in = d_in;
  const auto k = static_cast<std::size_t>(glosses.size());
  if (c.num_glosses != 0 && c.num_glosses != k) {
    throw ConfigError("visual.num_glosses is " + std::to_string(c.num_glosses) + " but the corpus has " +
                      std::to_string(k) + " gloss labels");
  }
  c.num_glosses = k;
  c.validate();
  return c;
}

mapper::MapperConfig resolve_mapper(mapper::MapperConfig c, const visual::VisualEncoderConfig& v,
                                    const translation::TranslationConfig& t) {
  const std::size_t in = mapper::expected_input_dim(c.input_kind, v);
  if (c.d_in != 0 && c.d_in != in) {
    throw ConfigError("mapper.d_in is " + std::to_string(c.d_in) + " but the " + mapper::to_string(c.input_kind) +
                      " tap has width " + std::to_string(in));
  }
  if (c.d_out != 0 && c.d_out != t.d_model) {
    throw ConfigError("mapper.d_out is " + std::to_string(c.d_out) + " but translation.d_model is " +
                      std::to_string(t.d_model));
  }
  c.d_in = in;
  c.d_out = t.d_model;
  c.validate();
  return c;
}

std::vector<data::Triplet> check_split(const std::vector<data::Triplet>& s, const char* name) {
  if (s.empty()) throw CorpusError(std::string(name) + " split is empty");
  return s;
}

ctc::GlossSequence to_ids(const ctc::GlossVocab& vocab, const std::vector<std::string>& labels) {
  ctc::GlossSequence ids;
  for (const auto& l : labels) ids.push_back(vocab.id(l));
  return ids;
}

bool known_glosses(const ctc::GlossVocab& vocab, const std::vector<std::string>& labels) {
  return std::all_of(labels.begin(), labels.end(), [&](const std::string& l) { return vocab.contains(l); });
}

std::vector<std::string> to_labels(const ctc::GlossVocab& vocab, const ctc::GlossSequence& ids) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(vocab.label(id));
  return out;
}

std::vector<int> banned_tokens(const translation::TextVocab& text) {
  std::vector<int> banned{translation::TextVocab::kPad};
  for (const auto& tag : text.language_tags()) banned.push_back(text.language_id(tag));
  return banned;
}

// Batches never mix languages because the encoder appends one language symbol
// per call.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<data::Triplet>& samples,
                                                   std::size_t batch_size, num::Rng* rng) {
  std::map<std::string, std::vector<std::size_t>> by_language;
  for (std::size_t i = 0; i < samples.size(); ++i) by_language[samples[i].language].push_back(i);
  std::vector<std::vector<std::size_t>> batches;
  for (auto& [tag, idx] : by_language) {
    if (rng) std::shuffle(idx.begin(), idx.end(), *rng);
    for (std::size_t b = 0; b < idx.size(); b += batch_size) {
      batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(b),
                           idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), b + batch_size)));
    }
  }
  if (rng) std::shuffle(batches.begin(), batches.end(), *rng);
  return batches;
}

// ---------------------------------------------------------------------------
// One training step's worth of loss terms.

struct StepLoss {
  num::Tensor total;
  double ctc = 0.0;
  double ce = 0.0;
  std::size_t samples = 0;
};

class SkipTracker {
 public:
  explicit SkipTracker(const Logger& log) : log_(log) {}
  void skip(const std::string& id, const std::string& reason) {
    ++this_epoch_;
    if (ids_.insert(id).second) emit(log_, "warning: skipping sample " + id + ": " + reason);
  }
  std::size_t take_epoch() { return std::exchange(this_epoch_, 0); }
  std::size_t distinct() const { return ids_.size(); }

 private:
  const Logger& log_;
  std::set<std::string> ids_;
  std::size_t this_epoch_ = 0;
};

struct BatchContext {
  PipelineModel& model;
  const TrainConfig& config;
  Stage stage;
  bool training;
  num::Rng* augment_rng;  // null disables augmentation
  SkipTracker* skips;
};

void skip(BatchContext& ctx, const std::string& id, const std::string& reason) {
  if (ctx.skips) ctx.skips->skip(id, reason);
}

std::optional<StepLoss> batch_loss(BatchContext& ctx, const std::vector<data::Triplet>& samples,
                                   const std::vector<std::size_t>& batch) {
  auto& m = ctx.model;
  const bool use_visual = ctx.stage != Stage::pretrain_translation;
  const bool use_text = ctx.stage != Stage::pretrain_visual;
  const double ctc_w = ctx.stage == Stage::pretrain_visual ? 1.0 : ctx.stage == Stage::train_joint ? ctx.config.ctc_weight : 0.0;
  const double ce_w = ctx.stage == Stage::pretrain_translation ? 1.0 : ctx.stage == Stage::train_joint ? ctx.config.ce_weight : 0.0;

  std::vector<visual::VideoFeatures> videos;
  std::vector<ctc::GlossSequence> glosses;
  std::vector<std::vector<int>> targets;
  std::string language;
  for (auto i : batch) {
    const auto& s = samples[i];
    if (!known_glosses(m.glosses, s.gloss)) {
      skip(ctx, s.id, "gloss label outside the training vocabulary");
      continue;
    }
    auto ids = to_ids(m.glosses, s.gloss);
    std::vector<int> target;
    if (use_text && ce_w > 0.0) {
      target = m.text.tokenize(s.text);
      if (target.empty()) {
        skip(ctx, s.id, "empty target sentence");
        continue;
      }
    }
    if (use_visual) {
      if (s.features.frames() < 4) {
        skip(ctx, s.id, "fewer than 4 frames");
        continue;
      }
      auto video = ctx.augment_rng ? data::frame_rate_augment(s.features, *ctx.augment_rng) : s.features;
      if (ctc_w > 0.0 && !ctc::ctc_feasible(visual::downsampled_length(video.frames()), ids)) {
        skip(ctx, s.id,
             "gloss sequence of length " + std::to_string(ids.size()) + " cannot align to " +
                 std::to_string(visual::downsampled_length(video.frames())) + " downsampled frames");
        continue;
      }
      videos.push_back(std::move(video));
    }
    glosses.push_back(std::move(ids));
    targets.push_back(std::move(target));
    language = s.language;
  }
  if (glosses.empty()) return std::nullopt;

  StepLoss out;
  out.samples = glosses.size();
  std::optional<num::Tensor> total;
  auto accumulate = [&](const num::Tensor& term, double weight) {
    auto scaled = weight == 1.0 ? term : num::scale(term, weight);
    total = total ? num::add(*total, scaled) : scaled;
  };
  const auto vmode = ctx.training ? visual::Mode::train : visual::Mode::eval;
  const auto tmode = ctx.training ? translation::Mode::train : translation::Mode::eval;

  if (ctx.stage == Stage::pretrain_visual) {
    auto vis = m.visual->forward(videos, vmode);
    auto ctc = ctc::ctc_loss(*vis.logits, vis.lengths, glosses);
    out.ctc = ctc.item();
    accumulate(ctc, 1.0);
  } else if (ctx.stage == Stage::pretrain_translation) {
    auto memory = m.translation->encode(m.translation->embed_glosses(glosses, m.language_index(language)), tmode);
    auto ce = m.translation->loss(memory, targets, m.bos_token(language), tmode);
    out.ce = ce.item();
    accumulate(ce, 1.0);
  } else {
    auto vis = m.visual->forward(videos, vmode);
    if (ctc_w > 0.0) {
      auto ctc = ctc::ctc_loss(*vis.logits, vis.lengths, glosses);
      out.ctc = ctc.item();
      accumulate(ctc, ctc_w);
    }
    if (ce_w > 0.0) {
      auto mapped = m.mapper->map(mapper::select_visual_feature(vis, m.config.mapper.input_kind));
      auto memory = m.translation->encode(m.translation->embed_frames(mapped, vis.lengths, m.language_index(language)),
                                          tmode);
      auto ce = m.translation->loss(memory, targets, m.bos_token(language), tmode);
      out.ce = ce.item();
      accumulate(ce, ce_w);
    }
  }
  out.total = *total;
  return out;
}

// ---------------------------------------------------------------------------
// Generic epoch loop with best-checkpoint selection.

struct Snapshot {
  std::vector<std::vector<double>> values;
};

Snapshot snapshot(const PipelineModel& m) {
  Snapshot s;
  for (const auto* p : m.all_parameters()) {
    const auto v = p->tensor.values();
    s.values.emplace_back(v.begin(), v.end());
  }
  return s;
}

void restore(PipelineModel& m, const Snapshot& s) {
  const auto params = m.all_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    num::Tensor t = params[i]->tensor;
    auto dst = t.mutable_values();
    std::copy(s.values[i].begin(), s.values[i].end(), dst.begin());
  }
}

struct Groups {
  std::vector<num::ParamGroup> groups;
  double reported_lr = 0.0;
};

void evaluate_dev(PipelineModel& m, const data::Corpus& corpus, Stage stage, const TrainConfig& cfg,
                  EpochRecord& rec) {
  if (stage == Stage::pretrain_visual) {
    std::vector<std::vector<std::string>> hyps, refs;
    const auto predictions = predict_glosses(m, corpus.dev, std::nullopt);
    for (std::size_t i = 0; i < corpus.dev.size(); ++i) {
      hyps.push_back(to_labels(m.glosses, predictions[i]));
      refs.push_back(corpus.dev[i].gloss);
    }
    rec.dev_wer = 100.0 * metrics::corpus_wer(hyps, refs);
    return;
  }
  EvalOptions opts;
  opts.beam_width = cfg.dev_beam_width;
  std::vector<std::string> outputs;
  std::vector<data::Triplet> usable;
  if (stage == Stage::pretrain_translation) {
    std::vector<ctc::GlossSequence> glosses;
    std::vector<std::string> languages;
    for (const auto& s : corpus.dev) {
      if (!known_glosses(m.glosses, s.gloss)) continue;
      glosses.push_back(to_ids(m.glosses, s.gloss));
      languages.push_back(s.language);
      usable.push_back(s);
    }
    outputs = translate_glosses(m, glosses, languages, opts);
  } else {
    for (const auto& s : corpus.dev) {
      if (s.features.frames() >= 4) usable.push_back(s);
    }
    outputs = translate_videos(m, usable, opts);
  }
  std::vector<metrics::Tokens> hyps, refs;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    hyps.push_back(translation::split_words(outputs[i]));
    refs.push_back(translation::split_words(usable[i].text));
  }
  rec.dev_bleu4 = metrics::bleu(hyps, refs, 4);
}

bool improves(const EpochRecord& rec, const std::optional<EpochRecord>& best) {
  if (!best) return true;
  if (rec.dev_wer) return *rec.dev_wer < *best->dev_wer;
  return *rec.dev_bleu4 > *best->dev_bleu4;
}

TrainResult run_stage(PipelineModel model, const data::Corpus& corpus, const TrainConfig& cfg, Groups groups,
                      const Logger& log) {
  const Stage stage = cfg.stage;
  const int epochs = cfg.effective_epochs();
  TrainResult result{std::move(model), {}, 0, 0};
  auto& m = result.model;
  if (m.translation) m.translation->reseed_dropout(derive_seed(cfg.seed, 7));

  num::Adam adam(groups.groups, {.weight_decay = cfg.weight_decay});
  num::Rng shuffle_rng(derive_seed(cfg.seed, 5));
  num::Rng augment_rng(derive_seed(cfg.seed, 6));
  SkipTracker skips(log);
  const bool augment = cfg.effective_augment() && stage != Stage::pretrain_translation;
  const std::size_t per_epoch = make_batches(corpus.train, cfg.batch_size, nullptr).size();
  const std::size_t total_steps = per_epoch * static_cast<std::size_t>(std::max(epochs, 0));

  // Epoch 0 scores the initialization so that a run that never improves
  // returns it unchanged.
  std::optional<EpochRecord> best;
  Snapshot best_params;
  std::size_t step = 0;
  for (int epoch = 0; epoch <= epochs; ++epoch) {
    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch;
    if (epoch > 0) {
      double loss_sum = 0.0, ctc_sum = 0.0, ce_sum = 0.0;
      std::size_t n = 0;
      for (const auto& batch : make_batches(corpus.train, cfg.batch_size, &shuffle_rng)) {
        BatchContext ctx{m, cfg, stage, true, augment ? &augment_rng : nullptr, &skips};
        adam.zero_grad();
        auto loss = batch_loss(ctx, corpus.train, batch);
        const double factor = num::cosine_lr(1.0, step++, total_steps);
        rec.lr = groups.reported_lr * factor;
        if (!loss) continue;
        num::backward(loss->total);
        adam.step(factor);
        loss_sum += loss->total.item() * static_cast<double>(loss->samples);
        ctc_sum += loss->ctc * static_cast<double>(loss->samples);
        ce_sum += loss->ce * static_cast<double>(loss->samples);
        n += loss->samples;
      }
      if (n > 0) {
        rec.train_loss = loss_sum / static_cast<double>(n);
        if (stage != Stage::pretrain_translation && (stage == Stage::pretrain_visual || cfg.ctc_weight > 0.0)) {
          rec.train_ctc = ctc_sum / static_cast<double>(n);
        }
        if (stage != Stage::pretrain_visual && (stage == Stage::pretrain_translation || cfg.ce_weight > 0.0)) {
          rec.train_ce = ce_sum / static_cast<double>(n);
        }
      }
      rec.skipped = skips.take_epoch();
    } else {
      rec.lr = groups.reported_lr;
    }
    {
      num::NoGradGuard no_grad;
      evaluate_dev(m, corpus, stage, cfg, rec);
    }
    if (improves(rec, best)) {
      rec.best = true;
      best = rec;
      if (cfg.keep_best) best_params = snapshot(m);
      result.best_epoch = epoch;
    }
    std::ostringstream line;
    line << to_string(stage) << " epoch " << epoch << "/" << epochs;
    if (rec.train_loss) line << " loss " << *rec.train_loss;
    if (rec.dev_wer) line << " dev_wer " << *rec.dev_wer;
    if (rec.dev_bleu4) line << " dev_bleu4 " << *rec.dev_bleu4;
    if (rec.best) line << " *";
    emit(log, line.str());
    result.history.push_back(rec);
  }
  if (cfg.keep_best) restore(m, best_params);
  result.skipped = skips.distinct();
  m.provenance.push_back(to_string(stage));
  return result;
}

void check_stage(const TrainConfig& cfg, Stage expected) {
  cfg.validate();
  if (cfg.stage != expected) {
    throw ConfigError("train config is for stage " + to_string(cfg.stage) + " but " + to_string(expected) +
                      " was requested");
  }
}

// ---------------------------------------------------------------------------
// Little-endian byte helpers for the checkpoint container.

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::size_t end, std::string path) : b_(bytes), end_(end), path_(std::move(path)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) {
      throw CorruptionError("checkpoint " + path_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                            std::to_string(n) + " more bytes)");
    }
  }
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

std::vector<num::ParameterStore*> stores(PipelineModel& m) {
  std::vector<num::ParameterStore*> out;
  if (m.visual) out.push_back(&m.visual->params());
  if (m.mapper) out.push_back(&m.mapper->params());
  if (m.translation) out.push_back(&m.translation->params());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::pretrain_visual: return "pretrain_visual";
    case Stage::pretrain_translation: return "pretrain_translation";
    case Stage::train_joint: return "train_joint";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  for (auto s : {Stage::pretrain_visual, Stage::pretrain_translation, Stage::train_joint}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + name + "'; valid stages: pretrain_visual, pretrain_translation, train_joint");
}

int default_epochs(Stage stage) { return stage == Stage::train_joint ? 40 : 80; }

void TrainConfig::validate() const {
  if (epochs && *epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_visual >= 0.0) || !(lr_translation >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(ctc_weight >= 0.0) || !(ce_weight >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (stage == Stage::train_joint && ctc_weight == 0.0 && ce_weight == 0.0) {
    throw ConfigError("joint training needs ctc_weight > 0 or ce_weight > 0");
  }
  if (dev_beam_width < 1) throw ConfigError("dev_beam_width must be >= 1");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  Json j;
  j["stage"] = to_string(c.stage);
  j["epochs"] = c.effective_epochs();
  j["batch_size"] = c.batch_size;
  j["lr_visual"] = c.lr_visual;
  j["lr_translation"] = c.lr_translation;
  j["weight_decay"] = c.weight_decay;
  j["schedule"] = "cosine";
  j["ctc_weight"] = c.ctc_weight;
  j["ce_weight"] = c.ce_weight;
  j["freeze_backbone"] = c.freeze_backbone;
  j["augment"] = c.effective_augment();
  j["dev_beam_width"] = c.dev_beam_width;
  j["keep_best"] = c.keep_best;
  j["seed"] = c.seed;
  return j;
}

void read(const nlohmann::json& j, TrainConfig& c, const std::string& where) {
  config::ObjectReader r(j, where);
  if (r.has("stage")) {
    std::string s;
    r.field("stage", s);
    c.stage = stage_from_string(s);
  }
  if (r.has("epochs")) {
    int e = 0;
    r.field("epochs", e);
    c.epochs = e;
  }
  r.field("batch_size", c.batch_size);
  r.field("lr_visual", c.lr_visual);
  r.field("lr_translation", c.lr_translation);
  r.field("weight_decay", c.weight_decay);
  if (r.has("schedule")) {
    std::string s;
    r.field("schedule", s);
    if (s != "cosine") throw ConfigError(where + ".schedule: only 'cosine' is supported");
  }
  r.field("ctc_weight", c.ctc_weight);
  r.field("ce_weight", c.ce_weight);
  r.field("freeze_backbone", c.freeze_backbone);
  if (r.has("augment")) {
    bool a = false;
    r.field("augment", a);
    c.augment = a;
  }
  r.field("dev_beam_width", c.dev_beam_width);
  r.field("keep_best", c.keep_best);
  r.field("seed", c.seed);
  r.finish();
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  Json j;
  j["visual"] = config::to_json(c.visual);
  j["translation"] = config::to_json(c.translation);
  j["mapper"] = config::to_json(c.mapper);
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& where) {
  ModelConfig c;
  config::ObjectReader r(j, where);
  if (r.has("visual")) {
    r.seen("visual");
    config::read(r.at("visual"), c.visual, where + ".visual");
  }
  if (r.has("translation")) {
    r.seen("translation");
    config::read(r.at("translation"), c.translation, where + ".translation");
  }
  if (r.has("mapper")) {
    r.seen("mapper");
    config::read(r.at("mapper"), c.mapper, where + ".mapper");
  }
  r.finish();
  return c;
}

// ---------------------------------------------------------------------------

bool PipelineModel::supports(Task task) const {
  try {
    require(task);
    return true;
  } catch (const CheckpointRequiredError&) {
    return false;
  }
}

void PipelineModel::require(Task task) const {
  auto need = [&](bool present, bool trained, const char* part) {
    if (!present) {
      throw CheckpointRequiredError("task " + metrics::to_string(task) + " needs the " + part +
                                    " component, which this model does not contain");
    }
    if (!trained) {
      throw CheckpointRequiredError("task " + metrics::to_string(task) + " needs a trained " + part + " component");
    }
  };
  const bool needs_visual = task != Task::gloss2text;
  const bool needs_translation = task != Task::sign2gloss;
  if (needs_visual) need(visual.has_value(), visual && visual->trained(), "visual encoder");
  if (task == Task::sign2text) need(mapper.has_value(), mapper.has_value(), "visual-language mapper");
  if (needs_translation) need(translation.has_value(), translation && translation->trained(), "translation");
}

int PipelineModel::language_index(const std::string& tag) const {
  const auto& tags = text.language_tags();
  auto it = std::find(tags.begin(), tags.end(), tag);
  if (it == tags.end()) throw VocabularyError("language " + tag + " is not in the text vocabulary");
  return static_cast<int>(it - tags.begin());
}

std::vector<const num::Parameter*> PipelineModel::all_parameters() const {
  std::vector<const num::Parameter*> out;
  auto add = [&](const num::ParameterStore& s) {
    for (const auto* p : s.all()) out.push_back(p);
  };
  if (visual) add(visual->params());
  if (mapper) add(mapper->params());
  if (translation) add(translation->params());
  return out;
}

nlohmann::ordered_json EpochRecord::to_json() const {
  Json j;
  j["stage"] = pipeline::to_string(stage);
  j["epoch"] = epoch;
  if (train_loss) j["train_loss"] = *train_loss;
  if (train_ctc) j["train_ctc"] = *train_ctc;
  if (train_ce) j["train_ce"] = *train_ce;
  if (dev_wer) j["dev_wer"] = *dev_wer;
  if (dev_bleu4) j["dev_bleu4"] = *dev_bleu4;
  j["lr"] = lr;
  j["best"] = best;
  j["skipped"] = skipped;
  return j;
}

// ---------------------------------------------------------------------------

PipelineModel initial_model(const data::Corpus& corpus, const ModelConfig& model_config, const TrainConfig& cfg) {
  cfg.validate();
  check_split(corpus.train, "train");
  PipelineModel m;
  m.glosses = build_gloss_vocab(corpus);
  m.config = model_config;
  if (cfg.stage == Stage::pretrain_visual) {
    m.config.visual = resolve_visual(model_config.visual, m.glosses, feature_dim(corpus));
    m.config.visual.freeze_backbone = false;
    m.visual.emplace(m.config.visual, derive_seed(cfg.seed, 1));
  } else if (cfg.stage == Stage::pretrain_translation) {
    m.text = build_text_vocab(corpus);
    m.config.translation.validate();
    m.translation.emplace(m.config.translation, static_cast<std::size_t>(m.glosses.size()) + 1, m.text.size(),
                          m.text.language_tags().size(), derive_seed(cfg.seed, 2));
  } else {
    throw ArgumentError("joint training starts from pretrained models, not from a fresh initialization");
  }
  return m;
}

TrainResult pretrain_visual(const data::Corpus& corpus, const ModelConfig& model_config, const TrainConfig& cfg,
                            const Logger& log) {
  check_stage(cfg, Stage::pretrain_visual);
  check_split(corpus.dev, "dev");
  auto m = initial_model(corpus, model_config, cfg);
  Groups g{{{m.visual->params().trainable_tensors(), cfg.lr_visual}}, cfg.lr_visual};
  auto result = run_stage(std::move(m), corpus, cfg, std::move(g), log);
  result.model.visual->mark_trained();
  return result;
}

TrainResult pretrain_translation(const data::Corpus& corpus, const ModelConfig& model_config,
                                 const TrainConfig& cfg, const Logger& log) {
  check_stage(cfg, Stage::pretrain_translation);
  check_split(corpus.dev, "dev");
  auto m = initial_model(corpus, model_config, cfg);
  Groups g{{{m.translation->params().trainable_tensors(), cfg.lr_translation}}, cfg.lr_translation};
  auto result = run_stage(std::move(m), corpus, cfg, std::move(g), log);
  result.model.translation->mark_trained();
  return result;
}

TrainResult train_joint(const data::Corpus& corpus, const ModelConfig& model_config, const TrainConfig& cfg,
                        JointInit init, const Logger& log) {
  check_stage(cfg, Stage::train_joint);
  check_split(corpus.train, "train");
  check_split(corpus.dev, "dev");
  if (!init.allow_scratch && (!init.visual || !init.translation)) {
    throw PipelineOrderError(std::string("joint training needs a pretrained ") +
                             (!init.visual ? "visual encoder" : "translation model") +
                             " checkpoint; pass both initializations or explicitly allow training from scratch");
  }
  if (init.visual && !init.visual->visual) {
    throw PipelineOrderError("the visual initialization does not contain a visual encoder");
  }
  if (init.translation && !init.translation->translation) {
    throw PipelineOrderError("the translation initialization does not contain a translation model");
  }

  PipelineModel m;
  m.config = model_config;
  if (init.visual && init.translation && !(init.visual->glosses == init.translation->glosses)) {
    throw ConfigError("visual and translation checkpoints were trained with different gloss vocabularies");
  }
  m.glosses = init.visual ? init.visual->glosses : init.translation ? init.translation->glosses
                                                                    : build_gloss_vocab(corpus);
  m.text = init.translation ? init.translation->text : build_text_vocab(corpus);
  if (init.visual) {
    m.provenance = init.visual->provenance;
    m.config.visual = init.visual->config.visual;
  } else {
    m.config.visual = resolve_visual(model_config.visual, m.glosses, feature_dim(corpus));
    emit(log, "warning: joint training starts the visual encoder from scratch");
  }
  if (init.translation) {
    for (const auto& p : init.translation->provenance) m.provenance.push_back(p);
    m.config.translation = init.translation->config.translation;
  } else {
    m.config.translation.validate();
    emit(log, "warning: joint training starts the translation model from scratch");
  }
  if (feature_dim(corpus) != m.config.visual.d_in) {
    throw ConfigError("corpus features have width " + std::to_string(feature_dim(corpus)) +
                      " but the visual encoder expects " + std::to_string(m.config.visual.d_in));
  }
  // Dimension checks run before any parameter is touched.
  m.config.mapper = resolve_mapper(model_config.mapper, m.config.visual, m.config.translation);
  m.config.visual.freeze_backbone = cfg.freeze_backbone;

  if (init.visual) {
    m.visual.emplace(std::move(*init.visual->visual));
  } else {
    m.visual.emplace(m.config.visual, derive_seed(cfg.seed, 1));
  }
  m.visual->set_freeze_backbone(cfg.freeze_backbone);
  if (init.translation) {
    m.translation.emplace(std::move(*init.translation->translation));
  } else {
    m.translation.emplace(m.config.translation, static_cast<std::size_t>(m.glosses.size()) + 1, m.text.size(),
                          m.text.language_tags().size(), derive_seed(cfg.seed, 2));
  }
  m.mapper.emplace(m.config.mapper, derive_seed(cfg.seed, 3));
  if (m.config.mapper.init_from_embedding) m.mapper->init_from_embedding(m.translation->source_embedding());

  auto visual_params = m.visual->params().trainable_tensors();
  for (auto& t : m.mapper->params().trainable_tensors()) visual_params.push_back(t);
  Groups g{{{visual_params, cfg.lr_visual}, {m.translation->params().trainable_tensors(), cfg.lr_translation}},
           cfg.lr_translation};
  auto result = run_stage(std::move(m), corpus, cfg, std::move(g), log);
  result.model.visual->mark_trained();
  result.model.translation->mark_trained();
  return result;
}

LossBreakdown dataset_loss(PipelineModel& model, const std::vector<data::Triplet>& samples,
                           const TrainConfig& config) {
  num::NoGradGuard no_grad;
  BatchContext ctx{model, config, config.stage, false, nullptr, nullptr};
  LossBreakdown out;
  std::size_t n = 0;
  for (const auto& batch : make_batches(samples, config.batch_size, nullptr)) {
    auto loss = batch_loss(ctx, samples, batch);
    if (!loss) continue;
    const auto w = static_cast<double>(loss->samples);
    out.total += loss->total.item() * w;
    out.ctc += loss->ctc * w;
    out.ce += loss->ce * w;
    n += loss->samples;
  }
  if (n == 0) throw UndefinedError("no usable samples to compute a loss on");
  out.total /= static_cast<double>(n);
  out.ctc /= static_cast<double>(n);
  out.ce /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kEvalChunk = 16;

std::vector<ctc::GlossPosterior> gloss_posteriors(PipelineModel& m, const std::vector<data::Triplet>& samples) {
  num::NoGradGuard no_grad;
  std::vector<ctc::GlossPosterior> out;
  for (std::size_t b = 0; b < samples.size(); b += kEvalChunk) {
    std::vector<visual::VideoFeatures> videos;
    for (std::size_t i = b; i < std::min(samples.size(), b + kEvalChunk); ++i) videos.push_back(samples[i].features);
    for (auto& p : m.visual->forward(videos, visual::Mode::eval).posteriors()) out.push_back(std::move(p));
  }
  return out;
}

ctc::GlossSequence decode(const ctc::GlossPosterior& post, std::optional<int> width) {
  return width ? ctc::ctc_beam_decode(post, *width) : ctc::ctc_greedy_decode(post);
}

double wer_percent(const ctc::GlossVocab& vocab, const std::vector<ctc::GlossPosterior>& posts,
                   const std::vector<data::Triplet>& samples, std::optional<int> width) {
  std::vector<std::vector<std::string>> hyps, refs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    hyps.push_back(to_labels(vocab, decode(posts[i], width)));
    refs.push_back(samples[i].gloss);
  }
  return 100.0 * metrics::corpus_wer(hyps, refs);
}

std::vector<data::Triplet> decodable(const std::vector<data::Triplet>& samples, std::size_t& skipped) {
  std::vector<data::Triplet> out;
  for (const auto& s : samples) {
    if (s.features.frames() >= 4) {
      out.push_back(s);
    } else {
      ++skipped;
    }
  }
  return out;
}

// Chooses the CTC width on dev unless one is fixed.
std::pair<int, std::string> choose_ctc_width(PipelineModel& m, const data::Corpus& corpus,
                                             const EvalOptions& options) {
  if (options.ctc_beam_width) {
    if (*options.ctc_beam_width < 1) throw ArgumentError("CTC beam width must be >= 1");
    return {*options.ctc_beam_width, "fixed"};
  }
  std::size_t ignored = 0;
  const auto dev = decodable(corpus.dev, ignored);
  if (dev.empty()) throw EvaluationError("the CTC beam width sweep needs a non-empty dev split");
  const auto posts = gloss_posteriors(m, dev);
  int best_width = 1;
  double best = INFINITY;
  for (int w = 1; w <= 10; ++w) {
    const double wer = wer_percent(m.glosses, posts, dev, w);
    if (wer < best) best = wer, best_width = w;
  }
  return {best_width, "dev_sweep"};
}

translation::BeamOptions beam_options(const PipelineModel& m, const EvalOptions& options) {
  if (options.beam_width < 1) throw ArgumentError("beam width must be >= 1");
  if (!(options.length_penalty >= 0.0)) throw ArgumentError("length penalty must be >= 0");
  translation::BeamOptions b;
  b.width = options.beam_width;
  b.alpha = options.length_penalty;
  b.max_len = options.max_output_len;
  b.banned = banned_tokens(m.text);
  return b;
}

}  // namespace

std::vector<ctc::GlossSequence> predict_glosses(PipelineModel& m, const std::vector<data::Triplet>& samples,
                                                std::optional<int> ctc_beam_width) {
  if (!m.visual) throw CheckpointRequiredError("gloss prediction needs the visual encoder component");
  std::vector<ctc::GlossSequence> out;
  for (const auto& post : gloss_posteriors(m, samples)) out.push_back(decode(post, ctc_beam_width));
  return out;
}

std::vector<std::string> translate_glosses(PipelineModel& m, const std::vector<ctc::GlossSequence>& glosses,
                                           const std::vector<std::string>& languages, const EvalOptions& options) {
  if (!m.translation) throw CheckpointRequiredError("translation needs the translation component");
  if (glosses.size() != languages.size()) throw ArgumentError("one language tag per gloss sequence is required");
  num::NoGradGuard no_grad;
  const auto beam = beam_options(m, options);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < glosses.size(); ++i) {
    auto memory = m.translation->encode(m.translation->embed_glosses({glosses[i]}, m.language_index(languages[i])),
                                        translation::Mode::eval);
    const auto hyp = translation::beam_translate(*m.translation, memory, m.bos_token(languages[i]), beam);
    out.push_back(m.text.detokenize(hyp.tokens));
  }
  return out;
}

std::vector<std::string> translate_videos(PipelineModel& m, const std::vector<data::Triplet>& samples,
                                          const EvalOptions& options) {
  if (!m.visual || !m.mapper || !m.translation) {
    throw CheckpointRequiredError("video translation needs the visual encoder, mapper and translation components");
  }
  num::NoGradGuard no_grad;
  const auto beam = beam_options(m, options);
  std::vector<std::string> out;
  for (std::size_t b = 0; b < samples.size(); b += kEvalChunk) {
    const std::size_t e = std::min(samples.size(), b + kEvalChunk);
    std::vector<visual::VideoFeatures> videos;
    for (std::size_t i = b; i < e; ++i) videos.push_back(samples[i].features);
    const auto vis = m.visual->forward(videos, visual::Mode::eval);
    const auto mapped = m.mapper->map(mapper::select_visual_feature(vis, m.config.mapper.input_kind));
    std::size_t off = 0;
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t len = vis.lengths[i - b];
      const auto rows = num::slice_rows(mapped, off, off + len);
      off += len;
      const std::size_t lengths[] = {len};
      const auto& lang = samples[i].language;
      auto memory = m.translation->encode(m.translation->embed_frames(rows, lengths, m.language_index(lang)),
                                          translation::Mode::eval);
      const auto hyp = translation::beam_translate(*m.translation, memory, m.bos_token(lang), beam);
      out.push_back(m.text.detokenize(hyp.tokens));
    }
  }
  return out;
}

metrics::EvalReport evaluate(PipelineModel& m, const data::Corpus& corpus, Task task, const std::string& split,
                             const EvalOptions& options) {
  m.require(task);
  if (split != "dev" && split != "test") throw ArgumentError("split must be dev or test, got '" + split + "'");
  const auto& samples = split == "dev" ? corpus.dev : corpus.test;
  metrics::EvalReport report;
  report.task = task;
  report.split = split;

  if (task == Task::sign2gloss) {
    const auto [width, source] = choose_ctc_width(m, corpus, options);
    const auto usable = decodable(samples, report.skipped);
    report.n_samples = usable.size();
    report.wer = wer_percent(m.glosses, gloss_posteriors(m, usable), usable, width);
    report.decoding.ctc_beam_width = width;
    report.decoding.ctc_beam_width_source = source;
    return report;
  }

  std::vector<data::Triplet> usable;
  std::vector<std::string> outputs;
  if (task == Task::gloss2text) {
    std::vector<ctc::GlossSequence> glosses;
    std::vector<std::string> languages;
    for (const auto& s : samples) {
      if (!known_glosses(m.glosses, s.gloss)) {
        ++report.skipped;
        continue;
      }
      glosses.push_back(to_ids(m.glosses, s.gloss));
      languages.push_back(s.language);
      usable.push_back(s);
    }
    outputs = translate_glosses(m, glosses, languages, options);
  } else if (task == Task::sign2gloss2text) {
    const auto [width, source] = choose_ctc_width(m, corpus, options);
    usable = decodable(samples, report.skipped);
    std::vector<std::string> languages;
    for (const auto& s : usable) languages.push_back(s.language);
    outputs = translate_glosses(m, predict_glosses(m, usable, width), languages, options);
    report.decoding.ctc_beam_width = width;
    report.decoding.ctc_beam_width_source = source;
  } else {
    usable = decodable(samples, report.skipped);
    outputs = translate_videos(m, usable, options);
  }
  std::vector<metrics::Tokens> hyps, refs;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    hyps.push_back(translation::split_words(outputs[i]));
    refs.push_back(translation::split_words(usable[i].text));
  }
  report.n_samples = usable.size();
  report.bleu = metrics::bleu_1_to_4(hyps, refs);
  report.rouge = metrics::rouge_l(hyps, refs);
  report.decoding.beam_width = options.beam_width;
  report.decoding.length_penalty = options.length_penalty;
  return report;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const PipelineModel& m, const std::string& path) {
  std::string out("SLTC");
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto params = m.all_parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  Json trainable = Json::object();
  for (const auto* p : params) {
    if (p->name.size() > 0xffff) throw ArgumentError("parameter name too long: " + p->name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
    out += p->name;
    const auto& shape = p->tensor.shape();
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p->tensor.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    trainable[p->name] = p->trainable;
  }
  Json trailer;
  trailer["model_config"] = to_json(m.config);
  trailer["glosses"] = m.glosses.labels();
  trailer["text_vocab"] = m.text.size() > 0 ? m.text.lines() : std::vector<std::string>{};
  trailer["provenance"] = m.provenance;
  Json parts = Json::object();
  if (m.visual) parts["visual"] = {{"trained", m.visual->trained()}};
  if (m.mapper) parts["mapper"] = {{"trained", true}};
  if (m.translation) {
    parts["translation"] = {{"trained", m.translation->trained()},
                            {"src_vocab", m.translation->src_vocab_size()},
                            {"tgt_vocab", m.translation->tgt_vocab_size()}};
  }
  trailer["parts"] = parts;
  trailer["trainable"] = trainable;
  const std::string text = trailer.dump();
  put<std::uint64_t>(out, text.size());
  out += text;
  put<std::uint32_t>(out, crc_of(out, out.size()));

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write checkpoint " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to checkpoint " + path);
}

PipelineModel load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << file.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 12) {
    throw CorruptionError("checkpoint " + path + ": " + std::to_string(bytes.size()) +
                          " bytes is too short for the header");
  }
  if (bytes.compare(0, 4, "SLTC") != 0) throw CorruptionError("checkpoint " + path + ": bad magic");
  {
    Cursor head(bytes, 8, path);
    head.bytes(4);
    const auto version = head.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
      throw UnsupportedVersionError("checkpoint " + path + ": unsupported version " + std::to_string(version) +
                                    " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
    }
  }
  const std::size_t body = bytes.size() - 4;
  Cursor crc_cursor(bytes, bytes.size(), path);
  crc_cursor.bytes(body);
  if (crc_cursor.get<std::uint32_t>() != crc_of(bytes, body)) {
    throw CorruptionError("checkpoint " + path + ": checksum mismatch (file is truncated or damaged)");
  }

  Cursor c(bytes, body, path);
  c.bytes(8);
  const auto count = c.get<std::uint32_t>();
  struct Raw {
    num::Shape shape;
    std::vector<double> values;
  };
  std::map<std::string, Raw> tensors;
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = c.bytes(c.get<std::uint16_t>());
    Raw raw;
    const auto rank = c.get<std::uint8_t>();
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      raw.shape.push_back(c.get<std::uint32_t>());
      n *= raw.shape.back();
    }
    if (n > (body - c.pos()) / 8) throw CorruptionError("checkpoint " + path + ": tensor " + name + " overruns the file");
    raw.values.resize(n);
    for (auto& v : raw.values) v = std::bit_cast<double>(c.get<std::uint64_t>());
    if (!tensors.emplace(name, std::move(raw)).second) {
      throw CorruptionError("checkpoint " + path + ": duplicate tensor " + name);
    }
    order.push_back(name);
  }
  const auto trailer_len = c.get<std::uint64_t>();
  if (trailer_len != body - c.pos()) {
    throw CorruptionError("checkpoint " + path + ": trailer length " + std::to_string(trailer_len) + " but " +
                          std::to_string(body - c.pos()) + " bytes remain");
  }
  const auto trailer_text = c.bytes(static_cast<std::size_t>(trailer_len));

  PipelineModel m;
  try {
    const auto trailer = nlohmann::json::parse(trailer_text);
    m.config = model_config_from_json(trailer.at("model_config"), "checkpoint.model_config");
    m.glosses = ctc::GlossVocab(trailer.at("glosses").get<std::vector<std::string>>());
    const auto lines = trailer.at("text_vocab").get<std::vector<std::string>>();
    if (!lines.empty()) m.text = translation::TextVocab::from_lines(lines);
    m.provenance = trailer.at("provenance").get<std::vector<std::string>>();
    const auto& parts = trailer.at("parts");
    if (parts.contains("visual")) {
      m.visual.emplace(m.config.visual, 0);
      if (parts["visual"].at("trained").get<bool>()) m.visual->mark_trained();
    }
    if (parts.contains("mapper")) m.mapper.emplace(m.config.mapper, 0);
    if (parts.contains("translation")) {
      const auto& t = parts["translation"];
      m.translation.emplace(m.config.translation, t.at("src_vocab").get<std::size_t>(),
                            t.at("tgt_vocab").get<std::size_t>(), m.text.language_tags().size(), 0);
      if (t.at("trained").get<bool>()) m.translation->mark_trained();
    }
    std::set<std::string> expected;
    for (auto* store : stores(m)) {
      for (const auto* p : store->all()) expected.insert(p->name);
    }
    for (const auto& name : order) {
      if (!expected.count(name)) throw CorruptionError("checkpoint " + path + ": unexpected tensor " + name);
    }
    const auto& trainable = trailer.at("trainable");
    for (auto* store : stores(m)) {
      for (const auto* p : store->all()) {
        auto it = tensors.find(p->name);
        if (it == tensors.end()) throw CorruptionError("checkpoint " + path + ": missing tensor " + p->name);
        if (it->second.shape != p->tensor.shape()) {
          throw CorruptionError("checkpoint " + path + ": tensor " + p->name + " has shape " +
                                num::shape_string(it->second.shape) + ", expected " +
                                num::shape_string(p->tensor.shape()));
        }
      }
      for (const auto* p : store->all()) {
        const std::string name = p->name;
        store->assign(name, tensors.at(name).values);
        if (!p->buffer && trainable.contains(name)) store->set_trainable(name, trainable[name].get<bool>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("checkpoint " + path + ": malformed trailer: " + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError("checkpoint " + path + ": invalid configuration: " + e.what());
  } catch (const VocabularyError& e) {
    throw CorruptionError("checkpoint " + path + ": invalid vocabulary: " + e.what());
  } catch (const ParseError& e) {
    throw CorruptionError("checkpoint " + path + ": " + e.what());
  }
  return m;
}

}  // namespace slt::pipeline
