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

#include "slt/translation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "slt/error.hpp"

namespace slt::translation {

namespace {

bool looks_like_language_tag(const std::string& s) {
  static const std::regex tag("^[a-z]{2}_[A-Z]{2}$");
  return std::regex_match(s, tag);
}

num::Tensor xavier(std::size_t fan_in, std::size_t fan_out, num::Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return num::Tensor::uniform({fan_in, fan_out}, bound, rng);
}

}  // namespace

std::vector<std::string> split_words(const std::string& raw) {
  std::vector<std::string> out;
  std::istringstream in(raw);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------

TextVocab::TextVocab(std::vector<std::string> language_tags, std::vector<std::string> tokens)
    : tags_(std::move(language_tags)) {
  entries_ = {kPadToken, kUnkToken, kEosToken};
  for (const auto& t : tags_) {
    if (!looks_like_language_tag(t)) throw VocabularyError("malformed language tag: " + t);
    entries_.push_back(t);
  }
  for (auto& t : tokens) entries_.push_back(std::move(t));
  index();
}

void TextVocab::index() {
  ids_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].empty() || entries_[i].find_first_of(" \t\n\r") != std::string::npos) {
      throw VocabularyError("vocabulary entry " + std::to_string(i) + " is empty or contains whitespace");
    }
    if (!ids_.emplace(entries_[i], static_cast<int>(i)).second) {
      throw VocabularyError("duplicate vocabulary entry: " + entries_[i]);
    }
  }
}

TextVocab TextVocab::build(const std::vector<std::string>& sentences, std::vector<std::string> language_tags) {
  std::vector<std::string> words;
  for (const auto& s : sentences) {
    for (auto& w : split_words(s)) words.push_back(std::move(w));
  }
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  std::erase_if(words, [&](const std::string& w) {
    return w == kPadToken || w == kUnkToken || w == kEosToken ||
           std::find(language_tags.begin(), language_tags.end(), w) != language_tags.end();
  });
  return TextVocab(std::move(language_tags), std::move(words));
}

TextVocab TextVocab::from_lines(const std::vector<std::string>& lines) {
  if (lines.size() < 3 || lines[0] != kPadToken || lines[1] != kUnkToken || lines[2] != kEosToken) {
    throw ParseError("vocabulary must start with <pad>, <unk>, </s>");
  }
  std::vector<std::string> tags, tokens;
  std::size_t i = 3;
  for (; i < lines.size() && looks_like_language_tag(lines[i]); ++i) tags.push_back(lines[i]);
  for (; i < lines.size(); ++i) tokens.push_back(lines[i]);
  return TextVocab(std::move(tags), std::move(tokens));
}

std::vector<std::string> TextVocab::lines() const { return entries_; }

TextVocab TextVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return from_lines(lines);
}

void TextVocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  for (const auto& e : entries_) out << e << '\n';
}

int TextVocab::language_id(const std::string& tag) const {
  auto it = std::find(tags_.begin(), tags_.end(), tag);
  if (it == tags_.end()) throw VocabularyError("unknown language tag: " + tag);
  return 3 + static_cast<int>(it - tags_.begin());
}

bool TextVocab::is_special(int id) const { return id >= 0 && id < 3 + static_cast<int>(tags_.size()); }

const std::string& TextVocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " out of range");
  }
  return entries_[static_cast<std::size_t>(id)];
}

int TextVocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> TextVocab::tokenize(const std::string& raw) const {
  std::vector<int> out;
  for (const auto& w : split_words(raw)) out.push_back(id(w));
  return out;
}

std::string TextVocab::detokenize(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (is_special(i)) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

// ---------------------------------------------------------------------------

void TranslationConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (layers_enc == 0 || layers_dec == 0) throw ConfigError("translation needs at least one layer each side");
  if (d_ff == 0 || max_len < 2) throw ConfigError("d_ff must be positive and max_len >= 2");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label_smoothing must lie in [0, 1)");
}

TranslationModel::Attention TranslationModel::make_attention(const std::string& p, num::Rng& rng) {
  const std::size_t d = config_.d_model;
  Attention a;
  a.wq = params_.add(p + ".q.weight", xavier(d, d, rng));
  a.bq = params_.add(p + ".q.bias", num::Tensor::zeros({d}));
  a.wk = params_.add(p + ".k.weight", xavier(d, d, rng));
  a.bk = params_.add(p + ".k.bias", num::Tensor::zeros({d}));
  a.wv = params_.add(p + ".v.weight", xavier(d, d, rng));
  a.bv = params_.add(p + ".v.bias", num::Tensor::zeros({d}));
  a.wo = params_.add(p + ".out.weight", xavier(d, d, rng));
  a.bo = params_.add(p + ".out.bias", num::Tensor::zeros({d}));
  return a;
}

TranslationModel::Norm TranslationModel::make_norm(const std::string& p) {
  return {params_.add(p + ".weight", num::Tensor::full({config_.d_model}, 1.0)),
          params_.add(p + ".bias", num::Tensor::zeros({config_.d_model}))};
}

TranslationModel::Ffn TranslationModel::make_ffn(const std::string& p, num::Rng& rng) {
  const std::size_t d = config_.d_model, f = config_.d_ff;
  return {params_.add(p + ".fc1.weight", xavier(d, f, rng)), params_.add(p + ".fc1.bias", num::Tensor::zeros({f})),
          params_.add(p + ".fc2.weight", xavier(f, d, rng)), params_.add(p + ".fc2.bias", num::Tensor::zeros({d}))};
}

TranslationModel::TranslationModel(TranslationConfig config, std::size_t src_vocab, std::size_t tgt_vocab,
                                   std::size_t num_languages, std::uint64_t seed)
    : config_(config), src_vocab_(src_vocab), tgt_vocab_(tgt_vocab), num_languages_(num_languages),
      dropout_rng_(seed ^ 0xd1b54a32d192ed03ULL) {
  config_.validate();
  if (src_vocab < 2 || tgt_vocab < 4 || num_languages < 1) {
    throw ConfigError("translation vocabularies too small");
  }
  num::Rng rng(seed);
  const std::size_t d = config_.d_model;
  const double emb_sd = 1.0 / std::sqrt(static_cast<double>(d));
  src_embed_ = params_.add("translation.src_embed", num::Tensor::randn({src_vocab, d}, emb_sd, rng),
                           !config_.freeze_src_embedding);
  src_lang_ = params_.add("translation.src_lang_embed", num::Tensor::randn({num_languages, d}, emb_sd, rng));
  tgt_embed_ = params_.add("translation.tgt_embed", num::Tensor::randn({tgt_vocab, d}, emb_sd, rng),
                           !config_.freeze_tgt_embedding);
  src_pos_ = params_.add("translation.src_pos", num::Tensor::randn({config_.max_len, d}, emb_sd, rng));
  tgt_pos_ = params_.add("translation.tgt_pos", num::Tensor::randn({config_.max_len, d}, emb_sd, rng));
  for (std::size_t i = 0; i < config_.layers_enc; ++i) {
    const std::string p = "translation.encoder.layer" + std::to_string(i);
    EncoderLayer layer;
    layer.ln1 = make_norm(p + ".ln1");
    layer.self = make_attention(p + ".self_attn", rng);
    layer.ln2 = make_norm(p + ".ln2");
    layer.ffn = make_ffn(p + ".ffn", rng);
    enc_.push_back(std::move(layer));
  }
  enc_final_ = make_norm("translation.encoder.final_ln");
  for (std::size_t i = 0; i < config_.layers_dec; ++i) {
    const std::string p = "translation.decoder.layer" + std::to_string(i);
    DecoderLayer layer;
    layer.ln1 = make_norm(p + ".ln1");
    layer.self = make_attention(p + ".self_attn", rng);
    layer.ln2 = make_norm(p + ".ln2");
    layer.cross = make_attention(p + ".cross_attn", rng);
    layer.ln3 = make_norm(p + ".ln3");
    layer.ffn = make_ffn(p + ".ffn", rng);
    dec_.push_back(std::move(layer));
  }
  dec_final_ = make_norm("translation.decoder.final_ln");
  out_w_ = params_.add("translation.output.weight", xavier(d, tgt_vocab, rng));
  out_b_ = params_.add("translation.output.bias", num::Tensor::zeros({tgt_vocab}));
}

void TranslationModel::import_source_embedding(const num::Tensor& table, bool frozen) {
  if (table.shape() != src_embed_.shape()) {
    throw ConfigError("source embedding " + num::shape_string(table.shape()) + " does not match " +
                      num::shape_string(src_embed_.shape()));
  }
  params_.assign("translation.src_embed", table.values());
  params_.set_trainable("translation.src_embed", !frozen);
  config_.freeze_src_embedding = frozen;
}

void TranslationModel::import_target_embedding(const num::Tensor& table, bool frozen) {
  if (table.shape() != tgt_embed_.shape()) {
    throw ConfigError("target embedding " + num::shape_string(table.shape()) + " does not match " +
                      num::shape_string(tgt_embed_.shape()));
  }
  params_.assign("translation.tgt_embed", table.values());
  params_.set_trainable("translation.tgt_embed", !frozen);
  config_.freeze_tgt_embedding = frozen;
}

num::Tensor TranslationModel::add_positions(const num::Tensor& x, std::span<const std::size_t> lengths) const {
  std::vector<std::size_t> pos;
  pos.reserve(x.dim(0));
  for (auto len : lengths) {
    if (len > config_.max_len) {
      throw DimensionError("sequence of length " + std::to_string(len) + " exceeds max_len " +
                           std::to_string(config_.max_len));
    }
    for (std::size_t i = 0; i < len; ++i) pos.push_back(i);
  }
  return num::add(x, num::gather_rows(src_pos_, pos));
}

EncoderInput TranslationModel::embed_glosses(const std::vector<ctc::GlossSequence>& glosses, int language) const {
  if (language < 0 || static_cast<std::size_t>(language) >= num_languages_) {
    throw VocabularyError("language index " + std::to_string(language) + " out of range");
  }
  std::vector<num::Tensor> parts;
  std::vector<std::size_t> lengths;
  const std::size_t lang = static_cast<std::size_t>(language);
  for (const auto& g : glosses) {
    std::vector<std::size_t> ids;
    for (int id : g) {
      if (id < 1 || static_cast<std::size_t>(id) >= src_vocab_) {
        throw VocabularyError("gloss id " + std::to_string(id) + " outside the source vocabulary");
      }
      ids.push_back(static_cast<std::size_t>(id));
    }
    if (!ids.empty()) parts.push_back(num::gather_rows(src_embed_, ids));
    parts.push_back(num::gather_rows(src_lang_, std::span<const std::size_t>(&lang, 1)));
    lengths.push_back(ids.size() + 1);
  }
  auto packed = num::concat_rows(parts);
  return {add_positions(packed, lengths), lengths, {}};
}

EncoderInput TranslationModel::embed_frames(const num::Tensor& frames, std::span<const std::size_t> lengths,
                                            int language) const {
  if (frames.rank() != 2 || frames.dim(1) != config_.d_model) {
    throw ConfigError("encoder frames must be N x " + std::to_string(config_.d_model) + ", got " +
                      num::shape_string(frames.shape()));
  }
  if (language < 0 || static_cast<std::size_t>(language) >= num_languages_) {
    throw VocabularyError("language index " + std::to_string(language) + " out of range");
  }
  const std::size_t lang = static_cast<std::size_t>(language);
  auto lang_row = num::gather_rows(src_lang_, std::span<const std::size_t>(&lang, 1));
  std::vector<num::Tensor> parts;
  std::vector<std::size_t> out_lengths;
  std::size_t off = 0;
  for (auto len : lengths) {
    parts.push_back(num::slice_rows(frames, off, off + len));
    parts.push_back(lang_row);
    off += len;
    out_lengths.push_back(len + 1);
  }
  if (off != frames.dim(0)) throw DimensionError("frame lengths do not cover the mapper output");
  auto packed = num::concat_rows(parts);
  return {add_positions(packed, out_lengths), out_lengths, {}};
}

num::Tensor TranslationModel::drop(const num::Tensor& x, Mode mode) {
  if (mode != Mode::train || config_.dropout == 0.0) return x;
  return num::dropout(x, config_.dropout, dropout_rng_);
}

num::Tensor TranslationModel::attend(const Attention& a, const num::Tensor& query, const num::Tensor& keys,
                                     const num::AttentionLayout& layout) const {
  auto q = num::linear(query, a.wq, a.bq);
  auto k = num::linear(keys, a.wk, a.bk);
  auto v = num::linear(keys, a.wv, a.bv);
  return num::linear(num::multi_head_attention(q, k, v, config_.heads, layout), a.wo, a.bo);
}

num::Tensor TranslationModel::feed_forward(const Ffn& f, const num::Tensor& x, Mode mode) {
  auto h = drop(num::relu(num::linear(x, f.w1, f.b1)), mode);
  return num::linear(h, f.w2, f.b2);
}

Memory TranslationModel::encode(const EncoderInput& input, Mode mode) {
  if (input.lengths.empty() || input.embeddings.dim(0) == 0) throw EmptySequenceError("encoder input is empty");
  for (auto len : input.lengths) {
    if (len == 0) throw EmptySequenceError("encoder input sequence of length 0");
  }
  if (input.embeddings.dim(1) != config_.d_model) {
    throw DimensionError("encoder input width " + std::to_string(input.embeddings.dim(1)) + " != d_model " +
                         std::to_string(config_.d_model));
  }
  num::AttentionLayout layout{input.lengths, input.lengths, input.key_mask, false};
  auto x = drop(input.embeddings, mode);
  for (const auto& layer : enc_) {
    auto h = num::layer_norm(x, layer.ln1.gamma, layer.ln1.beta);
    x = num::add(x, drop(attend(layer.self, h, h, layout), mode));
    h = num::layer_norm(x, layer.ln2.gamma, layer.ln2.beta);
    x = num::add(x, drop(feed_forward(layer.ffn, h, mode), mode));
  }
  return {num::layer_norm(x, enc_final_.gamma, enc_final_.beta), input.lengths, input.key_mask};
}

num::Tensor TranslationModel::decode(const Memory& memory, std::span<const int> input_ids,
                                     std::span<const std::size_t> lengths, Mode mode) {
  if (lengths.size() != memory.lengths.size()) {
    throw DimensionError("decoder batch of " + std::to_string(lengths.size()) + " against memory batch of " +
                         std::to_string(memory.lengths.size()));
  }
  std::vector<std::size_t> ids, pos;
  for (int id : input_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tgt_vocab_) {
      throw VocabularyError("decoder token id " + std::to_string(id) + " out of range");
    }
    ids.push_back(static_cast<std::size_t>(id));
  }
  std::size_t total = 0;
  for (auto len : lengths) {
    if (len > config_.max_len) throw DimensionError("decoder input exceeds max_len");
    for (std::size_t i = 0; i < len; ++i) pos.push_back(i);
    total += len;
  }
  if (total != ids.size()) throw DimensionError("decoder lengths do not cover the input ids");

  std::vector<std::size_t> dec_lengths(lengths.begin(), lengths.end());
  num::AttentionLayout self_layout{dec_lengths, dec_lengths, {}, true};
  num::AttentionLayout cross_layout{dec_lengths, memory.lengths, memory.key_mask, false};
  auto x = drop(num::add(num::gather_rows(tgt_embed_, ids), num::gather_rows(tgt_pos_, pos)), mode);
  for (const auto& layer : dec_) {
    auto h = num::layer_norm(x, layer.ln1.gamma, layer.ln1.beta);
    x = num::add(x, drop(attend(layer.self, h, h, self_layout), mode));
    h = num::layer_norm(x, layer.ln2.gamma, layer.ln2.beta);
    x = num::add(x, drop(attend(layer.cross, h, memory.states, cross_layout), mode));
    h = num::layer_norm(x, layer.ln3.gamma, layer.ln3.beta);
    x = num::add(x, drop(feed_forward(layer.ffn, h, mode), mode));
  }
  x = num::layer_norm(x, dec_final_.gamma, dec_final_.beta);
  return num::linear(x, out_w_, out_b_);
}

num::Tensor TranslationModel::loss(const Memory& memory, const std::vector<std::vector<int>>& targets, int bos_token,
                                   Mode mode, std::optional<double> label_smoothing) {
  std::vector<int> inputs, outputs;
  std::vector<std::size_t> lengths;
  for (const auto& t : targets) {
    if (t.empty()) throw ArgumentError("degenerate sample: empty target sentence");
    inputs.push_back(bos_token);
    inputs.insert(inputs.end(), t.begin(), t.end());
    outputs.insert(outputs.end(), t.begin(), t.end());
    outputs.push_back(TextVocab::kEos);
    lengths.push_back(t.size() + 1);
  }
  auto logits = decode(memory, inputs, lengths, mode);
  return num::cross_entropy_label_smoothed(logits, outputs, label_smoothing.value_or(config_.label_smoothing),
                                           TextVocab::kPad);
}

// ---------------------------------------------------------------------------

double length_normalized(double log_prob, std::size_t length, double alpha) {
  if (alpha == 0.0 || length == 0) return log_prob;
  return log_prob / std::pow(static_cast<double>(length), alpha);
}

Hypothesis beam_search(const StepFunction& step, const BeamOptions& options) {
  if (options.width < 1) throw ArgumentError("beam width must be >= 1");
  if (options.max_len < 1) throw ArgumentError("max_len must be >= 1");
  const auto width = static_cast<std::size_t>(options.width);

  struct Candidate {
    std::vector<int> tokens;
    double log_prob;
  };
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
  };

  std::vector<Candidate> active{{{}, 0.0}};
  std::vector<Hypothesis> finished;
  bool stopped = false;
  for (std::size_t t = 0; t < options.max_len && !stopped; ++t) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& c : active) prefixes.push_back(c.tokens);
    const auto logp = step(prefixes);
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t v = 0; v < logp[i].size(); ++v) {
        const int tok = static_cast<int>(v);
        if (std::find(options.banned.begin(), options.banned.end(), tok) != options.banned.end()) continue;
        if (!std::isfinite(logp[i][v])) continue;
        Candidate c{active[i].tokens, active[i].log_prob + logp[i][v]};
        c.tokens.push_back(tok);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), better);
    // The best `width` expansions survive; those ending in </s> leave the beam.
    std::vector<Candidate> next;
    for (std::size_t rank = 0; rank < std::min(width, cands.size()); ++rank) {
      auto& c = cands[rank];
      if (c.tokens.back() == options.eos) {
        const std::size_t len = c.tokens.size();
        c.tokens.pop_back();
        finished.push_back({c.tokens, c.log_prob, length_normalized(c.log_prob, len, options.alpha), true});
      } else {
        next.push_back(std::move(c));
      }
    }
    active = std::move(next);
    if (active.empty()) {
      stopped = true;
    } else if (finished.size() >= width) {
      // Log probabilities only fall as a hypothesis grows, so an active
      // hypothesis can at best keep its current mass at some future length.
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& h : finished) best_finished = std::max(best_finished, h.score);
      double best_reachable = -std::numeric_limits<double>::infinity();
      for (const auto& c : active) {
        best_reachable = std::max({best_reachable, length_normalized(c.log_prob, c.tokens.size() + 1, options.alpha),
                                   length_normalized(c.log_prob, options.max_len, options.alpha)});
      }
      stopped = best_finished >= best_reachable;
    }
  }
  if (!stopped) {
    for (const auto& c : active) {
      finished.push_back({c.tokens, c.log_prob, length_normalized(c.log_prob, c.tokens.size(), options.alpha), false});
    }
  }
  if (finished.empty()) throw EvaluationError("beam search produced no hypothesis");
  return *std::min_element(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
}

StepFunction decoder_step(TranslationModel& model, const Memory& memory, int bos_token) {
  if (memory.lengths.size() != 1) throw DimensionError("beam translation decodes one source at a time");
  return [&model, memory, bos_token](const std::vector<std::vector<int>>& prefixes) {
    num::NoGradGuard guard;
    std::vector<int> ids;
    std::vector<std::size_t> lengths;
    std::vector<num::Tensor> mem_parts;
    Memory batch;
    for (const auto& p : prefixes) {
      ids.push_back(bos_token);
      ids.insert(ids.end(), p.begin(), p.end());
      lengths.push_back(p.size() + 1);
      mem_parts.push_back(memory.states);
      batch.lengths.push_back(memory.lengths[0]);
      batch.key_mask.insert(batch.key_mask.end(), memory.key_mask.begin(), memory.key_mask.end());
    }
    batch.states = mem_parts.size() == 1 ? mem_parts[0] : num::concat_rows(mem_parts);
    auto logits = model.decode(batch, ids, lengths, Mode::eval);
    std::vector<std::vector<double>> out;
    std::size_t row = 0;
    for (auto len : lengths) {
      row += len;
      auto last = num::log_softmax(num::slice_rows(logits, row - 1, row));
      out.emplace_back(last.values().begin(), last.values().end());
    }
    return out;
  };
}

Hypothesis beam_translate(TranslationModel& model, const Memory& memory, int bos_token, const BeamOptions& options) {
  BeamOptions opts = options;
  opts.max_len = std::min(opts.max_len, model.config().max_len - 1);
  return beam_search(decoder_step(model, memory, bos_token), opts);
}

}  // namespace slt::translation
