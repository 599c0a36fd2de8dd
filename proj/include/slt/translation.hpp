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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "slt/ctc.hpp"
#include "slt/tensor.hpp"

/// Gloss2Text translation network: whitespace vocabulary, pre-norm
/// encoder-decoder transformer, label-smoothed training loss and beam search.
namespace slt::translation {

/// Spoken-language vocabulary. Id layout: <pad>, <unk>, </s>, then one
/// language-id symbol per tag (e.g. "de_DE"), then ordinary tokens.
class TextVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kEosToken = "</s>";

  TextVocab() = default;
  TextVocab(std::vector<std::string> language_tags, std::vector<std::string> tokens);
  /// Sorted, de-duplicated tokens of `sentences`.
  static TextVocab build(const std::vector<std::string>& sentences, std::vector<std::string> language_tags);

  static TextVocab load(const std::string& path);
  void save(const std::string& path) const;
  /// One token per line; line number is the id.
  static TextVocab from_lines(const std::vector<std::string>& lines);
  std::vector<std::string> lines() const;

  std::size_t size() const { return entries_.size(); }
  int language_id(const std::string& tag) const;
  const std::vector<std::string>& language_tags() const { return tags_; }
  bool is_special(int id) const;
  const std::string& token(int id) const;
  int id(const std::string& token) const;  // <unk> id when absent

  std::vector<int> tokenize(const std::string& raw) const;
  /// Drops special tokens.
  std::string detokenize(std::span<const int> ids) const;

  friend bool operator==(const TextVocab& a, const TextVocab& b) { return a.entries_ == b.entries_; }

 private:
  void index();
  std::vector<std::string> entries_;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> ids_;
};

/// Whitespace split; runs of whitespace collapse.
std::vector<std::string> split_words(const std::string& raw);

struct TranslationConfig {
  std::size_t layers_enc = 2;
  std::size_t layers_dec = 2;
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  double dropout = 0.3;
  double label_smoothing = 0.2;
  std::size_t max_len = 128;  // positional table size
  bool freeze_src_embedding = false;
  bool freeze_tgt_embedding = false;

  void validate() const;
};

enum class Mode { train, eval };

/// Packed batch of source sequences already embedded (with positions).
struct EncoderInput {
  num::Tensor embeddings;  // sum(L) x d_model
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> key_mask;  // optional, 0 marks padding
};

struct Memory {
  num::Tensor states;
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> key_mask;
};

class TranslationModel {
 public:
  TranslationModel(TranslationConfig config, std::size_t src_vocab, std::size_t tgt_vocab,
                   std::size_t num_languages, std::uint64_t seed);
  TranslationModel(const TranslationModel&) = delete;
  TranslationModel& operator=(const TranslationModel&) = delete;
  TranslationModel(TranslationModel&&) = default;
  TranslationModel& operator=(TranslationModel&&) = default;

  const TranslationConfig& config() const { return config_; }
  num::ParameterStore& params() { return params_; }
  const num::ParameterStore& params() const { return params_; }
  std::size_t src_vocab_size() const { return src_vocab_; }
  std::size_t tgt_vocab_size() const { return tgt_vocab_; }

  /// Source embedding table, (K+1) x d_model, indexed by gloss id.
  num::Tensor source_embedding() const { return src_embed_; }
  void import_source_embedding(const num::Tensor& table, bool frozen);
  void import_target_embedding(const num::Tensor& table, bool frozen);

  /// Glosses -> embeddings, then the language-id symbol as the final source
  /// token, then positions.
  EncoderInput embed_glosses(const std::vector<ctc::GlossSequence>& glosses, int language) const;
  /// Frame features already in d_model space (mapper output) + language
  /// symbol + positions.
  EncoderInput embed_frames(const num::Tensor& frames, std::span<const std::size_t> lengths, int language) const;
  /// Adds positional embeddings 0..L-1 to each packed sequence.
  num::Tensor add_positions(const num::Tensor& x, std::span<const std::size_t> lengths) const;

  Memory encode(const EncoderInput& input, Mode mode);
  /// Decoder logits (sum(U) x V) for packed decoder input ids.
  num::Tensor decode(const Memory& memory, std::span<const int> input_ids, std::span<const std::size_t> lengths,
                     Mode mode);

  /// Label-smoothed cross entropy of `targets` given the memory; decoder
  /// input is <lang> s and target is s </s>.
  num::Tensor loss(const Memory& memory, const std::vector<std::vector<int>>& targets, int bos_token,
                   Mode mode, std::optional<double> label_smoothing = std::nullopt);

  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  struct Attention {
    num::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Norm {
    num::Tensor gamma, beta;
  };
  struct Ffn {
    num::Tensor w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Norm ln1, ln2;
    Attention self;
    Ffn ffn;
  };
  struct DecoderLayer {
    Norm ln1, ln2, ln3;
    Attention self, cross;
    Ffn ffn;
  };

  Attention make_attention(const std::string& prefix, num::Rng& rng);
  Norm make_norm(const std::string& prefix);
  Ffn make_ffn(const std::string& prefix, num::Rng& rng);
  num::Tensor attend(const Attention& a, const num::Tensor& query, const num::Tensor& keys,
                     const num::AttentionLayout& layout) const;
  num::Tensor feed_forward(const Ffn& f, const num::Tensor& x, Mode mode);
  num::Tensor drop(const num::Tensor& x, Mode mode);

  TranslationConfig config_;
  std::size_t src_vocab_, tgt_vocab_, num_languages_;
  num::ParameterStore params_;
  num::Tensor src_embed_, src_lang_, tgt_embed_, src_pos_, tgt_pos_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  Norm enc_final_, dec_final_;
  num::Tensor out_w_, out_b_;
  num::Rng dropout_rng_;
  bool trained_ = false;
};

// ---------------------------------------------------------------------------

struct BeamOptions {
  int width = 4;
  double alpha = 1.0;    // score = logprob / length^alpha
  std::size_t max_len = 32;  // generated tokens, </s> included
  int eos = TextVocab::kEos;
  std::vector<int> banned;  // never generated
};

struct Hypothesis {
  std::vector<int> tokens;  // without </s>
  double log_prob = 0.0;
  double score = 0.0;
  bool finished = false;  // emitted </s>; otherwise cut at max_len
};

/// Next-token log-probabilities for each prefix (prefixes exclude the BOS).
using StepFunction = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<int>>&)>;

double length_normalized(double log_prob, std::size_t length, double alpha);

/// Beam search: at each step all expansions are ranked by cumulative log
/// probability and the best `width` survive; survivors ending in </s> are
/// finalized and the rest stay active. Search ends when nothing is active, when
/// `width` hypotheses have finished and none of the active ones can still reach
/// a better normalized score, or at max_len (active hypotheses are then
/// force-finished). The best normalized score wins; ties go to the smaller
/// token-id sequence.
Hypothesis beam_search(const StepFunction& step, const BeamOptions& options);

/// Decoder-backed step function over a fixed source memory.
StepFunction decoder_step(TranslationModel& model, const Memory& memory, int bos_token);

Hypothesis beam_translate(TranslationModel& model, const Memory& memory, int bos_token,
                          const BeamOptions& options);

}  // namespace slt::translation
