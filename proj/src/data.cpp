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

#include "slt/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "slt/error.hpp"

namespace slt::data {

namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[4] = {'S', 'L', 'T', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kFeatureHeader = 16;
const char* const kJoiner = "und";

const char* const kWords[] = {
    "heute",  "morgen",   "abend",   "nacht",    "regen",      "sonne",   "wind",    "schnee",
    "wolke",  "nebel",    "gewitter", "kalt",    "warm",       "nord",    "sued",    "ost",
    "west",   "berlin",   "bayern",  "kueste",   "frost",      "grad",    "himmel",  "klar",
    "sturm",  "hagel",    "mild",    "feucht",   "trocken",    "wetter",  "montag",  "dienstag",
    "mittwoch", "freitag", "samstag", "sonntag", "tag",        "woche",   "land",    "see",
};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_glosses < 2) throw ConfigError("synthetic corpus needs K >= 2 glosses, got " + std::to_string(num_glosses));
  if (frames_per_gloss < 4 || frames_per_gloss % 4 != 0) {
    throw ConfigError("frames_per_gloss must be a positive multiple of 4, got " + std::to_string(frames_per_gloss));
  }
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
  if (min_gloss_len < 1 || max_gloss_len < min_gloss_len) {
    throw ConfigError("gloss length range must satisfy 1 <= min <= max");
  }
}

bool operator==(const Triplet& a, const Triplet& b) {
  if (a.id != b.id || a.gloss != b.gloss || a.text != b.text || a.language != b.language) return false;
  if (a.features.values.shape() != b.features.values.shape()) return false;
  const auto x = a.features.values.values();
  const auto y = b.features.values.values();
  return std::equal(x.begin(), x.end(), y.begin(), y.end());
}

std::vector<std::string> gloss_labels(int num_glosses) {
  std::vector<std::string> out;
  const int named = static_cast<int>(std::size(kWords));
  for (int k = 0; k < num_glosses; ++k) {
    std::string w = k < named ? kWords[k] : "wort" + std::to_string(k);
    for (auto& c : w) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    out.push_back(w);
  }
  return out;
}

std::string spoken_word(const std::string& gloss_label) {
  std::string w = gloss_label;
  for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return w;
}

std::string grammar(const std::vector<std::string>& gloss) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < gloss.size(); i += 2) {
    if (!out.empty()) out.push_back(kJoiner);
    if (i + 1 < gloss.size()) out.push_back(spoken_word(gloss[i + 1]));
    out.push_back(spoken_word(gloss[i]));
  }
  return join(out);
}

std::optional<std::vector<std::string>> invert_grammar(const std::string& text) {
  const auto words = split_ws(text);
  std::vector<std::vector<std::string>> chunks(1);
  for (const auto& w : words) {
    if (w == kJoiner) {
      chunks.emplace_back();
    } else {
      chunks.back().push_back(w);
    }
  }
  std::vector<std::string> gloss;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    auto& chunk = chunks[c];
    const bool last = c + 1 == chunks.size();
    if (chunk.size() == 2) {
      std::swap(chunk[0], chunk[1]);
    } else if (!(chunk.size() == 1 && last)) {
      return std::nullopt;
    }
    for (const auto& w : chunk) {
      std::string label = w;
      for (auto& ch : label) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      gloss.push_back(label);
    }
  }
  if (gloss.empty()) return std::nullopt;
  return gloss;
}

num::Tensor gloss_prototypes(const SyntheticSpec& spec) {
  spec.validate();
  num::Rng rng(spec.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto k = static_cast<std::size_t>(spec.num_glosses), d = static_cast<std::size_t>(spec.feature_dim);
  std::vector<double> values(k * d);
  for (std::size_t g = 0; g < k; ++g) {
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      values[g * d + i] = normal(rng);
      norm += values[g * d + i] * values[g * d + i];
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) values[g * d + i] /= norm;
  }
  return num::Tensor({k, d}, std::move(values));
}

Corpus generate_corpus(const SyntheticSpec& spec, int n_train, int n_dev, int n_test) {
  spec.validate();
  if (n_train < 1 || n_dev < 1 || n_test < 1) throw ConfigError("every split needs at least one sample");
  const auto protos = gloss_prototypes(spec);
  const auto labels = gloss_labels(spec.num_glosses);
  num::Rng seq_rng(spec.seed * 0x9e3779b97f4a7c15ULL + 2);
  num::Rng noise_rng(spec.seed * 0x9e3779b97f4a7c15ULL + 3);
  std::uniform_int_distribution<int> length(spec.min_gloss_len, spec.max_gloss_len);
  std::uniform_int_distribution<int> symbol(0, spec.num_glosses - 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  const int total = n_train + n_dev + n_test;
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> sequences;
  for (long attempts = 0; static_cast<int>(sequences.size()) < total; ++attempts) {
    if (attempts > 1000L * total + 100000) {
      throw CorpusError("cannot draw " + std::to_string(total) + " distinct gloss sequences from this specification");
    }
    std::vector<int> seq;
    const int len = length(seq_rng);
    // Adjacent repeats are excluded: two identical neighbours would be one
    // uninterrupted run of the same prototype.
    while (static_cast<int>(seq.size()) < len) {
      const int g = symbol(seq_rng);
      if (seq.empty() || seq.back() != g) seq.push_back(g);
    }
    if (seen.insert(seq).second) sequences.push_back(std::move(seq));
  }

  const auto d = static_cast<std::size_t>(spec.feature_dim);
  const auto f = static_cast<std::size_t>(spec.frames_per_gloss);
  auto make = [&](const std::vector<int>& seq, const std::string& id) {
    Triplet t;
    t.id = id;
    t.language = spec.language;
    std::vector<double> values;
    values.reserve(seq.size() * f * d);
    for (int g : seq) {
      t.gloss.push_back(labels[static_cast<std::size_t>(g)]);
      for (std::size_t frame = 0; frame < f; ++frame) {
        for (std::size_t i = 0; i < d; ++i) {
          const double v = protos.at(static_cast<std::size_t>(g), i) + spec.noise * noise(noise_rng);
          values.push_back(static_cast<double>(static_cast<float>(v)));
        }
      }
    }
    t.features.values = num::Tensor({seq.size() * f, d}, std::move(values));
    t.text = grammar(t.gloss);
    return t;
  };
  auto id_for = [](const char* split, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", split, i);
    return std::string(buf);
  };

  Corpus corpus;
  int next = 0;
  for (int i = 0; i < n_train; ++i) corpus.train.push_back(make(sequences[next++], id_for("train", i)));
  for (int i = 0; i < n_dev; ++i) corpus.dev.push_back(make(sequences[next++], id_for("dev", i)));
  for (int i = 0; i < n_test; ++i) corpus.test.push_back(make(sequences[next++], id_for("test", i)));
  return corpus;
}

// ---------------------------------------------------------------------------

void write_features(const std::string& path, const visual::VideoFeatures& features) {
  const auto& v = features.values;
  if (v.rank() != 2) throw DimensionError("feature tensor must be T x D");
  std::string out(kFeatureMagic, 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(v.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(v.dim(1)));
  out.reserve(kFeatureHeader + 4 * v.size());
  for (double x : v.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path);
}

visual::VideoFeatures read_features(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kFeatureHeader) {
    throw CorruptionError("feature file " + path + ": expected at least " + std::to_string(kFeatureHeader) +
                          " header bytes, got " + std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) throw CorruptionError("feature file " + path + ": bad magic");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureVersion) {
    throw UnsupportedVersionError("feature file " + path + ": unsupported version " + std::to_string(version));
  }
  const std::size_t t = get_u32(bytes, 8), d = get_u32(bytes, 12);
  const std::size_t expected = kFeatureHeader + 4 * t * d;
  if (bytes.size() != expected) {
    throw CorruptionError("feature file " + path + ": expected " + std::to_string(expected) + " bytes for " +
                          std::to_string(t) + " x " + std::to_string(d) + " values, got " +
                          std::to_string(bytes.size()));
  }
  std::vector<double> values(t * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, kFeatureHeader + 4 * i));
    if (!std::isfinite(values[i])) throw CorruptionError("feature file " + path + ": non-finite value");
  }
  return {num::Tensor({t, d}, std::move(values))};
}

void write_split(const std::string& dir, const std::string& split, const std::vector<Triplet>& samples) {
  const fs::path root(dir);
  const fs::path feature_dir = root / "features" / split;
  std::error_code ec;
  fs::create_directories(feature_dir, ec);
  if (ec) throw IoError("cannot create " + feature_dir.string() + ": " + ec.message());
  std::ofstream manifest(root / (split + ".jsonl"), std::ios::binary);
  if (!manifest) throw IoError("cannot write " + (root / (split + ".jsonl")).string());
  for (const auto& s : samples) {
    const fs::path rel = fs::path("features") / split / (s.id + ".sltf");
    write_features((root / rel).string(), s.features);
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["features"] = rel.generic_string();
    j["gloss"] = join(s.gloss);
    j["text"] = s.text;
    j["language"] = s.language;
    manifest << j.dump() << '\n';
  }
}

std::vector<Triplet> load_corpus(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<Triplet> out;
  std::set<std::string> ids;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = manifest_path + " line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    auto field = [&](const char* name) {
      if (!j.contains(name) || !j[name].is_string()) {
        throw ParseError(where + ": missing or non-string field \"" + std::string(name) + "\"");
      }
      return j[name].get<std::string>();
    };
    Triplet t;
    t.id = field("id");
    const std::string features = field("features");
    t.gloss = split_ws(field("gloss"));
    t.text = field("text");
    if (j.contains("language") && j["language"].is_string()) t.language = j["language"].get<std::string>();
    if (t.gloss.empty()) throw ParseError(where + ": sample " + t.id + " has an empty gloss sequence");
    if (!ids.insert(t.id).second) throw ParseError(where + ": duplicate sample id " + t.id);
    const fs::path feature_path = base / features;
    if (!fs::exists(feature_path)) {
      throw IoError("sample " + t.id + ": feature file " + feature_path.string() + " does not exist");
    }
    try {
      t.features = read_features(feature_path.string());
    } catch (const CorruptionError& e) {
      throw CorruptionError("sample " + t.id + ": " + e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

Corpus load_splits(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory " + dir + " does not exist");
  const fs::path root(dir);
  return {load_corpus((root / "train.jsonl").string()), load_corpus((root / "dev.jsonl").string()),
          load_corpus((root / "test.jsonl").string())};
}

// ---------------------------------------------------------------------------

visual::VideoFeatures frame_rate_augment(const visual::VideoFeatures& video, double rate) {
  if (!(rate >= kMinFrameRate && rate <= kMaxFrameRate)) {
    throw ArgumentError("frame rate factor must lie in [0.5, 1.5], got " + std::to_string(rate));
  }
  const std::size_t t = video.frames(), d = video.dim();
  if (t == 0) throw EmptySequenceError("cannot resample an empty sequence");
  const auto target = std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(static_cast<double>(t) * rate)));
  if (target == t) return {video.values.clone()};
  std::vector<double> out(target * d);
  const auto src = video.values.values();
  for (std::size_t i = 0; i < target; ++i) {
    const double pos = target == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(t - 1) /
                                               static_cast<double>(target - 1);
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), t - 1);
    const std::size_t hi = std::min(lo + 1, t - 1);
    const double w = pos - static_cast<double>(lo);
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = (1.0 - w) * src[lo * d + c] + w * src[hi * d + c];
  }
  return {num::Tensor({target, d}, std::move(out))};
}

visual::VideoFeatures frame_rate_augment(const visual::VideoFeatures& video, num::Rng& rng) {
  std::uniform_real_distribution<double> rate(kMinFrameRate, kMaxFrameRate);
  return frame_rate_augment(video, rate(rng));
}

}  // namespace slt::data
