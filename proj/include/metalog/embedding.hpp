// Copyright 2026 The metalog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "metalog/common.hpp"
#include "metalog/ingest.hpp"
#include "metalog/template_miner.hpp"

namespace metalog {

inline constexpr std::size_t kDefaultSemanticDim = 768;

struct EmbedderState {
  std::size_t dim = kDefaultSemanticDim;
  std::map<std::string, double> idf_table;
  std::uint64_t hash_seed = 0;
  std::size_t char_ngram = 3;
  std::size_t documents = 0;

  /// Words absent from the fitted table get the floor weight (df = N).
  static constexpr double kOutOfVocabularyIdf = 1.0;
  double idf(const std::string& word) const {
    auto it = idf_table.find(word);
    return it == idf_table.end() ? kOutOfVocabularyIdf : it->second;
  }
  bool operator==(const EmbedderState&) const = default;
};

/// Lower-cased alphabetic pieces of the unmasked tokens of a message.
/// Masked parameters (numbers, hex ids, paths) contribute nothing.
inline std::vector<std::string> semantic_words(std::string_view message) {
  std::vector<std::string> words;
  for (const auto& tok : tokenize(message)) {
    if (tok.is_wildcard) continue;
    std::string cur;
    for (unsigned char c : tok.text) {
      if (std::isalpha(c)) {
        cur += static_cast<char>(std::tolower(c));
      } else if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
  }
  return words;
}

/// idf = ln((1+N)/(1+df)) + 1 over message-level word document frequencies.
inline EmbedderState fit_embedder(const RecordSet& corpus, std::size_t dim, std::uint64_t seed) {
  if (corpus.records.empty()) throw Error("fit_embedder: empty corpus");
  if (dim < 1) throw ContractViolation("fit_embedder: dim must be >= 1");
  std::map<std::string, std::size_t> df;
  for (const auto& r : corpus.records) {
    auto words = semantic_words(r.message);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    for (auto& w : words) ++df[w];
  }
  EmbedderState st;
  st.dim = dim;
  st.hash_seed = seed;
  st.documents = corpus.records.size();
  const double n = static_cast<double>(st.documents);
  for (const auto& [w, d] : df) st.idf_table[w] = std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0;
  return st;
}

/// Seeded feature hashing of word unigrams and character n-grams with
/// tf-idf weights and hashed signs; L2-normalized. Returns the zero vector
/// (and sets `empty`) when the message has no words.
inline std::vector<double> embed_semantic(std::string_view message, const EmbedderState& st, bool* empty = nullptr) {
  std::vector<double> v(st.dim, 0.0);
  auto words = semantic_words(message);
  if (empty) *empty = words.empty();
  if (words.empty()) return v;

  std::map<std::string, std::size_t> tf;
  for (auto& w : words) ++tf[w];
  const std::uint64_t basis = splitmix64(st.hash_seed ^ kFnvOffset);
  auto add = [&](std::string_view feature, double weight) {
    std::uint64_t h = splitmix64(fnv1a64(feature, basis));
    std::size_t idx = static_cast<std::size_t>(h % st.dim);
    double sign = (h >> 63) ? -1.0 : 1.0;
    v[idx] += sign * weight;
  };
  for (const auto& [w, count] : tf) {
    const double weight = static_cast<double>(count) * st.idf(w);
    add("w:" + w, weight);
    std::string padded = "#" + w + "#";
    if (padded.size() >= st.char_ngram) {
      const std::size_t grams = padded.size() - st.char_ngram + 1;
      for (std::size_t i = 0; i < grams; ++i)
        add("c:" + padded.substr(i, st.char_ngram), weight / static_cast<double>(grams));
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    if (empty) *empty = true;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "cosine: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Pluggable embedders

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  /// Semantic vector; `empty` is set when the text carried no signal.
  virtual std::vector<double> embed(std::string_view text, bool* empty = nullptr) const = 0;
};

class HashedTextEmbedder final : public Embedder {
 public:
  explicit HashedTextEmbedder(EmbedderState st) : st_(std::move(st)) {}
  std::size_t dim() const override { return st_.dim; }
  std::vector<double> embed(std::string_view text, bool* empty = nullptr) const override {
    return embed_semantic(text, st_, empty);
  }
  const EmbedderState& state() const { return st_; }

 private:
  EmbedderState st_;
};

using ExternalVectors = std::unordered_map<std::uint64_t, std::vector<double>>;

/// External embedding file: first line "dim=<d>", then rows
/// "<message_hash hex16>,v1,...,vd".
inline ExternalVectors load_external_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                                                Diagnostics* diag = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read external embeddings '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("external embeddings '" + path.string() + "': missing dim header");
  auto head = trim(line);
  if (!head.starts_with("dim=")) throw Error("external embeddings '" + path.string() + "': missing dim header");
  const auto dim = parse_int<std::size_t>(head.substr(4));
  if (dim != expected_dim)
    throw Error("external embeddings '" + path.string() + "' declare dim " + std::to_string(dim) +
                " but the configured dim is " + std::to_string(expected_dim));
  ExternalVectors out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    auto cols = split(t, ',');
    bool ok = cols.size() == dim + 1 && cols[0].size() == 16;
    std::vector<double> vec;
    std::uint64_t key = 0;
    if (ok) {
      try {
        key = parse_hex16(cols[0]);
      } catch (const Error&) {
        ok = false;
      }
    }
    if (ok) {
      vec.resize(dim);
      for (std::size_t i = 0; i < dim && ok; ++i) ok = try_parse_double(cols[i + 1], vec[i]) && std::isfinite(vec[i]);
    }
    if (!ok) {
      if (diag) diag->warn(path.string() + ":" + std::to_string(lineno) + ": malformed embedding row skipped");
      continue;
    }
    out[key] = std::move(vec);
  }
  return out;
}

inline void save_external_embeddings(const ExternalVectors& vecs, std::size_t dim, std::ostream& out) {
  out << "dim=" << dim << "\n";
  std::vector<std::uint64_t> keys;
  for (const auto& [k, _] : vecs) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  std::string row;
  for (auto k : keys) {
    row = hex16(k);
    for (double x : vecs.at(k)) {
      row += ',';
      append_double(row, x);
    }
    out << row << '\n';
  }
}

/// Prefers externally supplied vectors (keyed by message hash); misses fall
/// back to the built-in embedder and bump `fallbacks()`. The counter makes
/// this type unsuitable for concurrent use.
class ExternalFirstEmbedder final : public Embedder {
 public:
  ExternalFirstEmbedder(ExternalVectors external, std::shared_ptr<const Embedder> fallback)
      : external_(std::move(external)), fallback_(std::move(fallback)) {}
  std::size_t dim() const override { return fallback_->dim(); }
  std::vector<double> embed(std::string_view text, bool* empty = nullptr) const override {
    if (auto it = external_.find(message_hash(text)); it != external_.end()) {
      if (empty) *empty = false;
      ++hits_;
      return it->second;
    }
    ++fallbacks_;
    return fallback_->embed(text, empty);
  }
  std::size_t fallbacks() const { return fallbacks_; }
  std::size_t hits() const { return hits_; }

 private:
  ExternalVectors external_;
  std::shared_ptr<const Embedder> fallback_;
  mutable std::size_t fallbacks_ = 0;
  mutable std::size_t hits_ = 0;
};

// ---------------------------------------------------------------------------
// Feature vectors

struct FeatureVector {
  std::vector<double> values;
  std::int64_t record_id = 0;
  std::string source_id;
  Label label = Label::Normal;
  bool drift_flag = false;
  bool operator==(const FeatureVector&) const = default;
};

/// Semantic block first, then the 80 structural entries.
inline FeatureVector assemble(const LogRecord& record, std::span<const double> semantic,
                              std::span<const double> structural, Label label, bool drift_flag,
                              std::size_t expected_dim = kDefaultSemanticDim) {
  if (semantic.size() != expected_dim)
    throw ContractViolation("assemble: semantic block has " + std::to_string(semantic.size()) + " entries, expected " +
                            std::to_string(expected_dim));
  if (structural.size() != kStructuralDim) throw ContractViolation("assemble: structural block must have 80 entries");
  FeatureVector fv;
  fv.values.reserve(semantic.size() + structural.size());
  for (double x : semantic) fv.values.push_back(x);
  for (double x : structural) fv.values.push_back(x);
  for (std::size_t i = 0; i < fv.values.size(); ++i)
    if (!std::isfinite(fv.values[i]))
      throw Error("record " + std::to_string(record.record_id) + ": non-finite feature at index " + std::to_string(i));
  fv.record_id = record.record_id;
  fv.source_id = record.source_id;
  fv.label = label;
  fv.drift_flag = drift_flag;
  return fv;
}

/// Feature matrix CSV: record_id,source_id,label,drift_flag,f0..f{d-1}.
/// Synthetic (oversampled) rows carry negative record ids.
inline void save_feature_table(const std::vector<FeatureVector>& rows, std::ostream& out) {
  const std::size_t d = rows.empty() ? 0 : rows.front().values.size();
  std::string line = "record_id,source_id,label,drift_flag";
  for (std::size_t j = 0; j < d; ++j) line += ",f" + std::to_string(j);
  out << line << '\n';
  for (const auto& r : rows) {
    if (r.values.size() != d) throw Error("feature table rows differ in width");
    line = std::to_string(r.record_id) + ',' + r.source_id + ',' + std::to_string(to_int(r.label)) + ',' +
           (r.drift_flag ? "1" : "0");
    for (double x : r.values) {
      line += ',';
      append_double(line, x);
    }
    out << line << '\n';
  }
}

inline std::vector<FeatureVector> load_feature_table(std::istream& in) {
  std::vector<FeatureVector> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  const std::size_t width = split(trim(line), ',').size();
  if (width < 4) throw Error("feature table header too short");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    auto cols = split(t, ',');
    if (cols.size() != width) throw Error("feature table line " + std::to_string(lineno) + ": wrong column count");
    FeatureVector fv;
    fv.record_id = parse_int<std::int64_t>(cols[0]);
    fv.source_id = std::string(cols[1]);
    fv.label = label_from_int(parse_int<int>(cols[2]));
    fv.drift_flag = parse_int<int>(cols[3]) != 0;
    fv.values.resize(width - 4);
    for (std::size_t j = 4; j < width; ++j) fv.values[j - 4] = parse_double(cols[j]);
    rows.push_back(std::move(fv));
  }
  return rows;
}

}  // namespace metalog
