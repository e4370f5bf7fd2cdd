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
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "metalog/common.hpp"
#include "metalog/ingest.hpp"

namespace metalog {

inline constexpr std::string_view kWildcard = "<*>";

/// A message or template token. Masked message tokens keep their original
/// text (it becomes a parameter value); template wildcards hold "<*>".
struct Token {
  std::string text;
  bool is_wildcard = false;

  std::string_view render() const { return is_wildcard ? kWildcard : std::string_view(text); }
  bool operator==(const Token&) const = default;
};

namespace detail {

inline bool is_hex_char(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

/// Hex-like: >= 4 hex digits (after an optional 0x) with at least one
/// decimal digit or an explicit 0x prefix. Pure-letter words like "added"
/// stay words.
inline bool is_hex_token(std::string_view t) {
  bool prefixed = t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X');
  std::string_view body = prefixed ? t.substr(2) : t;
  if (body.size() < 4) return false;
  bool digit = false;
  for (char c : body) {
    if (!is_hex_char(c)) return false;
    if (std::isdigit(static_cast<unsigned char>(c))) digit = true;
  }
  return prefixed || digit;
}

inline bool is_path_like(std::string_view t) {
  if (t.size() > 1 && t.front() == '/') return true;
  if (t.find("://") != std::string_view::npos) return true;
  return std::count(t.begin(), t.end(), '/') >= 2;
}

inline bool is_parameter(std::string_view t) {
  for (char c : t)
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
  return is_hex_token(t) || is_path_like(t);
}

}  // namespace detail

/// Whitespace tokenization with parameter pre-masking (digits, hex, IP,
/// paths). Whitespace-only input yields one wildcard token and sets
/// `degenerate`.
inline std::vector<Token> tokenize(std::string_view message, bool* degenerate = nullptr) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < message.size()) {
    while (i < message.size() && std::isspace(static_cast<unsigned char>(message[i]))) ++i;
    std::size_t start = i;
    while (i < message.size() && !std::isspace(static_cast<unsigned char>(message[i]))) ++i;
    if (i > start) {
      std::string_view t = message.substr(start, i - start);
      out.push_back(Token{std::string(t), detail::is_parameter(t)});
    }
  }
  if (degenerate) *degenerate = out.empty();
  if (out.empty()) out.push_back(Token{std::string(kWildcard), true});
  return out;
}

/// Fraction of positions where the tokens agree (a wildcard on either side
/// agrees with anything).
inline double sequence_similarity(const std::vector<Token>& a, const std::vector<Token>& b) {
  if (a.size() != b.size()) throw ContractViolation("sequence_similarity: token lists differ in length");
  if (a.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].is_wildcard || b[i].is_wildcard || a[i].text == b[i].text) ++same;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

struct LogTemplate {
  std::int64_t template_id = 0;
  std::vector<Token> tokens;
  std::size_t token_count = 0;
  std::uint64_t occurrences = 0;
  std::set<std::string> source_ids_seen;

  std::string render() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i].render();
    }
    return out;
  }
  std::size_t wildcard_count() const {
    return static_cast<std::size_t>(std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return t.is_wildcard; }));
  }
};

struct ParseTreeConfig {
  std::size_t depth = 4;
  double sim_threshold = 0.4;
  std::size_t max_children = 100;
};

struct ParseResult {
  std::int64_t template_id = 0;
  std::vector<std::string> parameters;
  double similarity = 0.0;
  bool created = false;
};

/// Template ids pack the source ordinal above the per-source local id.
constexpr std::int64_t pack_template_id(std::size_t source_ordinal, std::size_t local_id) {
  return static_cast<std::int64_t>((static_cast<std::uint64_t>(source_ordinal) << 32) | local_id);
}
constexpr std::size_t template_local_id(std::int64_t id) { return static_cast<std::size_t>(id & 0xffffffff); }
constexpr std::size_t template_source_ordinal(std::int64_t id) { return static_cast<std::size_t>(id >> 32); }

/// Fixed-depth prefix tree for one source. Level 1 is keyed by token count,
/// the next `depth` levels by leading tokens; leaves hold template lists.
class ParseTree {
 public:
  explicit ParseTree(ParseTreeConfig cfg = {}, std::size_t source_ordinal = 0, std::string source_id = {})
      : cfg_(cfg), ordinal_(source_ordinal), source_id_(std::move(source_id)) {
    require(cfg_.depth >= 1, "parse tree depth must be >= 1");
    require(cfg_.sim_threshold > 0.0 && cfg_.sim_threshold < 1.0, "sim_threshold must lie in (0,1)");
    require(cfg_.max_children >= 1, "max_children must be >= 1");
    nodes_.emplace_back();  // root
    node_depth_.push_back(0);
  }

  const ParseTreeConfig& config() const { return cfg_; }
  const std::string& source_id() const { return source_id_; }
  std::size_t source_ordinal() const { return ordinal_; }
  const std::vector<LogTemplate>& templates() const { return templates_; }
  std::uint64_t records_seen() const { return records_seen_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  const LogTemplate& get(std::int64_t template_id) const {
    std::size_t local = template_local_id(template_id);
    if (template_source_ordinal(template_id) != ordinal_ || local >= templates_.size())
      throw Error("unknown template id " + std::to_string(template_id));
    return templates_[local];
  }

  /// Online mining step: route, match or create, merge.
  ParseResult parse(const std::vector<Token>& tokens) {
    if (frozen_) throw ContractViolation("parse on a frozen tree; use match()");
    ++records_seen_;
    std::size_t leaf = descend(tokens);
    auto [best, sim] = best_in_leaf(leaf, tokens);
    ParseResult res;
    if (best && sim >= cfg_.sim_threshold) {
      LogTemplate& t = templates_[*best];
      for (std::size_t i = 0; i < tokens.size(); ++i)
        if (!t.tokens[i].is_wildcard && (tokens[i].is_wildcard || tokens[i].text != t.tokens[i].text))
          t.tokens[i] = Token{std::string(kWildcard), true};
      ++t.occurrences;
      t.source_ids_seen.insert(source_id_);
      res.template_id = t.template_id;
      res.similarity = sim;
    } else {
      LogTemplate t;
      t.template_id = pack_template_id(ordinal_, templates_.size());
      for (const auto& tok : tokens) t.tokens.push_back(tok.is_wildcard ? Token{std::string(kWildcard), true} : tok);
      t.token_count = tokens.size();
      t.occurrences = 1;
      t.source_ids_seen.insert(source_id_);
      nodes_[leaf].templates.push_back(templates_.size());
      leaf_of_.push_back(leaf);
      templates_.push_back(std::move(t));
      res.template_id = templates_.back().template_id;
      res.similarity = 1.0;
      res.created = true;
    }
    res.parameters = parameters_of(get(res.template_id), tokens);
    return res;
  }

  /// Read-only matching; no template is created or modified.
  std::optional<ParseResult> match(const std::vector<Token>& tokens) const {
    auto leaf = search(tokens);
    std::optional<std::size_t> best;
    double sim = 0.0;
    if (leaf) std::tie(best, sim) = best_in_leaf(*leaf, tokens);
    if (!best || sim < cfg_.sim_threshold) {
      // Stores reloaded from disk may route differently from the live tree;
      // fall back to every template of the same length.
      best.reset();
      sim = 0.0;
      for (std::size_t i = 0; i < templates_.size(); ++i) {
        if (templates_[i].token_count != tokens.size()) continue;
        double s = sequence_similarity(templates_[i].tokens, tokens);
        if (!best || s > sim) {
          best = i;
          sim = s;
        }
      }
      if (!best || sim < cfg_.sim_threshold) return std::nullopt;
    }
    ParseResult res;
    res.template_id = templates_[*best].template_id;
    res.similarity = sim;
    res.parameters = parameters_of(templates_[*best], tokens);
    return res;
  }

  /// Number of other templates sharing the leaf of `template_id`.
  std::size_t leaf_siblings(std::int64_t template_id) const {
    std::size_t local = template_local_id(template_id);
    return nodes_[leaf_of_.at(local)].templates.size() - 1;
  }

  /// Edges from the root to the leaf holding `template_id`.
  std::size_t leaf_depth(std::int64_t template_id) const {
    return node_depth_.at(leaf_of_.at(template_local_id(template_id)));
  }

  /// Children counts per node, for invariant checks.
  std::size_t max_named_children() const {
    std::size_t m = 0;
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      if (node_depth_[i] == 0) continue;
      std::size_t named = nodes_[i].children.size() - (nodes_[i].children.count(std::string(kWildcard)) ? 1 : 0);
      m = std::max(m, named);
    }
    return m;
  }

  /// Re-insert a persisted template (routing by its rendered tokens).
  void restore(LogTemplate t) {
    std::size_t local = template_local_id(t.template_id);
    if (template_source_ordinal(t.template_id) != ordinal_) throw Error("template belongs to another source");
    if (local != templates_.size()) throw Error("template store is not contiguous in local ids");
    t.token_count = t.tokens.size();
    std::size_t leaf = descend(t.tokens);
    nodes_[leaf].templates.push_back(templates_.size());
    leaf_of_.push_back(leaf);
    records_seen_ += t.occurrences;
    templates_.push_back(std::move(t));
  }

 /// Message tokens at the template's wildcard positions.
  static std::vector<std::string> parameters_of(const LogTemplate& t, const std::vector<Token>& tokens) {
    std::vector<std::string> params;
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (t.tokens[i].is_wildcard) params.push_back(tokens[i].text);
    return params;
  }

 private:
  struct Node {
    std::map<std::string, std::size_t> children;
    std::vector<std::size_t> templates;
  };

  std::size_t add_node(std::size_t depth) {
    nodes_.emplace_back();
    node_depth_.push_back(depth);
    return nodes_.size() - 1;
  }

  std::size_t descend(const std::vector<Token>& tokens) {
    const std::string len_key = std::to_string(tokens.size());
    std::size_t cur;
    if (auto it = nodes_[0].children.find(len_key); it != nodes_[0].children.end()) {
      cur = it->second;
    } else {
      cur = add_node(1);
      nodes_[0].children[len_key] = cur;
    }
    const std::size_t levels = std::min(cfg_.depth, tokens.size());
    for (std::size_t level = 0; level < levels; ++level) {
      const Token& tok = tokens[level];
      std::string key = tok.is_wildcard ? std::string(kWildcard) : tok.text;
      auto& children = nodes_[cur].children;
      if (auto it = children.find(key); it != children.end()) {
        cur = it->second;
        continue;
      }
      const std::size_t named = children.size() - (children.count(std::string(kWildcard)) ? 1 : 0);
      if (!tok.is_wildcard && named >= cfg_.max_children) key = std::string(kWildcard);
      if (auto it = children.find(key); it != children.end()) {
        cur = it->second;
        continue;
      }
      std::size_t child = add_node(node_depth_[cur] + 1);
      nodes_[cur].children[key] = child;
      cur = child;
    }
    return cur;
  }

  std::optional<std::size_t> search(const std::vector<Token>& tokens) const {
    auto it = nodes_[0].children.find(std::to_string(tokens.size()));
    if (it == nodes_[0].children.end()) return std::nullopt;
    std::size_t cur = it->second;
    const std::size_t levels = std::min(cfg_.depth, tokens.size());
    for (std::size_t level = 0; level < levels; ++level) {
      const Token& tok = tokens[level];
      const auto& children = nodes_[cur].children;
      auto c = tok.is_wildcard ? children.end() : children.find(tok.text);
      if (c == children.end()) c = children.find(std::string(kWildcard));
      if (c == children.end()) return std::nullopt;
      cur = c->second;
    }
    return cur;
  }

  std::pair<std::optional<std::size_t>, double> best_in_leaf(std::size_t leaf, const std::vector<Token>& tokens) const {
    std::optional<std::size_t> best;
    double best_sim = -1.0;
    for (std::size_t idx : nodes_[leaf].templates) {
      double s = sequence_similarity(templates_[idx].tokens, tokens);
      if (s > best_sim) {
        best_sim = s;
        best = idx;
      }
    }
    return {best, best ? best_sim : 0.0};
  }

  ParseTreeConfig cfg_;
  std::size_t ordinal_ = 0;
  std::string source_id_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> node_depth_;
  std::vector<LogTemplate> templates_;
  std::vector<std::size_t> leaf_of_;
  std::uint64_t records_seen_ = 0;
  bool frozen_ = false;
};

struct Assignment {
  std::int64_t record_id = 0;
  std::int64_t template_id = 0;
  std::vector<std::string> parameters;
  bool operator==(const Assignment&) const = default;
};

/// One parse tree per source, in manifest order.
class TemplateMiner {
 public:
  explicit TemplateMiner(std::vector<std::string> source_order = {}, ParseTreeConfig cfg = {}) : cfg_(cfg) {
    for (auto& s : source_order) add_source(s);
  }

  ParseTree& tree(const std::string& source) { return trees_.at(ordinal_of(source)); }
  const ParseTree& tree(const std::string& source) const { return trees_.at(ordinal_of(source)); }
  const std::vector<ParseTree>& trees() const { return trees_; }

  std::size_t ordinal_of(const std::string& source) const {
    auto it = ordinals_.find(source);
    if (it == ordinals_.end()) throw Error("unknown source '" + source + "'");
    return it->second;
  }

  std::size_t add_source(const std::string& source) {
    if (auto it = ordinals_.find(source); it != ordinals_.end()) return it->second;
    ordinals_[source] = trees_.size();
    trees_.emplace_back(cfg_, trees_.size(), source);
    return trees_.size() - 1;
  }

  ParseResult parse(const LogRecord& record) {
    std::size_t ord = add_source(record.source_id);
    return trees_[ord].parse(tokenize(record.message));
  }

  std::optional<ParseResult> match(const LogRecord& record) const {
    return tree(record.source_id).match(tokenize(record.message));
  }

  const LogTemplate& get(std::int64_t template_id) const {
    return trees_.at(template_source_ordinal(template_id)).get(template_id);
  }
  const ParseTree& tree_of(std::int64_t template_id) const { return trees_.at(template_source_ordinal(template_id)); }

  void freeze() {
    for (auto& t : trees_) t.freeze();
  }

  std::vector<const LogTemplate*> all_templates() const {
    std::vector<const LogTemplate*> out;
    for (const auto& t : trees_)
      for (const auto& tpl : t.templates()) out.push_back(&tpl);
    return out;
  }

  /// Mine every record in order; returns one assignment per record.
  /// Parameters are read against the final templates, since later merges
  /// can turn more positions into wildcards.
  std::vector<Assignment> mine(const RecordSet& rs) {
    for (const auto& s : rs.source_order) add_source(s);
    std::vector<Assignment> out;
    out.reserve(rs.size());
    for (const auto& r : rs.records) out.push_back({r.record_id, parse(r).template_id, {}});
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i].parameters = ParseTree::parameters_of(get(out[i].template_id), tokenize(rs.records[i].message));
    return out;
  }

  /// Frozen re-assignment; records that no longer match are an error.
  std::vector<Assignment> assign(const RecordSet& rs) const {
    std::vector<Assignment> out;
    out.reserve(rs.size());
    for (const auto& r : rs.records) {
      auto res = match(r);
      if (!res) throw Error("record " + std::to_string(r.record_id) + " matches no template");
      out.push_back({r.record_id, res->template_id, std::move(res->parameters)});
    }
    return out;
  }

 private:
  ParseTreeConfig cfg_;
  std::vector<ParseTree> trees_;
  std::map<std::string, std::size_t> ordinals_;
};

// ---------------------------------------------------------------------------
// Structural features

inline constexpr std::size_t kStructuralDim = 80;
using StructuralFeatures = std::array<double, kStructuralDim>;

namespace structural {
inline constexpr std::size_t kBucketBlock = 64;
inline constexpr std::size_t kTokenCount = 64;
inline constexpr std::size_t kWildcardRatio = 65;
inline constexpr std::size_t kCharLength = 66;
inline constexpr std::size_t kDigitRatio = 67;
inline constexpr std::size_t kUpperRatio = 68;
inline constexpr std::size_t kPunctRatio = 69;
inline constexpr std::size_t kHexTokens = 70;
inline constexpr std::size_t kLogFrequency = 71;
inline constexpr std::size_t kParamCount = 72;
inline constexpr std::size_t kParamLength = 73;
inline constexpr std::size_t kLeafSiblings = 74;
inline constexpr std::size_t kByteEntropy = 75;
inline constexpr std::size_t kPrefixBucket = 76;
}  // namespace structural

/// Fixed 80-entry layout:
///   0-63  one-hot of template_id mod 64
///   64    token_count / 32
///   65    template wildcard ratio
///   66    message length / 256, clamped to 1
///   67-69 digit, uppercase, punctuation char ratios
///   70    hex-like token count / token_count
///   71    ln(1+occurrences) / ln(1+records seen by the tree)
///   72    parameter count
///   73    mean parameter length / 16
///   74    leaf sibling templates / max_children, clamped to 1
///   75    byte entropy (bits) / 8
///   76-79 one-hot of hash(first 4 template tokens) mod 4
inline StructuralFeatures structural_features(const LogRecord& record, const LogTemplate& tpl, const ParseTree& tree,
                                              const std::vector<std::string>& parameters) {
  using namespace structural;
  StructuralFeatures f{};
  f[static_cast<std::size_t>(tpl.template_id % 64)] = 1.0;

  const auto n_tok = static_cast<double>(tpl.token_count);
  f[kTokenCount] = n_tok / 32.0;
  f[kWildcardRatio] = n_tok > 0 ? static_cast<double>(tpl.wildcard_count()) / n_tok : 0.0;

  const std::string& msg = record.message;
  const double len = static_cast<double>(msg.size());
  f[kCharLength] = std::min(1.0, len / 256.0);
  std::size_t digits = 0, upper = 0, punct = 0;
  std::array<std::size_t, 256> hist{};
  for (unsigned char c : msg) {
    digits += std::isdigit(c) ? 1 : 0;
    upper += std::isupper(c) ? 1 : 0;
    punct += std::ispunct(c) ? 1 : 0;
    ++hist[c];
  }
  if (len > 0) {
    f[kDigitRatio] = static_cast<double>(digits) / len;
    f[kUpperRatio] = static_cast<double>(upper) / len;
    f[kPunctRatio] = static_cast<double>(punct) / len;
    double h = 0.0;
    for (std::size_t c : hist) {
      if (!c) continue;
      double p = static_cast<double>(c) / len;
      h -= p * std::log2(p);
    }
    f[kByteEntropy] = h / 8.0;
  }

  auto tokens = tokenize(msg);
  std::size_t hex = 0;
  for (const auto& t : tokens) hex += detail::is_hex_token(t.text) ? 1 : 0;
  f[kHexTokens] = tokens.empty() ? 0.0 : static_cast<double>(hex) / static_cast<double>(tokens.size());

  const double seen = static_cast<double>(std::max<std::uint64_t>(tree.records_seen(), 1));
  f[kLogFrequency] = std::log1p(static_cast<double>(tpl.occurrences)) / std::log1p(seen);

  f[kParamCount] = static_cast<double>(parameters.size());
  if (!parameters.empty()) {
    double total = 0.0;
    for (const auto& p : parameters) total += static_cast<double>(p.size());
    f[kParamLength] = total / static_cast<double>(parameters.size()) / 16.0;
  }
  f[kLeafSiblings] = std::min(1.0, static_cast<double>(tree.leaf_siblings(tpl.template_id)) /
                                       static_cast<double>(tree.config().max_children));

  std::string prefix;
  for (std::size_t i = 0; i < std::min<std::size_t>(4, tpl.tokens.size()); ++i) {
    prefix += tpl.tokens[i].render();
    prefix += ' ';
  }
  f[kPrefixBucket + fnv1a64(prefix) % 4] = 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Template store: one line per template,
//   template_id \t source_id \t token_count \t occurrences \t rendered

inline void save_template_store(const ParseTree& tree, std::ostream& out) {
  for (const auto& t : tree.templates())
    out << t.template_id << '\t' << tree.source_id() << '\t' << t.token_count << '\t' << t.occurrences << '\t'
        << t.render() << '\n';
}

inline void save_template_store(const TemplateMiner& miner, std::ostream& out) {
  for (const auto& tree : miner.trees()) save_template_store(tree, out);
}

struct StoredTemplate {
  std::int64_t template_id = 0;
  std::string source_id;
  std::size_t token_count = 0;
  std::uint64_t occurrences = 0;
  std::string rendered;
  bool operator==(const StoredTemplate&) const = default;
};

inline std::vector<StoredTemplate> read_template_store(std::istream& in) {
  std::vector<StoredTemplate> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 5) throw Error("template store line " + std::to_string(lineno) + ": expected 5 fields");
    StoredTemplate t;
    t.template_id = parse_int<std::int64_t>(cols[0]);
    t.source_id = std::string(cols[1]);
    t.token_count = parse_int<std::size_t>(cols[2]);
    t.occurrences = parse_int<std::uint64_t>(cols[3]);
    t.rendered = std::string(cols[4]);
    out.push_back(std::move(t));
  }
  return out;
}

/// Rebuild frozen per-source trees from a template store.
inline TemplateMiner load_template_store(std::istream& in, const std::vector<std::string>& source_order,
                                         ParseTreeConfig cfg = {}) {
  TemplateMiner miner(source_order, cfg);
  auto stored = read_template_store(in);
  std::stable_sort(stored.begin(), stored.end(),
                   [](const StoredTemplate& a, const StoredTemplate& b) { return a.template_id < b.template_id; });
  for (auto& s : stored) {
    std::size_t ord = miner.add_source(s.source_id);
    if (template_source_ordinal(s.template_id) != ord)
      throw Error("template " + std::to_string(s.template_id) + " does not belong to source ordinal " +
                  std::to_string(ord));
    LogTemplate t;
    t.template_id = s.template_id;
    for (auto piece : split(s.rendered, ' ')) {
      if (piece.empty()) continue;
      bool wild = piece == kWildcard;
      t.tokens.push_back(Token{std::string(piece), wild});
    }
    if (t.tokens.size() != s.token_count)
      throw Error("template " + std::to_string(s.template_id) + ": token_count does not match rendered text");
    t.occurrences = s.occurrences;
    t.source_ids_seen.insert(s.source_id);
    miner.tree(s.source_id).restore(std::move(t));
  }
  miner.freeze();
  return miner;
}

inline void save_assignments(const std::vector<Assignment>& a, const RecordSet& rs, std::ostream& out) {
  out << "record_id,source_id,template_id\n";
  std::map<std::int64_t, const LogRecord*> by_id;
  for (const auto& r : rs.records) by_id[r.record_id] = &r;
  for (const auto& x : a) out << x.record_id << ',' << by_id.at(x.record_id)->source_id << ',' << x.template_id << '\n';
}

}  // namespace metalog
