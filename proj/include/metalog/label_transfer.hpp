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
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "metalog/common.hpp"
#include "metalog/embedding.hpp"
#include "metalog/template_miner.hpp"

namespace metalog {

enum class TransferLabel { Normal, Anomaly, Drifted };

inline std::string_view to_string(TransferLabel l) {
  switch (l) {
    case TransferLabel::Normal: return "Normal";
    case TransferLabel::Anomaly: return "Anomaly";
    case TransferLabel::Drifted: return "Drifted";
  }
  return "?";
}

struct KnowledgeEntry {
  std::int64_t template_id = 0;
  std::string rendered;
  std::vector<Token> tokens;
  std::vector<double> semantic_vector;
  Label label = Label::Normal;
  std::string origin_source;
  bool operator==(const KnowledgeEntry&) const = default;
};

struct KnowledgeBase {
  std::vector<KnowledgeEntry> entries;
  /// Number of rendered templates that appear with both labels.
  std::size_t conflicts = 0;
  bool operator==(const KnowledgeBase&) const = default;
};

struct LabeledTemplate {
  LogTemplate tpl;
  Label label = Label::Normal;
  std::string origin_source;
};

inline std::vector<Token> template_tokens(const std::string& rendered) {
  std::vector<Token> out;
  for (auto piece : split(rendered, ' ')) {
    if (piece.empty()) continue;
    out.push_back(Token{std::string(piece), piece == kWildcard});
  }
  return out;
}

inline KnowledgeBase build_knowledge_base(const std::vector<LabeledTemplate>& labeled, const Embedder& embedder) {
  if (labeled.empty()) throw Error("build_knowledge_base: no labeled templates to transfer from");
  KnowledgeBase kb;
  std::map<std::string, unsigned> seen;  // bit 0 = Normal, bit 1 = Anomaly
  for (const auto& lt : labeled) {
    KnowledgeEntry e;
    e.template_id = lt.tpl.template_id;
    e.rendered = lt.tpl.render();
    e.tokens = lt.tpl.tokens;
    e.semantic_vector = embedder.embed(e.rendered);
    e.label = lt.label;
    e.origin_source = lt.origin_source.empty() && !lt.tpl.source_ids_seen.empty() ? *lt.tpl.source_ids_seen.begin()
                                                                                 : lt.origin_source;
    seen[e.rendered] |= lt.label == Label::Anomaly ? 2u : 1u;
    kb.entries.push_back(std::move(e));
  }
  for (const auto& [_, bits] : seen)
    if (bits == 3u) ++kb.conflicts;
  return kb;
}

/// 1 - (token-level Levenshtein distance) / max(|a|, |b|); a wildcard on
/// either side substitutes for free.
inline double fuzzy_similarity(const std::vector<Token>& a, const std::vector<Token>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = a[i - 1].is_wildcard || b[j - 1].is_wildcard || a[i - 1].text == b[j - 1].text;
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (same ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

struct MatchWeights {
  double semantic = 0.5;
  double fuzzy = 0.5;
};

namespace detail {
inline double score_parts(const std::string& cand_rendered, const std::vector<Token>& cand_tokens,
                          const std::vector<double>& cand_vec, const KnowledgeEntry& entry, MatchWeights w,
                          Diagnostics* diag) {
  if (cand_rendered == entry.rendered) return 1.0;
  double cos = 0.0;
  if (std::all_of(cand_vec.begin(), cand_vec.end(), [](double x) { return x == 0.0; }) ||
      std::all_of(entry.semantic_vector.begin(), entry.semantic_vector.end(), [](double x) { return x == 0.0; })) {
    if (diag) diag->warn("zero-norm semantic vector while matching '" + cand_rendered + "'; cosine term set to 0");
  } else {
    cos = std::clamp(cosine(cand_vec, entry.semantic_vector), 0.0, 1.0);
  }
  double s = w.semantic * cos + w.fuzzy * fuzzy_similarity(cand_tokens, entry.tokens);
  return std::clamp(s, 0.0, 1.0);
}
}  // namespace detail

/// w_sem * max(cosine, 0) + w_fuz * fuzzy. Byte-identical templates score 1.
inline double match_score(const LogTemplate& candidate, const KnowledgeEntry& entry, const Embedder& embedder,
                          Diagnostics* diag = nullptr, MatchWeights w = {}) {
  const std::string rendered = candidate.render();
  return detail::score_parts(rendered, candidate.tokens, embedder.embed(rendered), entry, w, diag);
}

struct TransferResult {
  std::int64_t template_id = 0;
  TransferLabel assigned_label = TransferLabel::Drifted;
  double score = 0.0;
  std::optional<std::int64_t> best_match;

  bool drift_flag() const { return assigned_label == TransferLabel::Drifted; }
  bool operator==(const TransferResult&) const = default;
};

inline constexpr double kDefaultTransferThreshold = 0.8;

/// Per candidate: best KB entry by score (ties to the lower template id);
/// its label when score >= tau, Drifted otherwise.
inline std::vector<TransferResult> transfer_labels(const std::vector<LogTemplate>& candidates, const KnowledgeBase& kb,
                                                   double tau, const Embedder& embedder, Diagnostics* diag = nullptr,
                                                   MatchWeights w = {}) {
  if (kb.entries.empty()) throw Error("transfer_labels: empty knowledge base");
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractViolation("transfer_labels: tau must lie in (0, 1]");
  std::vector<TransferResult> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    const std::string rendered = c.render();
    const auto vec = embedder.embed(rendered);
    TransferResult r;
    r.template_id = c.template_id;
    double best = -1.0;
    const KnowledgeEntry* best_entry = nullptr;
    for (const auto& e : kb.entries) {
      double s = detail::score_parts(rendered, c.tokens, vec, e, w, diag);
      if (s > best || (s == best && best_entry && e.template_id < best_entry->template_id)) {
        best = s;
        best_entry = &e;
      }
    }
    r.score = best;
    r.best_match = best_entry->template_id;
    if (best >= tau)
      r.assigned_label = best_entry->label == Label::Anomaly ? TransferLabel::Anomaly : TransferLabel::Normal;
    out.push_back(r);
  }
  return out;
}

/// Template-level gold label: majority vote of its labeled records, ties
/// go to Anomaly. Templates without labeled records are absent.
inline std::map<std::int64_t, Label> template_gold_labels(const RecordSet& rs, const std::vector<Assignment>& assignments) {
  std::map<std::int64_t, Label> by_record;
  for (const auto& r : rs.records)
    if (r.gold_label) by_record[r.record_id] = *r.gold_label;
  std::map<std::int64_t, std::pair<std::size_t, std::size_t>> votes;  // normal, anomaly
  for (const auto& a : assignments) {
    auto it = by_record.find(a.record_id);
    if (it == by_record.end()) continue;
    auto& v = votes[a.template_id];
    (it->second == Label::Anomaly ? v.second : v.first)++;
  }
  std::map<std::int64_t, Label> out;
  for (const auto& [tid, v] : votes) out[tid] = v.second >= v.first ? Label::Anomaly : Label::Normal;
  return out;
}

struct RecordLabel {
  Label label = Label::Normal;
  bool drift_flag = false;
};

/// Records inherit their template's transferred label; Drifted templates
/// map to Normal with the drift flag set.
inline RecordLabel record_label_from_transfer(const TransferResult& r) {
  switch (r.assigned_label) {
    case TransferLabel::Anomaly: return {Label::Anomaly, false};
    case TransferLabel::Normal: return {Label::Normal, false};
    case TransferLabel::Drifted: return {Label::Normal, true};
  }
  return {};
}

inline void save_transfer_report(const std::vector<TransferResult>& results, std::ostream& out) {
  out << "template_id,assigned_label,score,best_match_id,drift_flag\n";
  for (const auto& r : results) {
    std::string line = std::to_string(r.template_id) + ',' + std::string(to_string(r.assigned_label)) + ',';
    append_double(line, r.score);
    line += ',' + (r.best_match ? std::to_string(*r.best_match) : std::string()) + ',' + (r.drift_flag() ? "1" : "0");
    out << line << '\n';
  }
}

inline std::vector<TransferResult> load_transfer_report(std::istream& in) {
  std::vector<TransferResult> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty()) continue;
    auto cols = split(t, ',');
    if (cols.size() != 5) throw Error("malformed transfer report row");
    TransferResult r;
    r.template_id = parse_int<std::int64_t>(cols[0]);
    if (cols[1] == "Anomaly") r.assigned_label = TransferLabel::Anomaly;
    else if (cols[1] == "Normal") r.assigned_label = TransferLabel::Normal;
    else if (cols[1] == "Drifted") r.assigned_label = TransferLabel::Drifted;
    else throw Error("unknown transfer label '" + std::string(cols[1]) + "'");
    r.score = parse_double(cols[2]);
    if (!cols[3].empty()) r.best_match = parse_int<std::int64_t>(cols[3]);
    out.push_back(r);
  }
  return out;
}

}  // namespace metalog
