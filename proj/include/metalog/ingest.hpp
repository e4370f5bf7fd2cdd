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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "metalog/common.hpp"

namespace metalog {

struct LogRecord {
  std::int64_t record_id = 0;
  std::string source_id;
  std::string raw_line;
  std::string message;
  std::optional<Label> gold_label;

  bool operator==(const LogRecord&) const = default;
};

struct SourceSpec {
  std::string source_id;
  std::filesystem::path file_path;
  std::string header_pattern = "none";
  std::optional<std::size_t> expected_count;
  /// Optional CSV sidecar (record_index,label).
  std::optional<std::filesystem::path> labels_path;
};

struct CorpusManifest {
  std::vector<SourceSpec> sources;
  std::uint64_t seed = 0;
};

/// Covering record-id range [first, last) of one source.
struct IdRange {
  std::int64_t first = 0;
  std::int64_t last = 0;
  std::size_t count = 0;
  bool contains(std::int64_t id) const { return id >= first && id < last; }
  bool operator==(const IdRange&) const = default;
};

struct RecordSet {
  std::vector<LogRecord> records;
  std::map<std::string, IdRange> source_index;
  /// Manifest order of source ids.
  std::vector<std::string> source_order;

  std::size_t size() const { return records.size(); }
  std::size_t count(const std::string& source) const {
    auto it = source_index.find(source);
    return it == source_index.end() ? 0 : it->second.count;
  }
  std::vector<const LogRecord*> of_source(const std::string& source) const {
    std::vector<const LogRecord*> out;
    for (const auto& r : records)
      if (r.source_id == source) out.push_back(&r);
    return out;
  }
  bool operator==(const RecordSet&) const = default;
};

// ---------------------------------------------------------------------------
// Header registry

struct HeaderPattern {
  std::string name;
  std::regex header;  // matched at line start; the remainder is the message
};

inline const std::vector<HeaderPattern>& header_registry() {
  static const std::vector<HeaderPattern> kRegistry = [] {
    std::vector<HeaderPattern> r;
    auto add = [&](std::string name, const char* re) {
      r.push_back({std::move(name), std::regex(re, std::regex::ECMAScript | std::regex::optimize)});
    };
    // "Jun 14 15:16:01 "
    add("syslog", R"(^[A-Z][a-z]{2}\s+\d{1,2}\s+\d{2}:\d{2}:\d{2}\s+)");
    // "081109 203615 148 "
    add("hdfs", R"(^\d{6}\s+\d{6}\s+\d+\s+)");
    // "2015-10-18 18:01:47,978 "
    add("hadoop", R"(^\d{4}-\d{2}-\d{2}\s+\d{2}:\d{2}:\d{2},\d{3}\s+)");
    // "[Sun Dec 04 04:47:44 2005] "
    add("apache", R"(^\[[A-Z][a-z]{2}\s+[A-Z][a-z]{2}\s+\d{1,2}\s+\d{2}:\d{2}:\d{2}\s+\d{4}\]\s+)");
    // ISO-like "2024-01-01T10:00:00.123Z " or "2024-01-01 10:00:00 "
    add("timestamp", R"(^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?\S*\s+)");
    add("none", R"(^)");
    return r;
  }();
  return kRegistry;
}

inline const HeaderPattern* find_header_pattern(std::string_view name) {
  for (const auto& p : header_registry())
    if (p.name == name) return &p;
  return nullptr;
}

/// Strip the header; returns nullopt when the pattern does not match or the
/// remaining message would be empty.
inline std::optional<std::string> strip_header(const HeaderPattern& pattern, const std::string& line) {
  std::smatch m;
  if (!std::regex_search(line, m, pattern.header, std::regex_constants::match_continuous)) return std::nullopt;
  std::string rest(trim(std::string_view(line).substr(static_cast<std::size_t>(m.length(0)))));
  if (rest.empty()) return std::nullopt;
  return rest;
}

// ---------------------------------------------------------------------------
// Manifest

/// Manifest file: top-level `seed = N`, then one section per source:
///
///   [Apache]
///   path = Apache.log
///   header = apache
///   expected_count = 2000
///   labels = Apache.labels.csv
///
/// Relative paths resolve against the manifest's directory. Sections keep
/// file order.
inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read manifest '" + path.string() + "'");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("malformed manifest '" + path.string() + "': " + e.message());
  }
  const auto base = path.parent_path();
  CorpusManifest m;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      if (key == "seed") m.seed = parse_int<std::uint64_t>(node.data());
      else throw Error("unknown manifest key '" + key + "'");
      continue;
    }
    SourceSpec s;
    s.source_id = key;
    auto p = node.get_optional<std::string>("path");
    if (!p) throw Error("manifest source '" + key + "' has no path");
    s.file_path = base / *p;
    s.header_pattern = node.get<std::string>("header", "none");
    if (auto c = node.get_optional<std::string>("expected_count")) s.expected_count = parse_int<std::size_t>(*c);
    if (auto l = node.get_optional<std::string>("labels")) s.labels_path = base / *l;
    m.sources.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < m.sources.size(); ++i)
    for (std::size_t j = i + 1; j < m.sources.size(); ++j)
      if (m.sources[i].source_id == m.sources[j].source_id)
        throw Error("duplicate source id '" + m.sources[i].source_id + "' in manifest");
  return m;
}

inline void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  out << "seed = " << m.seed << "\n";
  for (const auto& s : m.sources) {
    out << "\n[" << s.source_id << "]\n";
    out << "path = " << std::filesystem::relative(s.file_path, base.empty() ? "." : base).generic_string() << "\n";
    out << "header = " << s.header_pattern << "\n";
    if (s.expected_count) out << "expected_count = " << *s.expected_count << "\n";
    if (s.labels_path)
      out << "labels = " << std::filesystem::relative(*s.labels_path, base.empty() ? "." : base).generic_string()
          << "\n";
  }
}

// ---------------------------------------------------------------------------
// Loading

/// Label sidecar: CSV header `record_index,label`, index counts non-blank
/// lines of the source file from 0.
inline std::map<std::size_t, Label> load_label_sidecar(const std::filesystem::path& path, Diagnostics* diag = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read label sidecar '" + path.string() + "'");
  std::map<std::size_t, Label> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    if (lineno == 1 && t.starts_with("record_index")) continue;
    auto cols = split(t, ',');
    if (cols.size() != 2) {
      if (diag) diag->warn(path.string() + ":" + std::to_string(lineno) + ": malformed label row skipped");
      continue;
    }
    out[parse_int<std::size_t>(cols[0])] = label_from_int(parse_int<int>(cols[1]));
  }
  return out;
}

struct LoadStats {
  std::map<std::string, std::size_t> per_source;
  std::size_t header_fallbacks = 0;
};

inline RecordSet load_corpus(const CorpusManifest& manifest, Diagnostics* diag = nullptr, LoadStats* stats = nullptr) {
  RecordSet rs;
  std::int64_t next_id = 0;
  for (const auto& src : manifest.sources) {
    const HeaderPattern* pattern = find_header_pattern(src.header_pattern);
    if (!pattern) throw Error("source '" + src.source_id + "': unknown header pattern '" + src.header_pattern + "'");
    std::ifstream in(src.file_path, std::ios::binary);
    if (!in) throw Error("cannot read log file '" + src.file_path.string() + "'");

    std::map<std::size_t, Label> labels;
    if (src.labels_path) labels = load_label_sidecar(*src.labels_path, diag);

    IdRange range{next_id, next_id, 0};
    std::string line;
    std::size_t index = 0;
    std::size_t fallbacks = 0;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      LogRecord r;
      r.record_id = next_id++;
      r.source_id = src.source_id;
      r.raw_line = line;
      if (auto msg = strip_header(*pattern, line)) {
        r.message = std::move(*msg);
      } else {
        r.message = std::string(trim(line));
        ++fallbacks;
      }
      if (auto it = labels.find(index); it != labels.end()) r.gold_label = it->second;
      rs.records.push_back(std::move(r));
      ++index;
    }
    range.last = next_id;
    range.count = index;
    if (fallbacks > 0 && diag)
      diag->warn("source '" + src.source_id + "': " + std::to_string(fallbacks) +
                 " lines did not match header pattern '" + src.header_pattern + "', kept whole");
    if (index == 0 && diag) diag->warn("source '" + src.source_id + "': empty log file");
    if (src.expected_count && *src.expected_count != index && diag)
      diag->warn("source '" + src.source_id + "': expected " + std::to_string(*src.expected_count) + " lines, read " +
                 std::to_string(index));
    if (!labels.empty() && labels.rbegin()->first >= index && diag)
      diag->warn("source '" + src.source_id + "': label sidecar indexes past end of file");
    rs.source_index[src.source_id] = range;
    rs.source_order.push_back(src.source_id);
    if (stats) {
      stats->per_source[src.source_id] = index;
      stats->header_fallbacks += fallbacks;
    }
  }
  return rs;
}

// ---------------------------------------------------------------------------
// Train/test split

/// Subset of `rs` keeping the given records (in record_id order) with
/// covering ranges recomputed.
inline RecordSet subset(const RecordSet& rs, std::vector<LogRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const LogRecord& a, const LogRecord& b) { return a.record_id < b.record_id; });
  RecordSet out;
  out.source_order = rs.source_order;
  for (const auto& s : rs.source_order) {
    auto it = rs.source_index.find(s);
    out.source_index[s] = IdRange{it->second.first, it->second.first, 0};
  }
  for (const auto& r : records) {
    auto& range = out.source_index[r.source_id];
    if (range.count == 0) range.first = r.record_id;
    range.last = r.record_id + 1;
    ++range.count;
  }
  out.records = std::move(records);
  return out;
}

namespace detail {
inline std::string_view stratum_name(const std::optional<Label>& l) {
  if (!l) return "unlabeled";
  return *l == Label::Anomaly ? "anomaly" : "normal";
}
}  // namespace detail

/// Stratified (per source, per gold label) seeded split. Each source gets
/// round(ratio * n) training records; strata share that quota by largest
/// remainder.
inline std::pair<RecordSet, RecordSet> split_train_test(const RecordSet& rs, double ratio, std::uint64_t seed,
                                                        Diagnostics* diag = nullptr) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractViolation("split ratio must lie in (0, 1)");
  std::vector<LogRecord> train, test;
  for (const auto& source : rs.source_order) {
    auto members = rs.of_source(source);
    if (members.size() < 2) {
      for (auto* r : members) train.push_back(*r);
      if (diag) diag->warn("source '" + source + "' has fewer than 2 records; all assigned to train");
      continue;
    }
    // Strata in fixed order: normal, anomaly, unlabeled.
    std::array<std::vector<const LogRecord*>, 3> strata;
    for (auto* r : members) {
      std::size_t s = !r->gold_label ? 2 : (*r->gold_label == Label::Anomaly ? 1 : 0);
      strata[s].push_back(r);
    }
    const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size())));
    std::array<std::size_t, 3> quota{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      double exact = ratio * static_cast<double>(strata[s].size());
      quota[s] = static_cast<std::size_t>(std::floor(exact));
      frac[s] = exact - std::floor(exact);
      assigned += quota[s];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < target && k < 3; ++k) {
      std::size_t s = order[k];
      if (quota[s] < strata[s].size()) {
        ++quota[s];
        ++assigned;
      }
    }
    for (std::size_t s = 0; s < 3; ++s) {
      auto& group = strata[s];
      if (group.empty()) continue;
      std::string key = source + "/" + std::string(detail::stratum_name(group.front()->gold_label));
      Rng rng(derive_seed(seed, key));
      rng.shuffle(group);
      for (std::size_t i = 0; i < group.size(); ++i) (i < quota[s] ? train : test).push_back(*group[i]);
    }
  }
  return {subset(rs, std::move(train)), subset(rs, std::move(test))};
}

}  // namespace metalog
