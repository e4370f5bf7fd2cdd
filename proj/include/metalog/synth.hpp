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

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "metalog/common.hpp"
#include "metalog/config.hpp"
#include "metalog/ingest.hpp"

namespace metalog {

/// Seeded generator for a multi-source labeled log corpus. Each source gets
/// its own vocabulary, header format and message grammar; anomalies come
/// from templates that mix source words with a shared error vocabulary.
struct SynthConfig {
  std::size_t sources = 6;
  std::size_t per_source = 1000;
  double imbalance = 50.0;  // normal lines per anomalous line
  std::uint64_t seed = 42;
  std::size_t normal_templates = 18;
  std::size_t anomaly_templates = 8;
};

struct SynthSource {
  std::string source_id;
  std::string header;
  std::vector<std::string> lines;
  std::vector<int> labels;
};

namespace synth {

struct Theme {
  const char* name;
  std::array<const char*, 24> words;
};

inline const std::array<Theme, 6>& themes() {
  static const std::array<Theme, 6> kThemes{{
      {"webfront", {"request", "handler", "route", "session", "cookie", "upstream", "vhost", "worker", "client",
                    "response", "cache", "static", "proxy", "header", "keepalive", "listener", "module", "rewrite",
                    "gzip", "asset", "template", "render", "query", "redirect"}},
      {"storage", {"block", "replica", "datanode", "volume", "chunk", "pipeline", "packet", "checksum", "lease",
                   "namespace", "inode", "snapshot", "balancer", "scanner", "heartbeat", "quota", "stripe",
                   "journal", "segment", "extent", "mirror", "shard", "placement", "offset"}},
      {"scheduler", {"container", "allocation", "queue", "attempt", "application", "executor", "node", "resource",
                     "vcores", "memory", "priority", "reservation", "preemption", "lease", "slot", "capacity",
                     "tenant", "placement", "launch", "manager", "tracker", "job", "stage", "task"}},
      {"auth", {"user", "login", "token", "principal", "realm", "ticket", "group", "policy", "credential", "session",
                "password", "account", "role", "scope", "grant", "audit", "issuer", "subject", "claim", "directory",
                "binding", "keytab", "nonce", "identity"}},
      {"netgw", {"interface", "packet", "route", "gateway", "tunnel", "peer", "link", "vlan", "bridge", "neighbor",
                 "prefix", "carrier", "firewall", "rule", "socket", "frame", "bandwidth", "queue", "mtu", "arp",
                 "dhcp", "lease", "uplink", "port"}},
      {"dbnode", {"transaction", "table", "index", "checkpoint", "buffer", "page", "lock", "tuple", "vacuum", "query",
                  "planner", "cursor", "commit", "relation", "schema", "replication", "wal", "segment", "autovacuum",
                  "statement", "backend", "connection", "pool", "catalog"}},
  }};
  return kThemes;
}

inline const std::vector<std::string>& normal_verbs() {
  static const std::vector<std::string> v{"started", "completed", "received", "sent",      "updated",   "opened",
                                          "closed",  "scheduled", "assigned", "registered", "refreshed", "loaded",
                                          "stored",  "accepted",  "verified", "allocated",  "released",  "synced"};
  return v;
}

/// Generic operational words every source uses now and then.
inline const std::vector<std::string>& common_words() {
  static const std::vector<std::string> v{"service", "thread",  "process", "status", "config", "host",  "cluster",
                                          "version", "channel", "handle",  "state",  "event",  "daemon", "instance",
                                          "context", "target",  "entry",   "record", "batch",  "item"};
  return v;
}

/// Shared anomaly vocabulary; every source's anomaly templates draw from it.
inline const std::vector<std::string>& error_words() {
  static const std::vector<std::string> v{"error",     "failed",   "exception", "timeout", "refused",
                                          "corrupted", "fatal",    "denied",    "crashed", "unreachable",
                                          "aborted",   "panic",    "overflow",  "invalid", "lost"};
  return v;
}

inline std::string pseudo_word(Rng& rng) {
  static const char* kOnset[] = {"b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "st", "tr", "pl"};
  static const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::string w;
  const std::size_t syllables = 2 + rng.uniform_index(2);
  for (std::size_t i = 0; i < syllables; ++i) {
    w += kOnset[rng.uniform_index(std::size(kOnset))];
    w += kVowel[rng.uniform_index(std::size(kVowel))];
  }
  return w;
}

inline std::vector<std::string> vocabulary(std::size_t source, Rng& rng) {
  std::vector<std::string> words;
  if (source < themes().size()) {
    for (const char* w : themes()[source].words) words.emplace_back(w);
  } else {
    while (words.size() < 24) words.push_back(pseudo_word(rng));
  }
  return words;
}

inline std::string source_name(std::size_t source) {
  if (source < themes().size()) return themes()[source].name;
  return "src" + std::to_string(source);
}

// Slot kinds rendered per line.
enum class Slot { Word, Int, Hex, Path, Ip, Millis };

struct Part {
  Slot slot = Slot::Word;
  std::string text;
};

using Grammar = std::vector<Part>;

inline std::string render_slot(const Part& p, const std::vector<std::string>& vocab, Rng& rng) {
  char buf[64];
  switch (p.slot) {
    case Slot::Word:
      return p.text;
    case Slot::Int:
      return std::to_string(rng.uniform_index(100000));
    case Slot::Hex:
      std::snprintf(buf, sizeof buf, "0x%08llx", static_cast<unsigned long long>(rng.next() & 0xffffffffULL));
      return buf;
    case Slot::Path:
      return "/" + vocab[rng.uniform_index(vocab.size())] + "/" + vocab[rng.uniform_index(vocab.size())] + "/" +
             std::to_string(rng.uniform_index(1000));
    case Slot::Ip:
      std::snprintf(buf, sizeof buf, "10.%u.%u.%u", static_cast<unsigned>(rng.uniform_index(256)),
                    static_cast<unsigned>(rng.uniform_index(256)), static_cast<unsigned>(rng.uniform_index(256)));
      return buf;
    case Slot::Millis:
      return std::to_string(rng.uniform_index(5000)) + "ms";
  }
  return {};
}

inline Part random_slot(Rng& rng) {
  static constexpr Slot kSlots[] = {Slot::Int, Slot::Hex, Slot::Path, Slot::Ip, Slot::Millis};
  return {kSlots[rng.uniform_index(std::size(kSlots))], {}};
}

inline std::string context_word(const std::vector<std::string>& vocab, Rng& rng) {
  if (rng.uniform01() < 0.3) return common_words()[rng.uniform_index(common_words().size())];
  return vocab[rng.uniform_index(vocab.size())];
}

inline Grammar normal_grammar(const std::vector<std::string>& vocab, Rng& rng) {
  Grammar g;
  g.push_back({Slot::Word, vocab[rng.uniform_index(vocab.size())]});
  g.push_back({Slot::Word, normal_verbs()[rng.uniform_index(normal_verbs().size())]});
  const std::size_t extra = 2 + rng.uniform_index(5);
  for (std::size_t i = 0; i < extra; ++i) {
    if (rng.uniform01() < 0.4) g.push_back(random_slot(rng));
    else g.push_back({Slot::Word, context_word(vocab, rng)});
  }
  return g;
}

/// Anomalies carry at least two distinct error words.
inline Grammar anomaly_grammar(const std::vector<std::string>& vocab, Rng& rng) {
  const auto& err = error_words();
  Grammar g;
  g.push_back({Slot::Word, vocab[rng.uniform_index(vocab.size())]});
  const std::size_t first = rng.uniform_index(err.size());
  const std::size_t second = (first + 1 + rng.uniform_index(err.size() - 1)) % err.size();
  g.push_back({Slot::Word, err[first]});
  const std::size_t extra = 2 + rng.uniform_index(5);
  const std::size_t second_at = rng.uniform_index(extra);
  for (std::size_t i = 0; i < extra; ++i) {
    if (i == second_at) g.push_back({Slot::Word, err[second]});
    else if (rng.uniform01() < 0.4) g.push_back(random_slot(rng));
    else g.push_back({Slot::Word, vocab[rng.uniform_index(vocab.size())]});
  }
  return g;
}

inline const char* header_format(std::size_t source) {
  static const char* kHeaders[] = {"apache", "hdfs", "hadoop", "syslog", "timestamp", "none"};
  return kHeaders[source % std::size(kHeaders)];
}

inline std::string render_header(const std::string& format, std::uint64_t t) {
  static const char* kMonth[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  static const char* kDay[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
  const unsigned sec = static_cast<unsigned>(t % 60), min = static_cast<unsigned>(t / 60 % 60),
                 hour = static_cast<unsigned>(t / 3600 % 24), day = static_cast<unsigned>(t / 86400 % 28 + 1);
  char buf[96];
  if (format == "apache")
    std::snprintf(buf, sizeof buf, "[%s %s %02u %02u:%02u:%02u 2005] ", kDay[day % 7], kMonth[5], day, hour, min, sec);
  else if (format == "hdfs")
    std::snprintf(buf, sizeof buf, "0811%02u %02u%02u%02u %u ", day, hour, min, sec, static_cast<unsigned>(t % 997));
  else if (format == "hadoop")
    std::snprintf(buf, sizeof buf, "2015-10-%02u %02u:%02u:%02u,%03u ", day, hour, min, sec,
                  static_cast<unsigned>(t * 7 % 1000));
  else if (format == "syslog")
    std::snprintf(buf, sizeof buf, "%s %2u %02u:%02u:%02u ", kMonth[6], day, hour, min, sec);
  else if (format == "timestamp")
    std::snprintf(buf, sizeof buf, "2024-03-%02uT%02u:%02u:%02u.%03uZ ", day, hour, min, sec,
                  static_cast<unsigned>(t * 13 % 1000));
  else
    buf[0] = '\0';
  return buf;
}

}  // namespace synth

inline std::size_t synth_anomaly_count(const SynthConfig& cfg) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(cfg.per_source) / (cfg.imbalance + 1.0)));
}

inline std::vector<SynthSource> generate_corpus(const SynthConfig& cfg) {
  require(cfg.sources >= 2, "generate_corpus: need at least 2 sources");
  require(cfg.imbalance > 0.0, "generate_corpus: imbalance must be positive");
  std::vector<SynthSource> out;
  for (std::size_t s = 0; s < cfg.sources; ++s) {
    Rng rng(derive_seed(cfg.seed, "synth/" + std::to_string(s)));
    SynthSource src;
    src.source_id = synth::source_name(s);
    src.header = synth::header_format(s);
    const auto vocab = synth::vocabulary(s, rng);
    std::vector<synth::Grammar> normal, anomalous;
    for (std::size_t i = 0; i < cfg.normal_templates; ++i) normal.push_back(synth::normal_grammar(vocab, rng));
    for (std::size_t i = 0; i < cfg.anomaly_templates; ++i) anomalous.push_back(synth::anomaly_grammar(vocab, rng));

    const std::size_t n_anomaly = std::min(synth_anomaly_count(cfg), cfg.per_source);
    src.labels.assign(cfg.per_source, 0);
    std::fill(src.labels.begin(), src.labels.begin() + static_cast<std::ptrdiff_t>(n_anomaly), 1);
    rng.shuffle(src.labels);

    // Zipf-like template popularity for normal traffic.
    std::vector<double> weight(normal.size());
    double total = 0.0;
    for (std::size_t i = 0; i < normal.size(); ++i) total += weight[i] = 1.0 / std::sqrt(static_cast<double>(i + 1));
    std::uint64_t t = 3600 * (s + 1);
    for (std::size_t line = 0; line < cfg.per_source; ++line) {
      t += 1 + rng.uniform_index(30);
      const synth::Grammar* g;
      if (src.labels[line]) {
        g = &anomalous[rng.uniform_index(anomalous.size())];
      } else {
        double u = rng.uniform01() * total;
        std::size_t i = 0;
        while (i + 1 < normal.size() && u >= weight[i]) u -= weight[i++];
        g = &normal[i];
      }
      std::string msg;
      for (const auto& part : *g) {
        if (!msg.empty()) msg += ' ';
        msg += synth::render_slot(part, vocab, rng);
      }
      src.lines.push_back(synth::render_header(src.header, t) + msg);
    }
    out.push_back(std::move(src));
  }
  return out;
}

/// Writes <source>.log, <source>.labels.csv, manifest.cfg and a default
/// run.cfg pointing at it. Returns the manifest path.
inline std::filesystem::path write_corpus(const std::vector<SynthSource>& corpus, const std::filesystem::path& dir,
                                          std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  CorpusManifest manifest;
  manifest.seed = seed;
  for (const auto& src : corpus) {
    const auto log_path = dir / (src.source_id + ".log");
    const auto label_path = dir / (src.source_id + ".labels.csv");
    std::ofstream log(log_path, std::ios::binary), labels(label_path, std::ios::binary);
    if (!log || !labels) throw Error("cannot write corpus files under '" + dir.string() + "'");
    labels << "record_index,label\n";
    for (std::size_t i = 0; i < src.lines.size(); ++i) {
      log << src.lines[i] << '\n';
      labels << i << ',' << src.labels[i] << '\n';
    }
    SourceSpec spec;
    spec.source_id = src.source_id;
    spec.file_path = log_path;
    spec.header_pattern = src.header;
    spec.expected_count = src.lines.size();
    spec.labels_path = label_path;
    manifest.sources.push_back(std::move(spec));
  }
  const auto manifest_path = dir / "manifest.cfg";
  save_manifest(manifest, manifest_path);
  RunConfig run;
  run.manifest = "manifest.cfg";
  run.seed = seed;
  std::ofstream cfg_out(dir / "run.cfg", std::ios::binary);
  if (!cfg_out) throw Error("cannot write '" + (dir / "run.cfg").string() + "'");
  save_run_config(run, cfg_out);
  return manifest_path;
}

}  // namespace metalog
