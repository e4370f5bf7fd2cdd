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

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "metalog/balance.hpp"
#include "metalog/common.hpp"
#include "metalog/embedding.hpp"
#include "metalog/feature_select.hpp"
#include "metalog/label_transfer.hpp"
#include "metalog/meta_learner.hpp"
#include "metalog/template_miner.hpp"

namespace metalog {

/// Raised for bad configuration keys/values; the CLI maps it to exit 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Every knob of a pipeline run. Defaults are the library defaults.
struct RunConfig {
  std::filesystem::path manifest;
  std::uint64_t seed = 42;
  double split_ratio = 0.7;

  ParseTreeConfig tree{};
  double tau = kDefaultTransferThreshold;

  std::size_t semantic_dim = kDefaultSemanticDim;
  std::optional<std::filesystem::path> external_embeddings;

  std::size_t k = 200;
  int mi_bins = 10;
  std::size_t forest_trees = 50;
  std::size_t forest_depth = 8;

  std::size_t smote_k = kDefaultSmoteNeighbors;

  MetaConfig meta{};
  std::vector<std::size_t> hidden{128, 64, 32};

  /// Canonical "section.key=value" lines, sorted.
  std::vector<std::string> canonical() const;
  std::string digest() const { return hex16(fnv1a64(canonical_text())); }
  std::string canonical_text() const {
    std::string out;
    for (const auto& l : canonical()) out += l + "\n";
    return out;
  }
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (auto piece : split(text, ',')) out.push_back(parse_int<std::size_t>(trim(piece)));
  return out;
}

}  // namespace detail

inline std::vector<std::string> RunConfig::canonical() const {
  std::vector<std::string> l;
  auto add = [&](const std::string& key, const std::string& value) { l.push_back(key + "=" + value); };
  add("run.manifest", manifest.generic_string());
  add("run.seed", std::to_string(seed));
  add("run.split_ratio", format_double(split_ratio));
  add("parse.depth", std::to_string(tree.depth));
  add("parse.sim_threshold", format_double(tree.sim_threshold));
  add("parse.max_children", std::to_string(tree.max_children));
  add("label.tau", format_double(tau));
  add("embedding.dim", std::to_string(semantic_dim));
  add("embedding.external", external_embeddings ? external_embeddings->generic_string() : "");
  add("select.k", std::to_string(k));
  add("select.mi_bins", std::to_string(mi_bins));
  add("select.forest_trees", std::to_string(forest_trees));
  add("select.forest_depth", std::to_string(forest_depth));
  add("balance.smote_k", std::to_string(smote_k));
  add("train.inner_steps", std::to_string(meta.inner_steps));
  add("train.inner_lr", format_double(meta.inner_lr));
  add("train.outer_lr", format_double(meta.outer_lr));
  add("train.meta_batch", std::to_string(meta.meta_batch));
  add("train.episodes", detail::join_sizes({meta.episodes_per_phase.begin(), meta.episodes_per_phase.end()}));
  add("train.support_minority", std::to_string(meta.support_minority));
  add("train.support_majority", std::to_string(meta.support_majority));
  add("train.phase1_query_per_class", std::to_string(meta.phase1_query_per_class));
  add("train.query_cap", std::to_string(meta.query_cap));
  add("train.focal_gamma", format_double(meta.focal.gamma));
  add("train.focal_alpha", meta.focal.alpha ? format_double((*meta.focal.alpha)[0]) + "," +
                                                  format_double((*meta.focal.alpha)[1])
                                            : "balanced");
  add("train.threshold", format_double(meta.threshold));
  add("train.hidden", detail::join_sizes(hidden));
  std::sort(l.begin(), l.end());
  return l;
}

/// Apply one "section.key=value" setting.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& raw,
                          const std::filesystem::path& base = {}) {
  const std::string value(trim(raw));
  auto num = [&] { return parse_double(value); };
  auto uint = [&] { return parse_int<std::size_t>(value); };
  try {
    if (key == "run.manifest") cfg.manifest = base.empty() ? std::filesystem::path(value) : base / value;
    else if (key == "run.seed") cfg.seed = parse_int<std::uint64_t>(value);
    else if (key == "run.split_ratio") cfg.split_ratio = num();
    else if (key == "parse.depth") cfg.tree.depth = uint();
    else if (key == "parse.sim_threshold") cfg.tree.sim_threshold = num();
    else if (key == "parse.max_children") cfg.tree.max_children = uint();
    else if (key == "label.tau") cfg.tau = num();
    else if (key == "embedding.dim") cfg.semantic_dim = uint();
    else if (key == "embedding.external") {
      if (value.empty()) cfg.external_embeddings.reset();
      else cfg.external_embeddings = base.empty() ? std::filesystem::path(value) : base / value;
    } else if (key == "select.k") cfg.k = uint();
    else if (key == "select.mi_bins") cfg.mi_bins = parse_int<int>(value);
    else if (key == "select.forest_trees") cfg.forest_trees = uint();
    else if (key == "select.forest_depth") cfg.forest_depth = uint();
    else if (key == "balance.smote_k") cfg.smote_k = uint();
    else if (key == "train.inner_steps") cfg.meta.inner_steps = uint();
    else if (key == "train.inner_lr") cfg.meta.inner_lr = num();
    else if (key == "train.outer_lr") cfg.meta.outer_lr = num();
    else if (key == "train.meta_batch") cfg.meta.meta_batch = uint();
    else if (key == "train.episodes") {
      auto v = detail::parse_sizes(value);
      if (v.size() != 3) throw ConfigError("train.episodes needs three comma-separated counts");
      cfg.meta.episodes_per_phase = {v[0], v[1], v[2]};
    } else if (key == "train.support_minority") cfg.meta.support_minority = uint();
    else if (key == "train.support_majority") cfg.meta.support_majority = uint();
    else if (key == "train.phase1_query_per_class") cfg.meta.phase1_query_per_class = uint();
    else if (key == "train.query_cap") cfg.meta.query_cap = uint();
    else if (key == "train.focal_gamma") cfg.meta.focal.gamma = num();
    else if (key == "train.focal_alpha") {
      if (value == "balanced") cfg.meta.focal.alpha.reset();
      else {
        auto parts = split(value, ',');
        if (parts.size() != 2) throw ConfigError("train.focal_alpha must be 'balanced' or 'a0,a1'");
        cfg.meta.focal.alpha = std::array<double, 2>{parse_double(parts[0]), parse_double(parts[1])};
      }
    } else if (key == "train.threshold") cfg.meta.threshold = num();
    else if (key == "train.hidden") cfg.hidden = detail::parse_sizes(value);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) fail("run.split_ratio must lie in (0, 1)");
  if (c.tree.depth < 1) fail("parse.depth must be >= 1");
  if (!(c.tree.sim_threshold > 0.0 && c.tree.sim_threshold < 1.0)) fail("parse.sim_threshold must lie in (0, 1)");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) fail("label.tau must lie in (0, 1]");
  if (c.semantic_dim < 1) fail("embedding.dim must be >= 1");
  if (c.k < 1) fail("select.k must be >= 1");
  if (c.mi_bins < 2) fail("select.mi_bins must be >= 2");
  if (c.smote_k < 1) fail("balance.smote_k must be >= 1");
  if (c.meta.meta_batch < 1) fail("train.meta_batch must be >= 1");
  if (c.meta.inner_lr < 0.0 || c.meta.outer_lr <= 0.0) fail("learning rates must be positive");
  if (c.meta.focal.gamma < 0.0) fail("train.focal_gamma must be >= 0");
  if (c.hidden.empty()) fail("train.hidden needs at least one layer size");
}

/// Config file: INI sections [run] [parse] [label] [embedding] [select]
/// [balance] [train]; relative paths resolve against the file's directory.
/// `overrides` are "section.key=value" strings applied afterwards.
inline RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config '" + path.string() + "'");
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("malformed config '" + path.string() + "': " + e.message());
    }
    for (const auto& [section, node] : tree) {
      if (node.empty()) throw ConfigError("config key '" + section + "' must live inside a section");
      for (const auto& [key, leaf] : node) apply_setting(cfg, section + "." + key, leaf.data(), path.parent_path());
    }
  }
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not section.key=value");
    apply_setting(cfg, std::string(trim(o.substr(0, eq))), o.substr(eq + 1));
  }
  validate(cfg);
  return cfg;
}

inline void save_run_config(const RunConfig& cfg, std::ostream& out) {
  std::string section;
  for (const auto& line : cfg.canonical()) {
    auto dot = line.find('.');
    auto eq = line.find('=');
    std::string sec = line.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    out << line.substr(dot + 1, eq - dot - 1) << " = " << line.substr(eq + 1) << "\n";
  }
}

}  // namespace metalog
