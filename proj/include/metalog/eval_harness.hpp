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
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metalog/balance.hpp"
#include "metalog/common.hpp"
#include "metalog/config.hpp"
#include "metalog/embedding.hpp"
#include "metalog/feature_select.hpp"
#include "metalog/ingest.hpp"
#include "metalog/label_transfer.hpp"
#include "metalog/meta_learner.hpp"
#include "metalog/neural_core.hpp"
#include "metalog/template_miner.hpp"

namespace metalog {

inline constexpr std::string_view kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Metrics (Anomaly = positive class)

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

inline ConfusionCounts confusion(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size()) throw Error("confusion: predictions and gold labels differ in length");
  if (preds.empty()) throw ContractViolation("confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == 1, g = golds[i] == 1;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool operator==(const Metrics&) const = default;
};

/// Harmonic-mean F1; every undefined ratio is 0.
inline Metrics f1(const ConfusionCounts& c) {
  Metrics m;
  m.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline std::pair<double, double> mean_and_population_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

// ---------------------------------------------------------------------------
// Dataset: records, mined templates, per-source 70/30 partitions

struct Dataset {
  RecordSet records;
  TemplateMiner miner;
  std::map<std::int64_t, Assignment> assignment_of;
  RecordSet train;
  RecordSet test;

  const LogRecord& record(std::int64_t id) const {
    auto it = std::lower_bound(records.records.begin(), records.records.end(), id,
                               [](const LogRecord& r, std::int64_t v) { return r.record_id < v; });
    if (it == records.records.end() || it->record_id != id) throw Error("unknown record id " + std::to_string(id));
    return *it;
  }
};

inline std::uint64_t split_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "split"); }
inline std::uint64_t fold_seed(const RunConfig& cfg, const std::string& target) {
  return derive_seed(cfg.seed, "fold/" + target);
}

/// Records, frozen trees and partitions. Assignments always come from the
/// frozen trees, so a dataset rebuilt from a saved store is identical.
inline Dataset dataset_from_store(RecordSet rs, TemplateMiner frozen, const RunConfig& cfg,
                                  Diagnostics* diag = nullptr) {
  Dataset ds;
  ds.miner = std::move(frozen);
  for (auto& a : ds.miner.assign(rs)) ds.assignment_of[a.record_id] = std::move(a);
  auto [train, test] = split_train_test(rs, cfg.split_ratio, split_seed(cfg), diag);
  ds.train = std::move(train);
  ds.test = std::move(test);
  ds.records = std::move(rs);
  return ds;
}

/// Mines templates over the whole corpus (label-free, one tree per source)
/// and freezes them through a store round trip.
inline TemplateMiner mine_templates(const RecordSet& rs, const ParseTreeConfig& tree) {
  TemplateMiner miner(rs.source_order, tree);
  miner.mine(rs);
  std::stringstream store;
  save_template_store(miner, store);
  return load_template_store(store, rs.source_order, tree);
}

inline Dataset prepare_dataset(RecordSet rs, const RunConfig& cfg, Diagnostics* diag = nullptr) {
  TemplateMiner miner = mine_templates(rs, cfg.tree);
  return dataset_from_store(std::move(rs), std::move(miner), cfg, diag);
}

/// The fold's meta-training pool: training partitions of every other source.
inline RecordSet pool_records(const Dataset& ds, const std::string& target) {
  std::vector<LogRecord> records;
  for (const auto& r : ds.train.records)
    if (r.source_id != target) records.push_back(r);
  return subset(ds.train, std::move(records));
}

inline std::vector<std::string> pool_sources(const Dataset& ds, const std::string& target) {
  std::vector<std::string> out;
  for (const auto& s : ds.records.source_order)
    if (s != target) out.push_back(s);
  return out;
}

/// Semantic block from `embedder`, structural block from the frozen tree.
inline FeatureVector featurize_record(const Dataset& ds, const LogRecord& r, const Embedder& embedder, Label label,
                                      bool drift_flag, Diagnostics* diag = nullptr) {
  bool empty = false;
  auto semantic = embedder.embed(r.message, &empty);
  if (empty && diag) diag->warn("record " + std::to_string(r.record_id) + ": empty semantic vector");
  const Assignment& a = ds.assignment_of.at(r.record_id);
  const ParseTree& tree = ds.miner.tree_of(a.template_id);
  auto structural = structural_features(r, tree.get(a.template_id), tree, a.parameters);
  return assemble(r, semantic, structural, label, drift_flag, embedder.dim());
}

/// Builds the run's embedder: hashed text fitted on `fit_on`, optionally
/// fronted by external vectors.
inline std::shared_ptr<const Embedder> make_embedder(const RunConfig& cfg, const RecordSet& fit_on,
                                                     std::uint64_t seed, Diagnostics* diag = nullptr) {
  auto hashed = std::make_shared<HashedTextEmbedder>(fit_embedder(fit_on, cfg.semantic_dim, seed));
  if (!cfg.external_embeddings) return hashed;
  auto ext = load_external_embeddings(*cfg.external_embeddings, cfg.semantic_dim, diag);
  return std::make_shared<ExternalFirstEmbedder>(std::move(ext), hashed);
}

/// Gold label when present, otherwise the record's template transfer.
inline std::map<std::int64_t, RecordLabel> record_labels(const Dataset& ds, const RecordSet& pool,
                                                         const std::vector<TransferResult>& transfers) {
  std::map<std::int64_t, RecordLabel> by_template, out;
  for (const auto& t : transfers) by_template[t.template_id] = record_label_from_transfer(t);
  for (const auto& r : pool.records) {
    if (r.gold_label) {
      out[r.record_id] = {*r.gold_label, false};
      continue;
    }
    auto it = by_template.find(ds.assignment_of.at(r.record_id).template_id);
    if (it == by_template.end()) throw Error("record " + std::to_string(r.record_id) + " has neither a gold nor a transferred label");
    out[r.record_id] = it->second;
  }
  return out;
}

struct PoolLabels {
  std::map<std::int64_t, RecordLabel> by_record;
  std::vector<TransferResult> transfers;
  std::size_t kb_entries = 0;
  std::size_t kb_conflicts = 0;
};

/// Gold labels where present; records without one inherit their template's
/// transferred label from a knowledge base of gold-labeled templates.
inline PoolLabels resolve_labels(const Dataset& ds, const RecordSet& pool, const Embedder& embedder, double tau,
                                 Diagnostics* diag = nullptr) {
  PoolLabels out;
  std::vector<Assignment> pool_assignments;
  for (const auto& r : pool.records) pool_assignments.push_back(ds.assignment_of.at(r.record_id));
  const auto gold_templates = template_gold_labels(pool, pool_assignments);

  std::set<std::int64_t> needs_transfer;
  for (const auto& r : pool.records)
    if (!r.gold_label) needs_transfer.insert(ds.assignment_of.at(r.record_id).template_id);
  if (needs_transfer.empty()) {
    out.by_record = record_labels(ds, pool, {});
    return out;
  }
  if (gold_templates.empty()) throw Error("records without gold labels and no labeled templates to transfer from");

  std::vector<LabeledTemplate> labeled;
  for (const auto& [tid, label] : gold_templates) labeled.push_back({ds.miner.get(tid), label, ds.miner.tree_of(tid).source_id()});
  const KnowledgeBase kb = build_knowledge_base(labeled, embedder);
  out.kb_entries = kb.entries.size();
  out.kb_conflicts = kb.conflicts;
  std::vector<LogTemplate> candidates;
  for (auto tid : needs_transfer) candidates.push_back(ds.miner.get(tid));
  out.transfers = transfer_labels(candidates, kb, tau, embedder, diag);
  out.by_record = record_labels(ds, pool, out.transfers);
  return out;
}

inline Eigen::MatrixXd to_matrix(const std::vector<FeatureVector>& rows) {
  const auto d = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().values.size());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), j) = rows[i].values[static_cast<std::size_t>(j)];
  return X;
}

inline std::vector<int> labels_of(const std::vector<FeatureVector>& rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (const auto& r : rows) y.push_back(to_int(r.label));
  return y;
}

/// Fits the selection mask on `rows` (training data only).
inline SelectionMask fit_selection(const std::vector<FeatureVector>& rows, const RunConfig& cfg, std::uint64_t seed,
                                   Diagnostics* diag = nullptr, FeatureScores* scores = nullptr) {
  const Eigen::MatrixXd X = to_matrix(rows);
  const auto y = labels_of(rows);
  auto mi = mi_scores(X, y, cfg.mi_bins);
  auto forest = forest_scores(X, y, ForestConfig{cfg.forest_trees, cfg.forest_depth, seed}, diag);
  auto mask = select_top_k(mi, forest, cfg.k);
  if (scores) *scores = {mi, forest, fused_ranks(mi, forest)};
  return mask;
}

inline std::vector<FeatureVector> apply_mask(const std::vector<FeatureVector>& rows, const SelectionMask& mask) {
  std::vector<FeatureVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    FeatureVector fv = r;
    fv.values = apply_mask(r.values, mask);
    out.push_back(std::move(fv));
  }
  return out;
}

struct SourceBalance {
  std::string source_id;
  std::optional<BalanceReport> report;  // empty when the source was skipped
  std::string skipped_reason;
};

/// Per-source SMOTE in the selected space. Synthetic rows get negative
/// record ids and inherit the source. Sources that cannot be balanced are
/// passed through unchanged with a warning.
inline std::vector<FeatureVector> balance_per_source(const std::vector<FeatureVector>& rows,
                                                     const std::vector<std::string>& source_order, std::size_t k,
                                                     std::uint64_t seed, std::vector<SourceBalance>* reports = nullptr,
                                                     Diagnostics* diag = nullptr) {
  std::vector<FeatureVector> out;
  std::int64_t next_synthetic = -1;
  for (const auto& source : source_order) {
    std::vector<FeatureVector> mine;
    for (const auto& r : rows)
      if (r.source_id == source) mine.push_back(r);
    if (mine.empty()) continue;
    SourceBalance sb{source, std::nullopt, {}};
    try {
      auto bal = balance_training_set(to_matrix(mine), labels_of(mine), k, derive_seed(seed, "smote/" + source));
      sb.report = bal.report;
      for (auto& r : mine) out.push_back(std::move(r));
      for (Eigen::Index i = static_cast<Eigen::Index>(mine.size()); i < bal.X.rows(); ++i) {
        FeatureVector fv;
        fv.values.resize(static_cast<std::size_t>(bal.X.cols()));
        for (Eigen::Index j = 0; j < bal.X.cols(); ++j) fv.values[static_cast<std::size_t>(j)] = bal.X(i, j);
        fv.record_id = next_synthetic--;
        fv.source_id = source;
        fv.label = label_from_int(bal.y[static_cast<std::size_t>(i)]);
        out.push_back(std::move(fv));
      }
    } catch (const Error& e) {
      sb.skipped_reason = e.what();
      if (diag) diag->warn("balance: source '" + source + "' left unbalanced: " + e.what());
      for (auto& r : mine) out.push_back(std::move(r));
    }
    if (reports) reports->push_back(std::move(sb));
  }
  return out;
}

inline EpisodePool make_pool(const std::vector<FeatureVector>& rows, const std::vector<std::string>& source_order) {
  EpisodePool pool;
  for (const auto& source : source_order) {
    SourcePool sp;
    sp.source_id = source;
    for (const auto& r : rows)
      if (r.source_id == source) sp.add(r.values, to_int(r.label), r.record_id < 0, r.drift_flag, r.record_id);
    if (sp.size() > 0) pool.sources.push_back(std::move(sp));
  }
  return pool;
}

inline std::vector<std::size_t> encoder_sizes(std::size_t input, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> sizes{input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  return sizes;
}

/// Nearest class mean in the input space (no encoder, no adaptation).
inline std::vector<int> nearest_prototype_baseline(const Eigen::MatrixXd& support_x, std::span<const int> support_y,
                                                   const Eigen::MatrixXd& queries) {
  std::vector<int> out;
  if (queries.rows() == 0) return out;
  const Prototypes p = compute_prototypes(support_x, support_y);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const double d0 = (queries.row(i).transpose() - *p.mean[0]).squaredNorm();
    const double d1 = (queries.row(i).transpose() - *p.mean[1]).squaredNorm();
    out.push_back(d1 < d0 ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-source-out

struct FoldResult {
  std::string source_id;
  bool failed = false;
  std::string failure;
  ConfusionCounts counts;
  Metrics metrics;
  bool support_warning = false;
  double baseline_f1 = 0.0;

  std::vector<std::int64_t> pool_record_ids;  // real training-pool records
  std::vector<std::int64_t> support_record_ids;
  std::vector<std::int64_t> query_record_ids;
  std::vector<int> predictions;
  std::vector<int> golds;
  std::vector<double> p_anomaly;
  std::vector<int> baseline_predictions;

  std::vector<CurveRow> curve;
  std::vector<SourceBalance> balance;
  std::size_t transferred_templates = 0;
  std::size_t drifted_templates = 0;
  SelectionMask mask;
};

struct LosoReport {
  std::vector<FoldResult> folds;  // manifest order
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  double baseline_mean_f1 = 0.0;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  bool any_failed() const {
    return std::any_of(folds.begin(), folds.end(), [](const FoldResult& f) { return f.failed; });
  }
};

/// Held-out source's adaptation support: S_min anomalies + S_maj normals
/// drawn from its training partition (fewer anomalies if unavailable).
inline std::vector<const LogRecord*> draw_target_support(const RecordSet& target_train, const std::string& source,
                                                         const MetaConfig& meta, std::uint64_t seed, bool* short_minority) {
  std::vector<std::size_t> minority, majority;
  auto members = target_train.of_source(source);
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!members[i]->gold_label) continue;
    (*members[i]->gold_label == Label::Anomaly ? minority : majority).push_back(i);
  }
  if (minority.empty()) throw Error("target source '" + source + "' has no labeled anomaly to adapt on");
  if (majority.empty()) throw Error("target source '" + source + "' has no labeled normal record to adapt on");
  *short_minority = minority.size() < meta.support_minority;
  Rng rng(seed);
  auto mins = detail::draw(minority, meta.support_minority, rng);
  auto majs = detail::draw(majority, meta.support_majority, rng);
  std::vector<const LogRecord*> out;
  for (auto i : mins) out.push_back(members[i]);
  for (auto i : majs) out.push_back(members[i]);
  return out;
}

struct TargetSets {
  std::vector<FeatureVector> support;  // adaptation support (training partition)
  std::vector<FeatureVector> queries;  // labeled test partition
  bool support_warning = false;
};

/// Full-width feature rows for the held-out source.
inline TargetSets target_sets(const Dataset& ds, const std::string& target, const Embedder& embedder,
                              const RunConfig& cfg, std::uint64_t seed, Diagnostics* diag = nullptr) {
  TargetSets out;
  auto support = draw_target_support(ds.train, target, cfg.meta, derive_seed(seed, "target_support"),
                                     &out.support_warning);
  if (out.support_warning && diag)
    diag->warn("fold '" + target + "': fewer than " + std::to_string(cfg.meta.support_minority) +
               " labeled anomalies for adaptation; using all available");
  for (const auto* r : support) out.support.push_back(featurize_record(ds, *r, embedder, *r->gold_label, false, diag));
  for (const auto* r : ds.test.of_source(target))
    if (r->gold_label) out.queries.push_back(featurize_record(ds, *r, embedder, *r->gold_label, false, diag));
  if (out.queries.empty()) throw Error("fold '" + target + "': no labeled test records to score");
  return out;
}

/// Everything one fold needs, exposed so the CLI stages and tests can drive
/// a fold step by step.
inline FoldResult run_fold(const Dataset& ds, const std::string& target_id, const RunConfig& cfg, Diagnostics* diag) {
  FoldResult fold;
  fold.source_id = target_id;
  const std::uint64_t seed = fold_seed(cfg, target_id);
  const RecordSet pool = pool_records(ds, target_id);
  const auto sources = pool_sources(ds, target_id);
  if (pool.records.empty()) throw Error("fold '" + target_id + "': empty training pool");
  for (const auto& r : pool.records) fold.pool_record_ids.push_back(r.record_id);

  auto embedder = make_embedder(cfg, pool, derive_seed(seed, "embed"), diag);
  const PoolLabels labels = resolve_labels(ds, pool, *embedder, cfg.tau, diag);
  for (const auto& t : labels.transfers) (t.drift_flag() ? fold.drifted_templates : fold.transferred_templates)++;

  std::vector<FeatureVector> pool_features;
  pool_features.reserve(pool.records.size());
  for (const auto& r : pool.records) {
    const RecordLabel& l = labels.by_record.at(r.record_id);
    pool_features.push_back(featurize_record(ds, r, *embedder, l.label, l.drift_flag, diag));
  }
  fold.mask = fit_selection(pool_features, cfg, derive_seed(seed, "forest"), diag);
  auto selected = apply_mask(pool_features, fold.mask);
  auto balanced = balance_per_source(selected, sources, cfg.smote_k, derive_seed(seed, "smote"),
                                     &fold.balance, diag);
  const EpisodePool episode_pool = make_pool(balanced, sources);

  MetaConfig meta = cfg.meta;
  meta.seed = derive_seed(seed, "meta");
  const EncoderParams theta0 = init_encoder(encoder_sizes(cfg.k, cfg.hidden), derive_seed(seed, "init"));
  MetaTrainResult trained = meta_train(episode_pool, meta, theta0);
  fold.curve = std::move(trained.curve);

  auto target = target_sets(ds, target_id, *embedder, cfg, seed, diag);
  fold.support_warning = target.support_warning;
  for (const auto& r : target.support) fold.support_record_ids.push_back(r.record_id);
  for (const auto& r : target.queries) fold.query_record_ids.push_back(r.record_id);
  const auto& support_rows = target.support;
  const auto& query_rows = target.queries;
  const Eigen::MatrixXd sx = to_matrix(apply_mask(support_rows, fold.mask));
  const auto sy = labels_of(support_rows);
  const Eigen::MatrixXd qx = to_matrix(apply_mask(query_rows, fold.mask));
  fold.golds = labels_of(query_rows);

  auto pred = adapt_and_predict(trained.theta, sx, sy, qx, cfg.meta);
  fold.predictions = std::move(pred.labels);
  fold.p_anomaly = std::move(pred.p_anomaly);
  fold.counts = confusion(fold.predictions, fold.golds);
  fold.metrics = f1(fold.counts);

  fold.baseline_predictions = nearest_prototype_baseline(sx, sy, qx);
  fold.baseline_f1 = f1(confusion(fold.baseline_predictions, fold.golds)).f1;
  return fold;
}

inline void aggregate(LosoReport& report) {
  std::vector<double> f1s, base;
  for (const auto& f : report.folds) {
    if (f.failed) continue;
    f1s.push_back(f.metrics.f1);
    base.push_back(f.baseline_f1);
  }
  std::tie(report.mean_f1, report.std_f1) = mean_and_population_std(f1s);
  report.baseline_mean_f1 = mean_and_population_std(base).first;
}

/// One fold per source. A failing fold is recorded and the run continues.
inline LosoReport run_loso(const Dataset& ds, const RunConfig& cfg) {
  if (ds.records.source_order.size() < 2) throw Error("run_loso: need at least 2 sources");
  LosoReport report;
  report.config_digest = cfg.digest();
  report.seed = cfg.seed;
  for (const auto& target : ds.records.source_order) {
    Diagnostics diag;
    FoldResult fold;
    try {
      fold = run_fold(ds, target, cfg, &diag);
    } catch (const std::exception& e) {
      fold = FoldResult{};
      fold.source_id = target;
      fold.failed = true;
      fold.failure = e.what();
      diag.warn("fold '" + target + "' failed: " + e.what());
    }
    for (auto& w : diag.warnings) report.warnings.push_back("[" + target + "] " + w);
    report.folds.push_back(std::move(fold));
  }
  aggregate(report);
  return report;
}

// ---------------------------------------------------------------------------
// Report output

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void write_report_table(const LosoReport& r, std::ostream& out) {
  out << std::left << std::setw(16) << "source" << std::right << std::setw(10) << "precision" << std::setw(10)
      << "recall" << std::setw(10) << "f1" << std::setw(12) << "baseline" << std::setw(8) << "tp" << std::setw(8)
      << "fp" << std::setw(8) << "tn" << std::setw(8) << "fn" << "  note\n";
  for (const auto& f : r.folds) {
    out << std::left << std::setw(16) << f.source_id << std::right;
    if (f.failed) {
      out << "  FAILED: " << f.failure << '\n';
      continue;
    }
    out << std::setw(10) << fixed(f.metrics.precision) << std::setw(10) << fixed(f.metrics.recall) << std::setw(10)
        << fixed(f.metrics.f1) << std::setw(12) << fixed(f.baseline_f1) << std::setw(8) << f.counts.tp << std::setw(8)
        << f.counts.fp << std::setw(8) << f.counts.tn << std::setw(8) << f.counts.fn
        << (f.support_warning ? "  short support" : "") << '\n';
  }
  out << "mean F1 " << fixed(r.mean_f1) << " +/- " << fixed(r.std_f1) << " (population std over "
      << std::count_if(r.folds.begin(), r.folds.end(), [](const FoldResult& f) { return !f.failed; })
      << " sources); baseline mean F1 " << fixed(r.baseline_mean_f1) << '\n';
}

/// Per-source rows plus a summary row; full-precision numbers.
inline void write_report_csv(const LosoReport& r, std::ostream& out) {
  out << "source_id,precision,recall,f1,support_warning,tp,fp,tn,fn,baseline_f1,status\n";
  std::string line;
  for (const auto& f : r.folds) {
    line = f.source_id + ',';
    append_double(line, f.metrics.precision);
    line += ',';
    append_double(line, f.metrics.recall);
    line += ',';
    append_double(line, f.metrics.f1);
    line += ',' + std::string(f.support_warning ? "1" : "0") + ',' + std::to_string(f.counts.tp) + ',' +
            std::to_string(f.counts.fp) + ',' + std::to_string(f.counts.tn) + ',' + std::to_string(f.counts.fn) + ',';
    append_double(line, f.baseline_f1);
    line += f.failed ? ",failed" : ",ok";
    out << line << '\n';
  }
  line = "MEAN,,,";
  append_double(line, r.mean_f1);
  line += ",,,,,,";
  append_double(line, r.baseline_mean_f1);
  line += ",std=";
  append_double(line, r.std_f1);
  out << line << '\n';
}

inline void write_run_metadata(const LosoReport& r, const RunConfig& cfg, std::ostream& out) {
  out << "version = " << kVersion << '\n';
  out << "config_digest = " << r.config_digest << '\n';
  out << "seed = " << r.seed << '\n';
  for (const auto& f : r.folds) {
    out << "seed.fold." << f.source_id << " = " << fold_seed(cfg, f.source_id) << '\n';
  }
  out << "\n[config]\n" << cfg.canonical_text();
  out << "\n[balance]\n";
  for (const auto& f : r.folds)
    for (const auto& b : f.balance) {
      out << f.source_id << "/" << b.source_id << " = ";
      if (b.report)
        out << "before " << b.report->before_majority << ":" << b.report->before_minority << " after "
            << b.report->after_majority << ":" << b.report->after_minority << " synthetic "
            << b.report->synthetic_count << " k " << b.report->k_neighbors_used << '\n';
      else
        out << "skipped (" << b.skipped_reason << ")\n";
    }
  out << "\n[label_transfer]\n";
  for (const auto& f : r.folds)
    out << f.source_id << " = transferred " << f.transferred_templates << " drifted " << f.drifted_templates << '\n';
  out << "\n[warnings]\n";
  for (const auto& w : r.warnings) out << w << '\n';
}

inline void write_predictions(const FoldResult& f, std::ostream& out) {
  out << "record_id,gold,pred,p_anomaly,baseline_pred\n";
  std::string line;
  for (std::size_t i = 0; i < f.predictions.size(); ++i) {
    line = std::to_string(f.query_record_ids[i]) + ',' + std::to_string(f.golds[i]) + ',' +
           std::to_string(f.predictions[i]) + ',';
    append_double(line, f.p_anomaly[i]);
    line += ',' + std::to_string(f.baseline_predictions[i]);
    out << line << '\n';
  }
}

/// report.txt, report.csv, run_meta.txt, plus per-fold curves and
/// predictions under `dir`.
inline void write_loso_outputs(const LosoReport& r, const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write '" + (dir / name).string() + "'");
    return out;
  };
  {
    auto out = open("report.txt");
    write_report_table(r, out);
  }
  {
    auto out = open("report.csv");
    write_report_csv(r, out);
  }
  {
    auto out = open("run_meta.txt");
    write_run_metadata(r, cfg, out);
  }
  for (const auto& f : r.folds) {
    if (f.failed) continue;
    auto curve = open("curve_" + f.source_id + ".csv");
    save_curve(f.curve, curve);
    auto preds = open("predictions_" + f.source_id + ".csv");
    write_predictions(f, preds);
  }
}

}  // namespace metalog
