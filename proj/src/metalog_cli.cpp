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


// metalog: staged pipeline CLI.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metalog/eval_harness.hpp"
#include "metalog/synth.hpp"

namespace fs = std::filesystem;
using namespace metalog;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string manifest;
};

RunConfig resolve_config(const GlobalOptions& g) {
  std::string path = g.config;
  if (path.empty())
    if (const char* env = std::getenv("METALOG_CONFIG")) path = env;
  RunConfig cfg = load_run_config(path, g.overrides);
  if (!g.manifest.empty()) cfg.manifest = g.manifest;
  return cfg;
}

std::ifstream open_input(const fs::path& p, const std::string& what) {
  std::ifstream in(p);
  if (!in) throw Error("missing " + what + ": expected file '" + p.string() + "'");
  return in;
}

std::ofstream open_output(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

void print_warnings(const Diagnostics& d) {
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << '\n';
}

RecordSet load_records(const RunConfig& cfg, Diagnostics& diag) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest: pass --manifest or set run.manifest in the config");
  return load_corpus(load_manifest(cfg.manifest), &diag);
}

fs::path store_file(const fs::path& dir, const std::string& source) { return dir / (source + ".templates.tsv"); }

/// Corpus + frozen trees from a parse-stage output directory.
Dataset load_dataset(const RunConfig& cfg, const fs::path& templates, Diagnostics& diag) {
  RecordSet rs = load_records(cfg, diag);
  std::stringstream store;
  for (const auto& s : rs.source_order) store << open_input(store_file(templates, s), "template store").rdbuf();
  TemplateMiner miner = load_template_store(store, rs.source_order, cfg.tree);
  return dataset_from_store(std::move(rs), std::move(miner), cfg, &diag);
}

void require_source(const Dataset& ds, const std::string& source) {
  const auto& order = ds.records.source_order;
  if (std::find(order.begin(), order.end(), source) == order.end())
    throw Error("unknown holdout source '" + source + "'");
}

std::vector<FeatureVector> read_features(const fs::path& p) {
  auto in = open_input(p, "feature table");
  return load_feature_table(in);
}

void write_features(const std::vector<FeatureVector>& rows, const fs::path& p) {
  auto out = open_output(p);
  save_feature_table(rows, out);
}

SelectionMask read_mask(const fs::path& p) {
  auto in = open_input(p, "selection mask");
  return load_mask(in);
}

std::vector<std::string> sources_in_order(const std::vector<FeatureVector>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.source_id) == out.end()) out.push_back(r.source_id);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_parse(const RunConfig& cfg, const fs::path& out_dir) {
  Diagnostics diag;
  RecordSet rs = load_records(cfg, diag);
  TemplateMiner miner = mine_templates(rs, cfg.tree);
  fs::create_directories(out_dir);
  for (const auto& s : rs.source_order) {
    auto out = open_output(store_file(out_dir, s));
    save_template_store(miner.tree(s), out);
    std::cout << s << ": " << miner.tree(s).templates().size() << " templates\n";
  }
  auto out = open_output(out_dir / "assignments.csv");
  save_assignments(miner.assign(rs), rs, out);
  print_warnings(diag);
  return kExitOk;
}

int cmd_label(const RunConfig& cfg, const fs::path& templates, const std::string& holdout, const fs::path& out_path) {
  Diagnostics diag;
  const Dataset ds = load_dataset(cfg, templates, diag);
  require_source(ds, holdout);
  const RecordSet pool = pool_records(ds, holdout);
  auto embedder = make_embedder(cfg, pool, derive_seed(fold_seed(cfg, holdout), "embed"), &diag);
  const PoolLabels labels = resolve_labels(ds, pool, *embedder, cfg.tau, &diag);
  auto out = open_output(out_path);
  save_transfer_report(labels.transfers, out);
  std::size_t drifted = 0;
  for (const auto& t : labels.transfers) drifted += t.drift_flag();
  std::cout << "knowledge base: " << labels.kb_entries << " templates (" << labels.kb_conflicts
            << " conflicts); transferred " << labels.transfers.size() - drifted << ", drifted " << drifted << '\n';
  print_warnings(diag);
  return kExitOk;
}

int cmd_featurize(const RunConfig& cfg, const fs::path& templates, const std::string& holdout,
                  const std::string& transfer, const fs::path& out_dir) {
  Diagnostics diag;
  const Dataset ds = load_dataset(cfg, templates, diag);
  require_source(ds, holdout);
  const std::uint64_t seed = fold_seed(cfg, holdout);
  const RecordSet pool = pool_records(ds, holdout);
  auto embedder = make_embedder(cfg, pool, derive_seed(seed, "embed"), &diag);
  std::map<std::int64_t, RecordLabel> labels;
  if (transfer.empty()) {
    labels = resolve_labels(ds, pool, *embedder, cfg.tau, &diag).by_record;
  } else {
    auto in = open_input(transfer, "transfer report");
    labels = record_labels(ds, pool, load_transfer_report(in));
  }
  std::vector<FeatureVector> rows;
  for (const auto& r : pool.records) {
    const RecordLabel& l = labels.at(r.record_id);
    rows.push_back(featurize_record(ds, r, *embedder, l.label, l.drift_flag, &diag));
  }
  auto target = target_sets(ds, holdout, *embedder, cfg, seed, &diag);
  write_features(rows, out_dir / "pool.csv");
  write_features(target.support, out_dir / "support.csv");
  write_features(target.queries, out_dir / "queries.csv");
  std::cout << "pool " << rows.size() << " rows, support " << target.support.size() << ", queries "
            << target.queries.size() << (target.support_warning ? " (short support)" : "") << '\n';
  print_warnings(diag);
  return kExitOk;
}

int cmd_select(const RunConfig& cfg, const fs::path& features, const std::string& holdout, const fs::path& out_path) {
  Diagnostics diag;
  const auto rows = read_features(features);
  if (rows.empty()) throw Error("feature table '" + features.string() + "' has no rows");
  const SelectionMask mask = fit_selection(rows, cfg, derive_seed(fold_seed(cfg, holdout), "forest"), &diag);
  auto out = open_output(out_path);
  save_mask(mask, out);
  std::cout << "selected " << mask.k << " of " << mask.d << " features\n";
  print_warnings(diag);
  return kExitOk;
}

int cmd_balance(const RunConfig& cfg, const fs::path& features, const fs::path& mask_path, const std::string& holdout,
                const fs::path& out_path) {
  Diagnostics diag;
  const auto rows = read_features(features);
  const SelectionMask mask = read_mask(mask_path);
  std::vector<SourceBalance> reports;
  auto balanced = balance_per_source(apply_mask(rows, mask), sources_in_order(rows), cfg.smote_k,
                                     derive_seed(fold_seed(cfg, holdout), "smote"), &reports, &diag);
  write_features(balanced, out_path);
  for (const auto& b : reports) {
    std::cout << b.source_id << ": ";
    if (b.report)
      std::cout << b.report->before_majority << ":" << b.report->before_minority << " -> " << b.report->after_majority
                << ":" << b.report->after_minority << " (" << b.report->synthetic_count << " synthetic)\n";
    else
      std::cout << "skipped (" << b.skipped_reason << ")\n";
  }
  print_warnings(diag);
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& features, const std::string& holdout, const fs::path& out_path,
              const std::string& curve_path) {
  const auto rows = read_features(features);
  if (rows.empty()) throw Error("feature table '" + features.string() + "' has no rows");
  if (rows.front().values.size() != cfg.k)
    throw Error("feature table width " + std::to_string(rows.front().values.size()) + " does not match select.k = " +
                std::to_string(cfg.k));
  const std::uint64_t seed = fold_seed(cfg, holdout);
  MetaConfig meta = cfg.meta;
  meta.seed = derive_seed(seed, "meta");
  const EncoderParams theta0 = init_encoder(encoder_sizes(cfg.k, cfg.hidden), derive_seed(seed, "init"));
  const MetaTrainResult trained = meta_train(make_pool(rows, sources_in_order(rows)), meta, theta0);
  CheckpointMeta cm;
  cm.seed = meta.seed;
  cm.config_digest = cfg.digest();
  for (const auto& line : cfg.canonical())
    if (line.starts_with("train.")) {
      auto eq = line.find('=');
      cm.extra.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
  auto out = open_output(out_path);
  save_checkpoint(trained.theta, cm, out);
  if (!curve_path.empty()) {
    auto curve = open_output(curve_path);
    save_curve(trained.curve, curve);
  }
  const auto& last = trained.curve.back();
  std::cout << "trained " << trained.curve.size() << " meta-iterations; final query loss "
            << format_double(last.mean_query_loss) << ", query F1 " << format_double(last.mean_query_f1) << '\n';
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& mask_path,
                const fs::path& support_path, const fs::path& queries_path, const fs::path& out_path) {
  auto ckpt = open_input(checkpoint, "checkpoint");
  const EncoderParams theta = load_checkpoint(ckpt);
  const SelectionMask mask = read_mask(mask_path);
  const auto support = read_features(support_path);
  const auto queries = read_features(queries_path);
  const Eigen::MatrixXd sx = to_matrix(apply_mask(support, mask));
  const auto sy = labels_of(support);
  Eigen::MatrixXd qx = to_matrix(apply_mask(queries, mask));
  if (queries.empty()) qx.resize(0, static_cast<Eigen::Index>(mask.k));
  auto pred = adapt_and_predict(theta, sx, sy, qx, cfg.meta);
  FoldResult f;
  for (const auto& q : queries) f.query_record_ids.push_back(q.record_id);
  f.golds = labels_of(queries);
  f.predictions = std::move(pred.labels);
  f.p_anomaly = std::move(pred.p_anomaly);
  f.baseline_predictions = nearest_prototype_baseline(sx, sy, qx);
  auto out = open_output(out_path);
  write_predictions(f, out);
  std::cout << "predicted " << f.predictions.size() << " queries\n";
  return kExitOk;
}

int cmd_evaluate(const fs::path& predictions, const std::string& out_path) {
  auto in = open_input(predictions, "predictions");
  std::vector<int> preds, golds;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty()) continue;
    auto cols = split(t, ',');
    if (cols.size() < 3) throw Error("malformed predictions row: '" + std::string(t) + "'");
    golds.push_back(parse_int<int>(cols[1]));
    preds.push_back(parse_int<int>(cols[2]));
  }
  if (preds.empty()) throw Error("predictions file '" + predictions.string() + "' has no rows");
  const ConfusionCounts c = confusion(preds, golds);
  const Metrics m = f1(c);
  std::cout << "precision " << fixed(m.precision) << " recall " << fixed(m.recall) << " f1 " << fixed(m.f1) << "  (tp "
            << c.tp << " fp " << c.fp << " tn " << c.tn << " fn " << c.fn << ")\n";
  if (!out_path.empty()) {
    auto out = open_output(out_path);
    std::string row = "precision,recall,f1,tp,fp,tn,fn\n";
    append_double(row, m.precision);
    row += ',';
    append_double(row, m.recall);
    row += ',';
    append_double(row, m.f1);
    row += ',' + std::to_string(c.tp) + ',' + std::to_string(c.fp) + ',' + std::to_string(c.tn) + ',' +
           std::to_string(c.fn) + '\n';
    out << row;
  }
  return kExitOk;
}

int cmd_loso(const RunConfig& cfg, const fs::path& out_dir) {
  Diagnostics diag;
  const Dataset ds = prepare_dataset(load_records(cfg, diag), cfg, &diag);
  LosoReport report = run_loso(ds, cfg);
  std::vector<std::string> data_warnings;
  for (const auto& w : diag.warnings) data_warnings.push_back("[data] " + w);
  report.warnings.insert(report.warnings.begin(), data_warnings.begin(), data_warnings.end());
  write_loso_outputs(report, cfg, out_dir);
  write_report_table(report, std::cout);
  for (const auto& f : report.folds)
    if (f.failed) std::cerr << "fold " << f.source_id << " failed: " << f.failure << '\n';
  return report.any_failed() ? kExitData : kExitOk;
}

int cmd_synth(const SynthConfig& sc, const fs::path& out_dir) {
  const auto manifest = write_corpus(generate_corpus(sc), out_dir, sc.seed);
  std::cout << "wrote " << sc.sources << " sources x " << sc.per_source << " lines (" << synth_anomaly_count(sc)
            << " anomalies each) to " << out_dir.string() << "; manifest " << manifest.filename().string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metalog: cross-source log anomaly detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Run config file (default: $METALOG_CONFIG)");
  app.add_option("--set", g.overrides, "Override a config key: section.key=value (repeatable)");
  app.add_option("--manifest", g.manifest, "Corpus manifest (overrides run.manifest)");
  app.set_version_flag("--version", std::string(kVersion));

  std::string out, templates, holdout, features, mask, transfer, curve, checkpoint, support, queries, predictions;
  auto* parse = app.add_subcommand("parse", "Mine templates; write one store per source");
  parse->add_option("--out", out, "Output directory")->required();

  auto* label = app.add_subcommand("label", "Transfer template labels onto a fold's pool");
  label->add_option("--templates", templates, "Template store directory")->required();
  label->add_option("--holdout", holdout, "Held-out source")->required();
  label->add_option("--out", out, "Transfer report CSV")->required();

  auto* featurize = app.add_subcommand("featurize", "Write pool, support and query feature tables for a fold");
  featurize->add_option("--templates", templates, "Template store directory")->required();
  featurize->add_option("--holdout", holdout, "Held-out source")->required();
  featurize->add_option("--transfer", transfer, "Transfer report from `label` (computed if omitted)");
  featurize->add_option("--out", out, "Output directory")->required();

  auto* select = app.add_subcommand("select", "Fit the feature selection mask");
  select->add_option("--features", features, "Pool feature table")->required();
  select->add_option("--holdout", holdout, "Held-out source (seed derivation)")->required();
  select->add_option("--out", out, "Mask file")->required();

  auto* balance = app.add_subcommand("balance", "Apply the mask and oversample each source");
  balance->add_option("--features", features, "Pool feature table")->required();
  balance->add_option("--mask", mask, "Mask file")->required();
  balance->add_option("--holdout", holdout, "Held-out source (seed derivation)")->required();
  balance->add_option("--out", out, "Balanced feature table")->required();

  auto* train = app.add_subcommand("train", "Meta-train the encoder");
  train->add_option("--features", features, "Balanced feature table")->required();
  train->add_option("--holdout", holdout, "Held-out source (seed derivation)")->required();
  train->add_option("--out", out, "Checkpoint file")->required();
  train->add_option("--curve", curve, "Training-curve CSV");

  auto* predict = app.add_subcommand("predict", "Adapt on support rows and classify queries");
  predict->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  predict->add_option("--mask", mask, "Mask file")->required();
  predict->add_option("--support", support, "Support feature table")->required();
  predict->add_option("--queries", queries, "Query feature table")->required();
  predict->add_option("--out", out, "Predictions CSV")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Precision/recall/F1 from a predictions file");
  evaluate->add_option("--predictions", predictions, "Predictions CSV")->required();
  evaluate->add_option("--out", out, "Metrics CSV");

  auto* loso = app.add_subcommand("loso", "Run every leave-one-source-out fold and write reports");
  loso->add_option("--out", out, "Report directory")->required();

  SynthConfig sc;
  auto* synth = app.add_subcommand("synth-corpus", "Generate the seeded synthetic corpus");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--sources", sc.sources, "Number of sources")->check(CLI::Range(2, 1000));
  synth->add_option("--per-source", sc.per_source, "Lines per source")->check(CLI::PositiveNumber);
  synth->add_option("--imbalance", sc.imbalance, "Normal lines per anomalous line")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sc.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sc, out);
    if (*evaluate) return cmd_evaluate(predictions, out);
    const RunConfig cfg = resolve_config(g);
    if (*parse) return cmd_parse(cfg, out);
    if (*label) return cmd_label(cfg, templates, holdout, out);
    if (*featurize) return cmd_featurize(cfg, templates, holdout, transfer, out);
    if (*select) return cmd_select(cfg, features, holdout, out);
    if (*balance) return cmd_balance(cfg, features, mask, holdout, out);
    if (*train) return cmd_train(cfg, features, holdout, out, curve);
    if (*predict) return cmd_predict(cfg, checkpoint, mask, support, queries, out);
    if (*loso) return cmd_loso(cfg, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
