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

#include "metalog/eval_harness.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "metalog/synth.hpp"
#include "test_util.hpp"

namespace metalog {
namespace {

using testing::TempDir;

// Small, fast configuration; the pipeline shape is unchanged.
RunConfig small_config(std::uint64_t seed = 11) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.semantic_dim = 64;
  cfg.k = 24;
  cfg.forest_trees = 8;
  cfg.forest_depth = 4;
  cfg.hidden = {16, 8};
  cfg.meta.episodes_per_phase = {8, 8, 8};
  cfg.meta.meta_batch = 2;
  cfg.meta.inner_steps = 2;
  return cfg;
}

RecordSet small_corpus(const TempDir& dir, std::size_t sources, std::uint64_t seed, bool drop_last_labels = false) {
  SynthConfig sc;
  sc.sources = sources;
  sc.per_source = 220;
  sc.imbalance = 10.0;
  sc.seed = seed;
  auto manifest = load_manifest(write_corpus(generate_corpus(sc), dir.path(), seed));
  if (drop_last_labels) manifest.sources.back().labels_path.reset();
  return load_corpus(manifest);
}

// Straight-line counts, written independently of confusion().
ConfusionCounts count_by_hand(const std::vector<int>& p, const std::vector<int>& g) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.tp += p[i] == 1 && g[i] == 1;
    c.fp += p[i] == 1 && g[i] == 0;
    c.tn += p[i] == 0 && g[i] == 0;
    c.fn += p[i] == 0 && g[i] == 1;
  }
  return c;
}

TEST(Confusion, OneOfEach) {
  const std::vector<int> pred{1, 0, 1, 0}, gold{1, 1, 0, 0};
  auto c = confusion(pred, gold);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.tn, 1u);
  EXPECT_DOUBLE_EQ(f1(c).f1, 0.5);
}

TEST(Confusion, PerfectAndComplement) {
  const std::vector<int> gold{1, 1, 0, 0, 0};
  EXPECT_DOUBLE_EQ(f1(confusion(gold, gold)).f1, 1.0);
  const std::vector<int> flipped{0, 0, 1, 1, 1};
  auto c = confusion(flipped, gold);
  EXPECT_EQ(c.tp + c.tn, 0u);
  EXPECT_EQ(f1(c), (Metrics{0.0, 0.0, 0.0}));
}

TEST(Confusion, AllNormalPredictionsGiveZeroNotNaN) {
  const std::vector<int> pred(6, 0), gold{1, 0, 0, 0, 0, 0};
  auto m = f1(confusion(pred, gold));
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Confusion, LengthMismatchIsAnError) {
  const std::vector<int> a{1, 0}, b{1};
  EXPECT_THROW(confusion(a, b), Error);
}

TEST(F1, HarmonicMeanOfPrecisionAndRecall) {
  ConfusionCounts c;
  c.tp = 12;
  c.fp = 3;
  c.fn = 8;
  auto m = f1(c);
  EXPECT_DOUBLE_EQ(m.precision, 0.8);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 0.96 / 1.4, 1e-15);
  EXPECT_NEAR(m.f1, 0.6857, 1e-4);
}

TEST(F1, RandomCountsAgreeWithTwoTpFormula) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionCounts c;
    c.tp = rng.uniform_index(20) + 1;
    c.fp = rng.uniform_index(20);
    c.fn = rng.uniform_index(20);
    const double expected = 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
    EXPECT_NEAR(f1(c).f1, expected, 1e-12);
  }
}

TEST(Aggregate, PopulationStd) {
  const std::vector<double> v{0.5, 0.7, 0.9, 1.0};
  auto [mean, sd] = mean_and_population_std(v);
  EXPECT_DOUBLE_EQ(mean, 0.775);
  const double var = (0.275 * 0.275 + 0.075 * 0.075 + 0.125 * 0.125 + 0.225 * 0.225) / 4.0;
  EXPECT_NEAR(sd, std::sqrt(var), 1e-15);
  const std::vector<double> one{0.3};
  EXPECT_EQ(mean_and_population_std(one).second, 0.0);
}

TEST(Aggregate, SkipsFailedFolds) {
  LosoReport r;
  FoldResult a, b, c;
  a.metrics.f1 = 0.6;
  a.baseline_f1 = 0.2;
  b.metrics.f1 = 1.0;
  b.baseline_f1 = 0.4;
  c.failed = true;
  c.metrics.f1 = 0.0;
  r.folds = {a, b, c};
  aggregate(r);
  EXPECT_DOUBLE_EQ(r.mean_f1, 0.8);
  EXPECT_NEAR(r.std_f1, 0.2, 1e-15);
  EXPECT_NEAR(r.baseline_mean_f1, 0.3, 1e-15);
}

TEST(Dataset, SplitIsPerSourceAndDisjoint) {
  TempDir dir("ds");
  const auto cfg = small_config();
  auto ds = prepare_dataset(small_corpus(dir, 3, 5), cfg);
  std::set<std::int64_t> train_ids, test_ids;
  for (const auto& r : ds.train.records) train_ids.insert(r.record_id);
  for (const auto& r : ds.test.records) test_ids.insert(r.record_id);
  for (auto id : test_ids) EXPECT_FALSE(train_ids.count(id));
  EXPECT_EQ(train_ids.size() + test_ids.size(), ds.records.records.size());
  for (const auto& s : ds.records.source_order) {
    const double n = static_cast<double>(ds.records.of_source(s).size());
    EXPECT_EQ(ds.train.of_source(s).size(), static_cast<std::size_t>(std::llround(0.7 * n))) << s;
  }
  for (const auto& r : ds.records.records) EXPECT_TRUE(ds.assignment_of.count(r.record_id));
}

TEST(Dataset, PoolExcludesTarget) {
  TempDir dir("pool");
  auto ds = prepare_dataset(small_corpus(dir, 3, 6), small_config());
  const auto& target = ds.records.source_order[1];
  auto pool = pool_records(ds, target);
  EXPECT_FALSE(pool.records.empty());
  for (const auto& r : pool.records) EXPECT_NE(r.source_id, target);
  auto sources = pool_sources(ds, target);
  EXPECT_EQ(sources.size(), 2u);
  EXPECT_EQ(std::count(sources.begin(), sources.end(), target), 0);
}

TEST(Baseline, NearestClassMean) {
  Eigen::MatrixXd sx(4, 2);
  sx << 0, 0, 0, 2, 10, 0, 10, 2;
  const std::vector<int> sy{0, 0, 1, 1};
  Eigen::MatrixXd q(3, 2);
  q << 1, 1, 9, 1, 4.9, 1;
  EXPECT_EQ(nearest_prototype_baseline(sx, sy, q), (std::vector<int>{0, 1, 0}));
}

class LosoToy : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("loso");
    ds_ = new Dataset(prepare_dataset(small_corpus(*dir_, 3, 17), small_config()));
    report_ = new LosoReport(run_loso(*ds_, small_config()));
  }
  static void TearDownTestSuite() {
    delete report_;
    delete ds_;
    delete dir_;
  }
  static TempDir* dir_;
  static Dataset* ds_;
  static LosoReport* report_;
};
TempDir* LosoToy::dir_ = nullptr;
Dataset* LosoToy::ds_ = nullptr;
LosoReport* LosoToy::report_ = nullptr;

TEST_F(LosoToy, OneFoldPerSourceInManifestOrder) {
  ASSERT_EQ(report_->folds.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(report_->folds[i].source_id, ds_->records.source_order[i]);
    EXPECT_FALSE(report_->folds[i].failed) << report_->folds[i].failure;
  }
}

TEST_F(LosoToy, EachFoldTrainsOnlyOnOtherSources) {
  for (const auto& f : report_->folds) {
    ASSERT_FALSE(f.pool_record_ids.empty());
    for (auto id : f.pool_record_ids) {
      const auto& r = ds_->record(id);
      EXPECT_NE(r.source_id, f.source_id);
    }
  }
}

TEST_F(LosoToy, NoRecordIsBothTrainedOnAndScored) {
  for (const auto& f : report_->folds) {
    std::set<std::int64_t> pool(f.pool_record_ids.begin(), f.pool_record_ids.end());
    std::set<std::int64_t> support(f.support_record_ids.begin(), f.support_record_ids.end());
    for (auto id : f.query_record_ids) {
      EXPECT_FALSE(pool.count(id)) << id;
      EXPECT_FALSE(support.count(id)) << id;
      EXPECT_EQ(ds_->record(id).source_id, f.source_id);
    }
    for (auto id : f.support_record_ids) EXPECT_EQ(ds_->record(id).source_id, f.source_id);
  }
}

TEST_F(LosoToy, QueriesAreTheWholeLabeledTestPartition) {
  for (const auto& f : report_->folds) {
    std::vector<std::int64_t> expected;
    for (const auto* r : ds_->test.of_source(f.source_id)) expected.push_back(r->record_id);
    EXPECT_EQ(f.query_record_ids, expected);
    for (std::size_t i = 0; i < f.golds.size(); ++i)
      EXPECT_EQ(f.golds[i], to_int(*ds_->record(f.query_record_ids[i]).gold_label));
  }
}

TEST_F(LosoToy, SupportIsFivePlusFive) {
  for (const auto& f : report_->folds) {
    ASSERT_EQ(f.support_record_ids.size(), 10u);
    int anomalies = 0;
    for (auto id : f.support_record_ids) anomalies += to_int(*ds_->record(id).gold_label);
    EXPECT_EQ(anomalies, 5);
    EXPECT_FALSE(f.support_warning);
  }
}

TEST_F(LosoToy, MetricsRecomputeFromPredictions) {
  std::vector<double> f1s, base;
  for (const auto& f : report_->folds) {
    ASSERT_EQ(f.predictions.size(), f.golds.size());
    const auto c = count_by_hand(f.predictions, f.golds);
    EXPECT_EQ(c.tp, f.counts.tp);
    EXPECT_EQ(c.fp, f.counts.fp);
    EXPECT_EQ(c.tn, f.counts.tn);
    EXPECT_EQ(c.fn, f.counts.fn);
    const double p = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    const double r = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    const double harmonic = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    EXPECT_NEAR(f.metrics.precision, p, 1e-12);
    EXPECT_NEAR(f.metrics.recall, r, 1e-12);
    EXPECT_NEAR(f.metrics.f1, harmonic, 1e-12);
    const auto bc = count_by_hand(f.baseline_predictions, f.golds);
    EXPECT_NEAR(f.baseline_f1, bc.tp ? 2.0 * bc.tp / double(2 * bc.tp + bc.fp + bc.fn) : 0.0, 1e-12);
    for (std::size_t i = 0; i < f.predictions.size(); ++i)
      EXPECT_EQ(f.predictions[i], f.p_anomaly[i] >= 0.5 ? 1 : 0);
    f1s.push_back(f.metrics.f1);
    base.push_back(f.baseline_f1);
  }
  const double mean = (f1s[0] + f1s[1] + f1s[2]) / 3.0;
  double ss = 0.0;
  for (double v : f1s) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(report_->mean_f1, mean, 1e-12);
  EXPECT_NEAR(report_->std_f1, std::sqrt(ss / 3.0), 1e-12);
  EXPECT_NEAR(report_->baseline_mean_f1, (base[0] + base[1] + base[2]) / 3.0, 1e-12);
}

TEST_F(LosoToy, SecondRunIsIdentical) {
  auto again = run_loso(*ds_, small_config());
  std::ostringstream a, b;
  write_report_csv(*report_, a);
  write_report_csv(again, b);
  EXPECT_EQ(a.str(), b.str());
  for (std::size_t i = 0; i < again.folds.size(); ++i) {
    EXPECT_EQ(again.folds[i].p_anomaly, report_->folds[i].p_anomaly);
    EXPECT_EQ(again.folds[i].mask.indices, report_->folds[i].mask.indices);
  }
}

TEST_F(LosoToy, OutputsWritten) {
  TempDir out("out");
  write_loso_outputs(*report_, small_config(), out.path());
  for (const char* name : {"report.txt", "report.csv", "run_meta.txt"})
    EXPECT_TRUE(std::filesystem::exists(out / name)) << name;
  for (const auto& s : ds_->records.source_order) {
    EXPECT_TRUE(std::filesystem::exists(out / ("curve_" + s + ".csv")));
    auto preds = testing::read_file(out / ("predictions_" + s + ".csv"));
    EXPECT_EQ(static_cast<std::size_t>(std::count(preds.begin(), preds.end(), '\n')),
              ds_->test.of_source(s).size() + 1);
  }
  auto csv = testing::read_file(out / "report.csv");
  EXPECT_EQ(csv.rfind("source_id,precision,recall,f1,", 0), 0u);
  EXPECT_NE(csv.find("\nMEAN,"), std::string::npos);
  auto meta = testing::read_file(out / "run_meta.txt");
  EXPECT_NE(meta.find("config_digest = " + small_config().digest()), std::string::npos);
}

TEST(Loso, SingleSourceRejected) {
  TempDir dir("one");
  auto rs = small_corpus(dir, 2, 4);
  std::vector<LogRecord> keep;
  for (const auto& r : rs.records)
    if (r.source_id == rs.source_order[0]) keep.push_back(r);
  RecordSet one = subset(rs, keep);
  one.source_order = {rs.source_order[0]};
  auto ds = prepare_dataset(std::move(one), small_config());
  EXPECT_THROW(run_loso(ds, small_config()), Error);
}

TEST(Loso, TwoSourcesCannotHostCrossSourceEpisodes) {
  TempDir dir("two");
  auto ds = prepare_dataset(small_corpus(dir, 2, 4), small_config());
  auto report = run_loso(ds, small_config());
  ASSERT_EQ(report.folds.size(), 2u);
  for (const auto& f : report.folds) {
    EXPECT_TRUE(f.failed);
    EXPECT_NE(f.failure.find("phase 3"), std::string::npos) << f.failure;
  }
  auto cfg = small_config();
  cfg.meta.episodes_per_phase = {8, 8, 0};
  auto within = run_loso(ds, cfg);
  for (const auto& f : within.folds) EXPECT_FALSE(f.failed) << f.failure;
}

TEST(Loso, UnlabeledSourceTransfersAndItsFoldFailsAlone) {
  TempDir dir("unlab");
  auto ds = prepare_dataset(small_corpus(dir, 4, 9, /*drop_last_labels=*/true), small_config());
  auto report = run_loso(ds, small_config());
  ASSERT_EQ(report.folds.size(), 4u);
  std::vector<double> f1s;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_FALSE(report.folds[i].failed) << report.folds[i].failure;
    EXPECT_GT(report.folds[i].transferred_templates + report.folds[i].drifted_templates, 0u);
    f1s.push_back(report.folds[i].metrics.f1);
  }
  EXPECT_TRUE(report.folds[3].failed);
  EXPECT_NE(report.folds[3].failure.find("no labeled anomaly"), std::string::npos) << report.folds[3].failure;
  EXPECT_NEAR(report.mean_f1, (f1s[0] + f1s[1] + f1s[2]) / 3.0, 1e-12);
  std::ostringstream table;
  write_report_table(report, table);
  EXPECT_NE(table.str().find("FAILED"), std::string::npos);
}

}  // namespace
}  // namespace metalog
