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


#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "metalog/embedding.hpp"
#include "test_util.hpp"

namespace metalog {
namespace {

using testing::TempDir;
using testing::write_file;

RecordSet corpus_of(const std::vector<std::string>& messages) {
  RecordSet rs;
  std::int64_t id = 0;
  for (const auto& m : messages) {
    LogRecord r;
    r.record_id = id++;
    r.source_id = "s";
    r.message = m;
    r.raw_line = m;
    rs.records.push_back(r);
  }
  rs.source_order = {"s"};
  return rs;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

TEST(Fit, IdfFormulaAtExtremes) {
  std::vector<std::string> msgs;
  for (int i = 0; i < 100; ++i) msgs.push_back(i == 0 ? "common rare" : "common word");
  auto st = fit_embedder(corpus_of(msgs), 64, 1);
  EXPECT_EQ(st.documents, 100u);
  EXPECT_DOUBLE_EQ(st.idf("common"), 1.0);
  EXPECT_NEAR(st.idf("rare"), std::log(101.0 / 2.0) + 1.0, 1e-12);
  EXPECT_NEAR(st.idf("rare"), 4.92, 5e-3);
  EXPECT_NEAR(st.idf("word"), std::log(101.0 / 100.0) + 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(st.idf("never-seen"), EmbedderState::kOutOfVocabularyIdf);
  for (const auto& [_, v] : st.idf_table) EXPECT_GE(v, 0.0);
}

TEST(Fit, DocumentFrequencyCountsOncePerMessage) {
  auto st = fit_embedder(corpus_of({"a a a b", "b"}), 16, 1);
  EXPECT_NEAR(st.idf("a"), std::log(3.0 / 2.0) + 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(st.idf("b"), 1.0);
}

TEST(Fit, Determinism) {
  auto rs = corpus_of({"disk error", "disk ok", "user login"});
  EXPECT_EQ(fit_embedder(rs, 32, 9), fit_embedder(rs, 32, 9));
}

TEST(Fit, Contracts) {
  EXPECT_THROW(fit_embedder(RecordSet{}, 16, 1), Error);
  EXPECT_THROW(fit_embedder(corpus_of({"x"}), 0, 1), ContractViolation);
}

TEST(SemanticWords, MaskedParametersDropped) {
  EXPECT_EQ(semantic_words("Disk-Error on 10.0.0.1 at /var/x: BadSector"),
            (std::vector<std::string>{"disk", "error", "on", "at", "badsector"}));
}

TEST(Embed, UnitNormAndDeterminism) {
  auto st = fit_embedder(corpus_of({"error disk failure", "session opened", "disk ok"}), 768, 5);
  for (const char* m : {"error disk failure", "session opened for user", "x", "totally unseen words here"}) {
    auto v = embed_semantic(m, st);
    EXPECT_NEAR(norm2(v), 1.0, 1e-9) << m;
    EXPECT_EQ(v, embed_semantic(m, st));
    EXPECT_NEAR(cosine(v, v), 1.0, 1e-12);
  }
}

TEST(Embed, EmptyMessageIsZeroAndFlagged) {
  auto st = fit_embedder(corpus_of({"a b"}), 32, 5);
  bool empty = false;
  auto v = embed_semantic("1234 0xdeadbeef", st, &empty);
  EXPECT_TRUE(empty);
  EXPECT_EQ(norm2(v), 0.0);
  embed_semantic("word", st, &empty);
  EXPECT_FALSE(empty);
}

TEST(Embed, NearDuplicateCloserThanUnrelated) {
  auto st = fit_embedder(corpus_of({"error disk failure", "error disk failures", "session opened", "disk ok",
                                    "session closed", "error network"}),
                         768, 42);
  auto a = embed_semantic("error disk failure", st);
  auto b = embed_semantic("error disk failures", st);
  auto c = embed_semantic("session opened", st);
  EXPECT_GT(cosine(a, b), cosine(a, c));
  EXPECT_GT(cosine(a, b), 0.5);
}

TEST(Embed, SeedChangesHashing) {
  auto rs = corpus_of({"alpha beta gamma"});
  EXPECT_NE(embed_semantic("alpha beta", fit_embedder(rs, 64, 1)),
            embed_semantic("alpha beta", fit_embedder(rs, 64, 2)));
}

TEST(Cosine, BoundsAndZero) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(5), b(5);
    for (auto& x : a) x = rng.uniform01() * 2 - 1;
    for (auto& x : b) x = rng.uniform01() * 2 - 1;
    double c = cosine(a, b);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
  EXPECT_EQ(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.0);
  EXPECT_THROW(cosine(std::vector<double>{1}, std::vector<double>{1, 0}), ContractViolation);
}

TEST(External, LoadsAndFallsBack) {
  TempDir dir("emb");
  const std::size_t d = 8;
  ExternalVectors vecs;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(d, 0.0);
    v[static_cast<std::size_t>(i) % d] = 1.0;
    vecs[message_hash("message " + std::to_string(i))] = v;
  }
  std::ostringstream out;
  save_external_embeddings(vecs, d, out);
  write_file(dir / "ext.csv", out.str());
  auto loaded = load_external_embeddings(dir / "ext.csv", d);
  EXPECT_EQ(loaded.size(), 100u);
  EXPECT_EQ(loaded, vecs);

  auto fallback = std::make_shared<HashedTextEmbedder>(fit_embedder(corpus_of({"abc def"}), d, 1));
  ExternalFirstEmbedder emb(loaded, fallback);
  EXPECT_EQ(emb.embed("message 3"), vecs.at(message_hash("message 3")));
  EXPECT_EQ(emb.fallbacks(), 0u);
  auto miss = emb.embed("abc def");
  EXPECT_EQ(emb.fallbacks(), 1u);
  EXPECT_EQ(miss, fallback->embed("abc def"));
  EXPECT_EQ(emb.dim(), d);
}

TEST(External, DimensionMismatchIsFatal) {
  TempDir dir("emb");
  write_file(dir / "ext.csv", "dim=512\n");
  EXPECT_THROW(load_external_embeddings(dir / "ext.csv", 768), Error);
  write_file(dir / "nohead.csv", "0000000000000001,1\n");
  EXPECT_THROW(load_external_embeddings(dir / "nohead.csv", 1), Error);
  EXPECT_THROW(load_external_embeddings(dir / "missing.csv", 1), Error);
}

TEST(External, MalformedRowsSkipped) {
  TempDir dir("emb");
  write_file(dir / "ext.csv",
             "dim=2\n"
             "0000000000000001,1,0\n"
             "0000000000000002,1\n"
             "zz00000000000003,1,0\n"
             "0000000000000004,nan,0\n"
             "0000000000000005,0.5,x\n"
             "0000000000000006,0,1\n");
  Diagnostics diag;
  auto loaded = load_external_embeddings(dir / "ext.csv", 2, &diag);
  EXPECT_EQ(loaded.size(), 2u);
  EXPECT_EQ(diag.warnings.size(), 4u);
}

TEST(Assemble, Shapes) {
  LogRecord r;
  r.record_id = 7;
  r.source_id = "s";
  std::vector<double> sem8(8, 0.25), sem768(768, 0.0);
  std::vector<double> st(80, 0.5);
  auto small = assemble(r, sem8, st, Label::Anomaly, true, 8);
  EXPECT_EQ(small.values.size(), 88u);
  // 768 semantic + 80 structural.
  EXPECT_EQ(assemble(r, sem768, st, Label::Normal, false).values.size(), 848u);
  EXPECT_TRUE(std::equal(sem8.begin(), sem8.end(), small.values.begin()));
  EXPECT_TRUE(std::equal(st.begin(), st.end(), small.values.begin() + 8));
  EXPECT_EQ(small.record_id, 7);
  EXPECT_EQ(small.label, Label::Anomaly);
  EXPECT_TRUE(small.drift_flag);
  EXPECT_EQ(assemble(r, sem8, st, Label::Anomaly, true, 8), small);
}

TEST(Assemble, Contracts) {
  LogRecord r;
  std::vector<double> sem(8, 0.0), st(80, 0.0);
  EXPECT_THROW(assemble(r, sem, st, Label::Normal, false, 9), ContractViolation);
  EXPECT_THROW(assemble(r, sem, std::vector<double>(79), Label::Normal, false, 8), ContractViolation);
  sem[2] = std::nan("");
  EXPECT_THROW(assemble(r, sem, st, Label::Normal, false, 8), Error);
  sem[2] = INFINITY;
  EXPECT_THROW(assemble(r, sem, st, Label::Normal, false, 8), Error);
}

TEST(FeatureTable, RoundTripIsExact) {
  std::vector<FeatureVector> rows;
  Rng rng(12);
  for (int i = 0; i < 5; ++i) {
    FeatureVector fv;
    fv.record_id = i == 4 ? -1 : i;
    fv.source_id = "src";
    fv.label = i % 2 ? Label::Anomaly : Label::Normal;
    fv.drift_flag = i == 2;
    for (int j = 0; j < 6; ++j) fv.values.push_back(rng.uniform01() / 3.0);
    rows.push_back(fv);
  }
  std::stringstream ss;
  save_feature_table(rows, ss);
  EXPECT_EQ(load_feature_table(ss), rows);
}

}  // namespace
}  // namespace metalog
