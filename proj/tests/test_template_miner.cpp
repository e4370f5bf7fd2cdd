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
#include <numeric>
#include <sstream>

#include "metalog/synth.hpp"
#include "metalog/template_miner.hpp"

namespace metalog {
namespace {

std::vector<std::string> rendered(const std::vector<Token>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) out.emplace_back(t.render());
  return out;
}

std::vector<Token> plain(std::initializer_list<const char*> words) {
  std::vector<Token> out;
  for (const char* w : words) {
    std::string s(w);
    out.push_back(Token{s, s == kWildcard});
  }
  return out;
}

LogRecord rec(std::int64_t id, std::string source, std::string msg) {
  LogRecord r;
  r.record_id = id;
  r.source_id = std::move(source);
  r.raw_line = msg;
  r.message = std::move(msg);
  return r;
}

RecordSet synthetic_records(std::uint64_t seed, std::size_t per_source = 300) {
  SynthConfig sc;
  sc.sources = 3;
  sc.per_source = per_source;
  sc.seed = seed;
  auto corpus = generate_corpus(sc);
  RecordSet rs;
  std::int64_t id = 0;
  for (const auto& s : corpus) {
    rs.source_order.push_back(s.source_id);
    IdRange range{id, id, 0};
    for (const auto& line : s.lines) rs.records.push_back(rec(id++, s.source_id, line));
    range.last = id;
    range.count = s.lines.size();
    rs.source_index[s.source_id] = range;
  }
  return rs;
}

TEST(Tokenize, MasksAddress) {
  EXPECT_EQ(rendered(tokenize("Connection from 10.0.0.1 closed")),
            (std::vector<std::string>{"Connection", "from", "<*>", "closed"}));
}

TEST(Tokenize, PlainWordsKept) {
  auto t = tokenize("shutdown complete");
  EXPECT_EQ(rendered(t), (std::vector<std::string>{"shutdown", "complete"}));
  EXPECT_FALSE(t[0].is_wildcard || t[1].is_wildcard);
}

TEST(Tokenize, MasksBlockId) {
  EXPECT_EQ(rendered(tokenize("block blk_3587508140051953248 received")),
            (std::vector<std::string>{"block", "<*>", "received"}));
}

TEST(Tokenize, HexAndPaths) {
  auto t = tokenize("read 0xdeadbeef at /var/log/x ok deadbeef");
  EXPECT_TRUE(t[1].is_wildcard);
  EXPECT_TRUE(t[3].is_wildcard);
  EXPECT_FALSE(t[4].is_wildcard);
  // Letters-only hex words stay literal.
  EXPECT_FALSE(t[5].is_wildcard);
  EXPECT_FALSE(tokenize("add")[0].is_wildcard);
}

TEST(Tokenize, WhitespaceRuns) {
  EXPECT_EQ(rendered(tokenize("  a \t b\n c ")), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Tokenize, WhitespaceOnlyIsFlagged) {
  bool degenerate = false;
  auto t = tokenize("   \t ", &degenerate);
  EXPECT_TRUE(degenerate);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_TRUE(t[0].is_wildcard);
  tokenize("x", &degenerate);
  EXPECT_FALSE(degenerate);
}

TEST(Similarity, Examples) {
  EXPECT_DOUBLE_EQ(sequence_similarity(plain({"a", "b", "c", "d"}), plain({"a", "b", "c", "d"})), 1.0);
  EXPECT_DOUBLE_EQ(sequence_similarity(plain({"a", "b", "c", "d"}), plain({"a", "b", "x", "d"})), 0.75);
  EXPECT_DOUBLE_EQ(sequence_similarity(plain({"a", "<*>"}), plain({"a", "z"})), 1.0);
}

TEST(Similarity, LengthMismatchIsContractViolation) {
  EXPECT_THROW(sequence_similarity(plain({"a"}), plain({"a", "b"})), ContractViolation);
}

TEST(Similarity, SymmetricAndBounded) {
  Rng rng(11);
  const char* alphabet[] = {"a", "b", "c", "<*>"};
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t n = 1 + rng.uniform_index(6);
    std::vector<Token> a, b;
    for (std::size_t i = 0; i < n; ++i) {
      std::string x = alphabet[rng.uniform_index(4)], y = alphabet[rng.uniform_index(4)];
      a.push_back(Token{x, x == kWildcard});
      b.push_back(Token{y, y == kWildcard});
    }
    double s = sequence_similarity(a, b);
    EXPECT_DOUBLE_EQ(s, sequence_similarity(b, a));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    bool all = true;
    for (std::size_t i = 0; i < n; ++i) all = all && (a[i].is_wildcard || b[i].is_wildcard || a[i].text == b[i].text);
    EXPECT_EQ(s == 1.0, all);
  }
}

TEST(Parse, FirstMessageCreatesTemplate) {
  ParseTree tree;
  auto r = tree.parse(tokenize("shutdown complete"));
  EXPECT_TRUE(r.created);
  ASSERT_EQ(tree.templates().size(), 1u);
  EXPECT_EQ(tree.templates()[0].render(), "shutdown complete");
  EXPECT_EQ(tree.templates()[0].occurrences, 1u);
  EXPECT_TRUE(r.parameters.empty());
}

TEST(Parse, AddressesMergeIntoOneTemplate) {
  ParseTree tree;
  auto a = tree.parse(tokenize("Connection from 10.0.0.1 closed"));
  auto b = tree.parse(tokenize("Connection from 10.0.0.2 closed"));
  EXPECT_EQ(a.template_id, b.template_id);
  EXPECT_EQ(tree.get(a.template_id).render(), "Connection from <*> closed");
  EXPECT_EQ(tree.get(a.template_id).occurrences, 2u);
  EXPECT_EQ(b.parameters, (std::vector<std::string>{"10.0.0.2"}));
}

TEST(Parse, DifferingLiteralsBecomeWildcards) {
  ParseTree tree;
  // Depth 1 keeps both under the same "user" leaf; 3 of 4 positions agree.
  ParseTree shallow(ParseTreeConfig{1, 0.4, 100});
  auto a = shallow.parse(plain({"user", "alice", "logged", "in"}));
  auto b = shallow.parse(plain({"user", "bob", "logged", "in"}));
  EXPECT_EQ(a.template_id, b.template_id);
  EXPECT_DOUBLE_EQ(b.similarity, 0.75);
  EXPECT_EQ(shallow.get(a.template_id).render(), "user <*> logged in");
  EXPECT_EQ(b.parameters, (std::vector<std::string>{"bob"}));
  // With the default depth the second token is part of the route.
  auto c = tree.parse(plain({"user", "alice", "logged", "in"}));
  auto d = tree.parse(plain({"user", "bob", "logged", "in"}));
  EXPECT_NE(c.template_id, d.template_id);
}

TEST(Parse, ReparseIsIdempotent) {
  ParseTree tree;
  tree.parse(tokenize("Connection from 10.0.0.1 closed"));
  auto first = tree.parse(tokenize("Connection from 10.0.0.2 closed"));
  auto again = tree.parse(tokenize("Connection from 10.0.0.2 closed"));
  EXPECT_EQ(again.template_id, first.template_id);
  EXPECT_DOUBLE_EQ(again.similarity, 1.0);
  EXPECT_FALSE(again.created);
}

TEST(Parse, LengthSeparatesTemplates) {
  ParseTree tree;
  auto a = tree.parse(plain({"a", "b"}));
  auto b = tree.parse(plain({"a", "b", "c"}));
  EXPECT_NE(a.template_id, b.template_id);
}

TEST(Parse, BelowThresholdCreatesNew) {
  ParseTree tree(ParseTreeConfig{1, 0.6, 100});
  auto a = tree.parse(plain({"x", "a", "b", "c"}));
  auto b = tree.parse(plain({"x", "p", "q", "c"}));  // 0.5 < 0.6
  EXPECT_NE(a.template_id, b.template_id);
  EXPECT_EQ(tree.leaf_siblings(a.template_id), 1u);
}

TEST(Parse, FrozenTreeRejectsParse) {
  ParseTree tree;
  tree.parse(plain({"a"}));
  tree.freeze();
  EXPECT_THROW(tree.parse(plain({"a"})), ContractViolation);
  auto m = tree.match(plain({"a"}));
  ASSERT_TRUE(m);
  EXPECT_FALSE(tree.match(plain({"a", "b"})));
}

TEST(Parse, ConfigContracts) {
  EXPECT_THROW(ParseTree(ParseTreeConfig{0, 0.4, 100}), ContractViolation);
  EXPECT_THROW(ParseTree(ParseTreeConfig{4, 0.0, 100}), ContractViolation);
  EXPECT_THROW(ParseTree(ParseTreeConfig{4, 1.0, 100}), ContractViolation);
  EXPECT_THROW(ParseTree(ParseTreeConfig{4, 0.4, 0}), ContractViolation);
}

TEST(Parse, OverflowRoutesToWildcardChild) {
  ParseTree tree(ParseTreeConfig{2, 0.4, 3});
  for (int i = 0; i < 10; ++i) tree.parse(plain({"k", ("w" + std::string(1, static_cast<char>('a' + i))).c_str(), "z"}));
  EXPECT_LE(tree.max_named_children(), 3u);
}

TEST(Parse, PackedIdsPerSource) {
  TemplateMiner miner({"s0", "s1"});
  auto a = miner.parse(rec(0, "s0", "same text"));
  auto b = miner.parse(rec(1, "s1", "same text"));
  EXPECT_NE(a.template_id, b.template_id);
  EXPECT_EQ(template_source_ordinal(a.template_id), 0u);
  EXPECT_EQ(template_source_ordinal(b.template_id), 1u);
  EXPECT_EQ(template_local_id(b.template_id), 0u);
  EXPECT_EQ(miner.get(b.template_id).source_ids_seen, (std::set<std::string>{"s1"}));
}

TEST(TreeProperties, PathLengthAndChildren) {
  auto rs = synthetic_records(5);
  TemplateMiner miner(rs.source_order);
  miner.mine(rs);
  for (const auto& tree : miner.trees()) {
    EXPECT_LE(tree.max_named_children(), tree.config().max_children);
    for (const auto& t : tree.templates()) {
      EXPECT_EQ(tree.leaf_depth(t.template_id), std::min(tree.config().depth, t.token_count) + 1);
      EXPECT_EQ(t.token_count, t.tokens.size());
      EXPECT_GE(t.occurrences, 1u);
    }
  }
}

TEST(TreeProperties, MergeMonotonicity) {
  auto rs = synthetic_records(6, 200);
  TemplateMiner miner(rs.source_order);
  std::map<std::int64_t, std::pair<std::uint64_t, std::size_t>> seen;
  for (const auto& r : rs.records) {
    miner.parse(r);
    for (const auto* t : miner.all_templates()) {
      auto it = seen.find(t->template_id);
      if (it != seen.end()) {
        EXPECT_GE(t->occurrences, it->second.first);
        EXPECT_EQ(t->token_count, it->second.second);
      }
      seen[t->template_id] = {t->occurrences, t->token_count};
    }
  }
}

TEST(TreeProperties, Determinism) {
  auto rs = synthetic_records(7);
  TemplateMiner m1(rs.source_order), m2(rs.source_order);
  auto a1 = m1.mine(rs);
  auto a2 = m2.mine(rs);
  EXPECT_EQ(a1, a2);
  std::ostringstream s1, s2;
  save_template_store(m1, s1);
  save_template_store(m2, s2);
  EXPECT_EQ(s1.str(), s2.str());
  for (std::size_t i = 0; i < rs.size(); i += 37) {
    const auto& r = rs.records[i];
    const auto& t1 = m1.get(a1[i].template_id);
    auto f1 = structural_features(r, t1, m1.tree_of(t1.template_id), a1[i].parameters);
    auto f2 = structural_features(r, m2.get(a2[i].template_id), m2.tree_of(a2[i].template_id), a2[i].parameters);
    EXPECT_EQ(f1, f2);
  }
}

TEST(TreeProperties, FrozenSecondPassIsStable) {
  for (std::uint64_t seed : {8u, 18u, 28u}) {
    auto rs = synthetic_records(seed);
    TemplateMiner miner(rs.source_order);
    auto first = miner.mine(rs);
    miner.freeze();
    auto second = miner.assign(rs);
    std::size_t moved = 0, params = 0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      moved += second[i].template_id != first[i].template_id;
      params += second[i].parameters != first[i].parameters;
    }
    EXPECT_EQ(moved, 0u) << "seed " << seed;
    EXPECT_EQ(params, 0u) << "seed " << seed;
  }
}

TEST(TreeProperties, EarlyRecordsGetFinalParameters) {
  RecordSet rs;
  rs.source_order = {"s"};
  rs.records = {rec(0, "s", "user alice logged in from host"), rec(1, "s", "user alice logged in from gateway")};
  rs.source_index["s"] = IdRange{0, 2, 2};
  TemplateMiner miner(rs.source_order);
  auto a = miner.mine(rs);
  ASSERT_EQ(a[0].template_id, a[1].template_id);
  EXPECT_EQ(a[0].parameters, (std::vector<std::string>{"host"}));
  EXPECT_EQ(a[1].parameters, (std::vector<std::string>{"gateway"}));
}

TEST(Store, RoundTripReassignsIdentically) {
  auto rs = synthetic_records(9);
  TemplateMiner miner(rs.source_order);
  miner.mine(rs);
  miner.freeze();
  auto before = miner.assign(rs);
  std::stringstream ss;
  save_template_store(miner, ss);
  auto text = ss.str();
  auto loaded = load_template_store(ss, rs.source_order);
  EXPECT_EQ(loaded.assign(rs), before);
  std::ostringstream again;
  save_template_store(loaded, again);
  EXPECT_EQ(again.str(), text);
}

TEST(Store, MalformedLinesRejected) {
  std::istringstream bad("0\ts\t2\t1\n");
  EXPECT_THROW(load_template_store(bad, {"s"}), Error);
  std::istringstream mismatch("0\ts\t3\t1\ta b\n");
  EXPECT_THROW(load_template_store(mismatch, {"s"}), Error);
  std::istringstream wrong_source("4294967296\ts\t1\t1\ta\n");
  EXPECT_THROW(load_template_store(wrong_source, {"s"}), Error);
}

TEST(Structural, ShapeAndOneHot) {
  auto rs = synthetic_records(10, 150);
  TemplateMiner miner(rs.source_order);
  auto assigned = miner.mine(rs);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& t = miner.get(assigned[i].template_id);
    auto f = structural_features(rs.records[i], t, miner.tree_of(t.template_id), assigned[i].parameters);
    ASSERT_EQ(f.size(), 80u);
    for (double v : f) EXPECT_TRUE(std::isfinite(v));
    EXPECT_DOUBLE_EQ(std::accumulate(f.begin(), f.begin() + 64, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(f[static_cast<std::size_t>(t.template_id % 64)], 1.0);
    EXPECT_DOUBLE_EQ(std::accumulate(f.begin() + 76, f.end(), 0.0), 1.0);
  }
}

TEST(Structural, FourTokensOneWildcard) {
  ParseTree tree;
  LogRecord r = rec(0, "s", "Connection from 10.0.0.1 closed");
  auto res = tree.parse(tokenize(r.message));
  const auto& t = tree.get(res.template_id);
  auto f = structural_features(r, t, tree, res.parameters);
  // Token count is stored over 32.
  EXPECT_DOUBLE_EQ(f[structural::kTokenCount] * 32.0, 4.0);
  EXPECT_DOUBLE_EQ(f[structural::kWildcardRatio], 0.25);
  EXPECT_DOUBLE_EQ(f[structural::kParamCount], 1.0);
  EXPECT_DOUBLE_EQ(f[structural::kParamLength], 8.0 / 16.0);
  EXPECT_DOUBLE_EQ(f[structural::kCharLength], 31.0 / 256.0);
  // "10.0.0.1": 5 digits, 3 dots.
  EXPECT_DOUBLE_EQ(f[structural::kDigitRatio], 5.0 / 31.0);
  EXPECT_DOUBLE_EQ(f[structural::kUpperRatio], 1.0 / 31.0);
  EXPECT_DOUBLE_EQ(f[structural::kPunctRatio], 3.0 / 31.0);
  EXPECT_DOUBLE_EQ(f[structural::kLogFrequency], 1.0);
  EXPECT_DOUBLE_EQ(f[structural::kLeafSiblings], 0.0);
  EXPECT_DOUBLE_EQ(f[structural::kHexTokens], 0.0);
}

TEST(Structural, SameTemplateSameBucketBlock) {
  ParseTree tree;
  LogRecord r1 = rec(0, "s", "Connection from 10.0.0.1 closed");
  LogRecord r2 = rec(1, "s", "Connection from 192.168.1.20 closed");
  auto p1 = tree.parse(tokenize(r1.message));
  auto p2 = tree.parse(tokenize(r2.message));
  ASSERT_EQ(p1.template_id, p2.template_id);
  const auto& t = tree.get(p1.template_id);
  auto f1 = structural_features(r1, t, tree, p1.parameters);
  auto f2 = structural_features(r2, t, tree, p2.parameters);
  EXPECT_TRUE(std::equal(f1.begin(), f1.begin() + 64, f2.begin()));
  EXPECT_NE(f1[structural::kCharLength], f2[structural::kCharLength]);
}

}  // namespace
}  // namespace metalog
