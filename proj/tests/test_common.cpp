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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "metalog/common.hpp"

namespace metalog {
namespace {

TEST(Hashing, FnvMatchesPublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hashing, SplitmixFirstOutputFromZero) { EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL); }

TEST(Hashing, DerivedSeedsDifferPerStage) {
  EXPECT_NE(derive_seed(42, "split"), derive_seed(42, "meta"));
  EXPECT_NE(derive_seed(42, "split"), derive_seed(43, "split"));
  EXPECT_EQ(derive_seed(42, "split"), splitmix64(42 ^ fnv1a64("split")));
}

TEST(Hashing, Hex16RoundTrip) {
  for (std::uint64_t v : {0ULL, 1ULL, 0xdeadbeefULL, ~0ULL}) {
    const auto s = hex16(v);
    EXPECT_EQ(s.size(), 16u);
    EXPECT_EQ(parse_hex16(s), v);
  }
  EXPECT_EQ(hex16(0xabcULL), "0000000000000abc");
  EXPECT_THROW(parse_hex16("xyz"), Error);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, UniformIndexStaysInRangeAndCoversIt) {
  Rng r(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    auto k = r.uniform_index(7);
    ASSERT_LT(k, 7u);
    ++hits[k];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, Uniform01HalfOpen) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    double c = r.uniform01_closed();
    ASSERT_GE(c, 0.0);
    ASSERT_LE(c, 1.0);
  }
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(5);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  r.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Text, DoubleRoundTripIsExact) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::numeric_limits<double>::denorm_min()}) {
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Text, ParseRejectsGarbage) {
  EXPECT_THROW(parse_double("1.5x"), Error);
  EXPECT_THROW(parse_double(""), Error);
  EXPECT_THROW(parse_int<int>("12a"), Error);
  EXPECT_EQ(parse_int<int>(" 12 "), 12);
}

TEST(Text, SplitKeepsEmptyFields) {
  auto parts = split("a,,b,", ',');
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_EQ(parts[0], "a");
  EXPECT_EQ(parts[1], "");
  EXPECT_EQ(parts[3], "");
  EXPECT_EQ(trim("  x y \t"), "x y");
}

TEST(Labels, IntConversion) {
  EXPECT_EQ(to_int(Label::Anomaly), 1);
  EXPECT_EQ(label_from_int(0), Label::Normal);
  EXPECT_THROW(label_from_int(2), Error);
  EXPECT_EQ(to_string(Label::Anomaly), "Anomaly");
}

}  // namespace
}  // namespace metalog
