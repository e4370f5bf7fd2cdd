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

#include "metalog/config.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

namespace metalog {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(RunConfig, DefaultsMatchLibraryDefaults) {
  RunConfig c;
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.split_ratio, 0.7);
  EXPECT_EQ(c.tree.depth, 4u);
  EXPECT_EQ(c.tree.sim_threshold, 0.4);
  EXPECT_EQ(c.tree.max_children, 100u);
  EXPECT_EQ(c.tau, 0.8);
  EXPECT_EQ(c.semantic_dim, 768u);
  EXPECT_EQ(c.k, 200u);
  EXPECT_EQ(c.mi_bins, 10);
  EXPECT_EQ(c.forest_trees, 50u);
  EXPECT_EQ(c.forest_depth, 8u);
  EXPECT_EQ(c.smote_k, 5u);
  EXPECT_EQ(c.meta.inner_steps, 5u);
  EXPECT_EQ(c.meta.inner_lr, 0.01);
  EXPECT_EQ(c.meta.outer_lr, 1e-3);
  EXPECT_EQ(c.meta.meta_batch, 4u);
  EXPECT_EQ(c.meta.episodes_per_phase, (std::array<std::size_t, 3>{300, 300, 400}));
  EXPECT_EQ(c.meta.focal.gamma, 2.0);
  EXPECT_FALSE(c.meta.focal.alpha);
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{128, 64, 32}));
  EXPECT_NO_THROW(validate(c));
}

TEST(RunConfig, LoadsIniSectionsAndResolvesPaths) {
  TempDir dir("cfg");
  write_file(dir / "run.cfg",
             "[run]\nmanifest = corpus/manifest.cfg\nseed = 9\n"
             "[select]\nk = 64\n"
             "[train]\nepisodes = 10, 20, 30\nhidden = 32,16\nfocal_alpha = 0.3,0.7\n");
  auto c = load_run_config(dir / "run.cfg");
  EXPECT_EQ(c.manifest, dir.path() / "corpus/manifest.cfg");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.k, 64u);
  EXPECT_EQ(c.meta.episodes_per_phase, (std::array<std::size_t, 3>{10, 20, 30}));
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{32, 16}));
  ASSERT_TRUE(c.meta.focal.alpha);
  EXPECT_EQ((*c.meta.focal.alpha)[1], 0.7);
}

TEST(RunConfig, OverridesApplyAfterFile) {
  TempDir dir("ovr");
  write_file(dir / "run.cfg", "[run]\nseed = 9\n[label]\ntau = 0.8\n");
  auto c = load_run_config(dir / "run.cfg", {"run.seed=123", "label.tau = 0.9"});
  EXPECT_EQ(c.seed, 123u);
  EXPECT_EQ(c.tau, 0.9);
}

TEST(RunConfig, EmptyPathGivesDefaults) {
  auto c = load_run_config({}, {"select.k=10"});
  EXPECT_EQ(c.k, 10u);
  EXPECT_EQ(c.seed, 42u);
}

TEST(RunConfig, UnknownKeyNamed) {
  try {
    load_run_config({}, {"select.kk=3"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("select.kk"), std::string::npos);
  }
}

TEST(RunConfig, BadValuesRejected) {
  EXPECT_THROW(load_run_config({}, {"select.k=abc"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"label.tau=0"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"label.tau=1.5"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"run.split_ratio=1"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"select.mi_bins=1"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"train.episodes=1,2"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"train.focal_gamma=-1"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"train.focal_alpha=0.5"}), ConfigError);
  EXPECT_THROW(load_run_config({}, {"no_equals_sign"}), ConfigError);
  EXPECT_NO_THROW(load_run_config({}, {"label.tau=1"}));
}

TEST(RunConfig, MissingFileNamesPath) {
  try {
    load_run_config("/nonexistent/run.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.cfg"), std::string::npos);
  }
}

TEST(RunConfig, KeyOutsideSectionRejected) {
  TempDir dir("nosec");
  write_file(dir / "run.cfg", "seed = 3\n");
  EXPECT_THROW(load_run_config(dir / "run.cfg"), ConfigError);
}

TEST(RunConfig, CanonicalIsSortedAndComplete) {
  RunConfig c;
  auto lines = c.canonical();
  EXPECT_TRUE(std::is_sorted(lines.begin(), lines.end()));
  EXPECT_EQ(lines.size(), 27u);
  // Every canonical line is accepted back by apply_setting.
  RunConfig back;
  for (const auto& l : lines) {
    auto eq = l.find('=');
    apply_setting(back, l.substr(0, eq), l.substr(eq + 1));
  }
  EXPECT_EQ(back.canonical_text(), c.canonical_text());
}

TEST(RunConfig, DigestTracksEveryKey) {
  const RunConfig base;
  std::set<std::string> digests{base.digest()};
  const std::vector<std::string> changes{"run.seed=1",         "run.split_ratio=0.6",  "parse.depth=3",
                                         "parse.sim_threshold=0.5", "label.tau=0.7", "embedding.dim=32",
                                         "select.k=5",         "select.mi_bins=4",     "balance.smote_k=3",
                                         "train.inner_steps=1", "train.episodes=1,1,1", "train.hidden=8",
                                         "train.threshold=0.4", "train.focal_alpha=0.2,0.8"};
  for (const auto& ch : changes) {
    auto c = load_run_config({}, {ch});
    EXPECT_TRUE(digests.insert(c.digest()).second) << ch;
  }
  EXPECT_EQ(load_run_config({}, {}).digest(), base.digest());
}

TEST(RunConfig, SaveLoadRoundTrip) {
  TempDir dir("rt");
  auto c = load_run_config({}, {"run.seed=77", "train.hidden=20,10", "select.k=33", "train.focal_alpha=0.1,0.9"});
  {
    std::ofstream out(dir / "run.cfg");
    save_run_config(c, out);
  }
  auto back = load_run_config(dir / "run.cfg");
  // run.manifest resolves against the file's directory; everything else is identical.
  back.manifest = c.manifest;
  EXPECT_EQ(back.canonical_text(), c.canonical_text());
  EXPECT_EQ(back.digest(), c.digest());
}

}  // namespace
}  // namespace metalog
