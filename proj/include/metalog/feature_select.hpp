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
#include <array>
#include <string>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "metalog/common.hpp"

namespace metalog {

namespace detail {
inline void require_both_classes(std::span<const int> y, const char* who) {
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v == 0) has0 = true;
    else if (v == 1) has1 = true;
    else throw ContractViolation(std::string(who) + ": labels must be 0 or 1");
  }
  if (!has0 || !has1) throw Error(std::string(who) + ": both classes must be present");
}
}  // namespace detail

/// Quantile bin index of every entry of `column`: bin edges are the values
/// at ranks floor(k*n/bins), k = 1..bins-1; duplicate edges collapse, so
/// empty bins merge into their neighbours.
inline std::vector<int> quantile_bins(std::span<const double> column, int bins) {
  const std::size_t n = column.size();
  std::vector<double> sorted(column.begin(), column.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (int k = 1; k < bins; ++k) {
    std::size_t idx = static_cast<std::size_t>(k) * n / static_cast<std::size_t>(bins);
    if (idx < n) edges.push_back(sorted[idx]);
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), column[i]) - edges.begin());
  return out;
}

/// Mutual information (nats) between each quantile-binned feature and y.
inline std::vector<double> mi_scores(const Eigen::MatrixXd& X, std::span<const int> y, int bins = 10) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < 2) throw ContractViolation("mi_scores: need at least 2 rows");
  if (y.size() != n) throw ContractViolation("mi_scores: label count does not match rows");
  if (bins < 2) throw ContractViolation("mi_scores: bins must be >= 2");
  detail::require_both_classes(y, "mi_scores");
  std::size_t n1 = 0;
  for (int v : y) n1 += v == 1 ? 1 : 0;
  const std::array<double, 2> nc{static_cast<double>(n - n1), static_cast<double>(n1)};
  const double nd = static_cast<double>(n);

  std::vector<double> out(static_cast<std::size_t>(X.cols()), 0.0);
  std::vector<double> column(n);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = X(static_cast<Eigen::Index>(i), j);
    auto b = quantile_bins(column, bins);
    const int nb = *std::max_element(b.begin(), b.end()) + 1;
    std::vector<std::array<double, 2>> joint(static_cast<std::size_t>(nb), {0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) joint[static_cast<std::size_t>(b[i])][static_cast<std::size_t>(y[i])] += 1.0;
    double mi = 0.0;
    for (const auto& row : joint) {
      const double nbin = row[0] + row[1];
      for (int c = 0; c < 2; ++c) {
        if (row[c] == 0.0) continue;
        mi += (row[c] / nd) * std::log((row[c] * nd) / (nbin * nc[c]));
      }
    }
    out[static_cast<std::size_t>(j)] = std::max(0.0, mi);
  }
  return out;
}

struct ForestConfig {
  std::size_t trees = 50;
  std::size_t max_depth = 8;
  std::uint64_t seed = 0;
};

namespace detail {

inline double gini(double n0, double n1) {
  const double n = n0 + n1;
  if (n == 0.0) return 0.0;
  const double p0 = n0 / n, p1 = n1 / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

/// Grows one CART tree on `rows` and accumulates weighted impurity
/// decreases into `importance`. Prediction structure is not kept; only the
/// importances are needed.
class GiniTreeGrower {
 public:
  GiniTreeGrower(const Eigen::MatrixXd& X, std::span<const int> y, std::size_t mtry, std::size_t max_depth, Rng& rng,
                 std::vector<double>& importance)
      : X_(X), y_(y), mtry_(mtry), max_depth_(max_depth), rng_(rng), importance_(importance) {}

  void grow(std::vector<std::size_t> rows) {
    total_ = static_cast<double>(rows.size());
    split(rows, 0);
  }

 private:
  void split(std::vector<std::size_t>& rows, std::size_t depth) {
    if (depth >= max_depth_ || rows.size() < 2) return;
    double n1 = 0;
    for (auto r : rows) n1 += y_[r];
    const double n = static_cast<double>(rows.size());
    const double parent = gini(n - n1, n1);
    if (parent == 0.0) return;

    // Partial Fisher-Yates for mtry candidate features.
    const auto d = static_cast<std::size_t>(X_.cols());
    if (features_.size() != d) {
      features_.resize(d);
      std::iota(features_.begin(), features_.end(), std::size_t{0});
    }
    const std::size_t m = std::min(mtry_, d);
    for (std::size_t i = 0; i < m; ++i) std::swap(features_[i], features_[i + rng_.uniform_index(d - i)]);

    double best_gain = 0.0;
    std::size_t best_feature = d;
    double best_threshold = 0.0;
    std::vector<std::pair<double, int>> vals(rows.size());
    for (std::size_t fi = 0; fi < m; ++fi) {
      const auto f = static_cast<Eigen::Index>(features_[fi]);
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {X_(static_cast<Eigen::Index>(rows[i]), f), y_[rows[i]]};
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;
      double left0 = 0, left1 = 0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        (vals[i].second ? left1 : left0) += 1.0;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = left0 + left1, nr = n - nl;
        const double right1 = n1 - left1, right0 = nr - right1;
        const double child = (nl * gini(left0, left1) + nr * gini(right0, right1)) / n;
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = features_[fi];
          best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_feature == d) return;
    importance_[best_feature] += (n / total_) * best_gain;
    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (X_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(best_feature)) <= best_threshold ? left : right)
          .push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    split(left, depth + 1);
    split(right, depth + 1);
  }

  const Eigen::MatrixXd& X_;
  std::span<const int> y_;
  std::size_t mtry_;
  std::size_t max_depth_;
  Rng& rng_;
  std::vector<double>& importance_;
  std::vector<std::size_t> features_;
  double total_ = 1.0;
};

}  // namespace detail

/// Random-forest Gini importance (mean decrease in impurity), normalized to
/// sum 1. Bootstrap rows, sqrt(d) candidate features per split.
inline std::vector<double> forest_scores(const Eigen::MatrixXd& X, std::span<const int> y, const ForestConfig& cfg,
                                         Diagnostics* diag = nullptr) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto d = static_cast<std::size_t>(X.cols());
  if (y.size() != n) throw ContractViolation("forest_scores: label count does not match rows");
  detail::require_both_classes(y, "forest_scores");
  std::vector<double> importance(d, 0.0);
  const std::size_t mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
  Rng rng(cfg.seed);
  for (std::size_t t = 0; t < cfg.trees; ++t) {
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = rng.uniform_index(n);
    detail::GiniTreeGrower grower(X, y, mtry, cfg.max_depth, rng, importance);
    grower.grow(std::move(rows));
  }
  const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  if (total <= 0.0) {
    if (diag) diag->warn("forest_scores: no informative split found; importances are all zero");
    std::fill(importance.begin(), importance.end(), 0.0);
    return importance;
  }
  for (double& v : importance) v /= total;
  return importance;
}

struct FeatureScores {
  std::vector<double> mi;
  std::vector<double> forest;
  std::vector<std::size_t> fused_rank;
};

struct SelectionMask {
  std::vector<std::size_t> indices;
  std::size_t k = 0;
  std::size_t d = 0;
  bool operator==(const SelectionMask&) const = default;
};

namespace detail {
/// rank[j] = position of j when sorted by score descending, ties by index.
inline std::vector<std::size_t> descending_ranks(std::span<const double> score) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<std::size_t> rank(score.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
  return rank;
}
}  // namespace detail

inline std::vector<std::size_t> fused_ranks(std::span<const double> mi, std::span<const double> forest) {
  require(mi.size() == forest.size(), "fused_ranks: score vectors differ in length");
  auto a = detail::descending_ranks(mi);
  auto b = detail::descending_ranks(forest);
  for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
  return a;
}

/// Rank-sum fusion of the two scores; the K smallest fused ranks win
/// (ties to the lower index). Indices come back ascending.
inline SelectionMask select_top_k(std::span<const double> mi, std::span<const double> forest, std::size_t k) {
  const std::size_t d = mi.size();
  if (k < 1) throw ContractViolation("select_top_k: K must be >= 1");
  if (k > d) throw Error("select_top_k: K=" + std::to_string(k) + " exceeds feature count " + std::to_string(d));
  auto fused = fused_ranks(mi, forest);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fused[a] < fused[b]; });
  SelectionMask mask;
  mask.k = k;
  mask.d = d;
  mask.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

inline Eigen::MatrixXd apply_mask(const Eigen::MatrixXd& X, const SelectionMask& mask) {
  if (static_cast<std::size_t>(X.cols()) != mask.d) throw Error("apply_mask: matrix width does not match mask d");
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(mask.k));
  for (std::size_t j = 0; j < mask.k; ++j)
    out.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(mask.indices[j]));
  return out;
}

inline std::vector<double> apply_mask(std::span<const double> row, const SelectionMask& mask) {
  if (row.size() != mask.d) throw Error("apply_mask: row width does not match mask d");
  std::vector<double> out(mask.k);
  for (std::size_t j = 0; j < mask.k; ++j) out[j] = row[mask.indices[j]];
  return out;
}

inline void save_mask(const SelectionMask& mask, std::ostream& out) {
  out << "k=" << mask.k << " d=" << mask.d << '\n';
  for (auto i : mask.indices) out << i << '\n';
}

inline SelectionMask load_mask(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("selection mask: missing header");
  auto head = split(trim(line), ' ');
  if (head.size() != 2 || !head[0].starts_with("k=") || !head[1].starts_with("d="))
    throw Error("selection mask: header must read 'k=<K> d=<d>'");
  SelectionMask m;
  m.k = parse_int<std::size_t>(head[0].substr(2));
  m.d = parse_int<std::size_t>(head[1].substr(2));
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty()) continue;
    m.indices.push_back(parse_int<std::size_t>(t));
  }
  if (m.indices.size() != m.k) throw Error("selection mask: expected " + std::to_string(m.k) + " indices");
  for (std::size_t i = 0; i < m.indices.size(); ++i)
    if (m.indices[i] >= m.d || (i > 0 && m.indices[i] <= m.indices[i - 1]))
      throw Error("selection mask: indices must be ascending and below d");
  return m;
}

}  // namespace metalog
