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
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "metalog/common.hpp"

namespace metalog {

inline constexpr std::size_t kDefaultSmoteNeighbors = 5;

/// Indices of the min(k, m-1) Euclidean nearest rows to row `i` (itself
/// excluded), nearest first, ties to the lower index.
inline std::vector<std::size_t> nearest_neighbors(const Eigen::MatrixXd& X, std::size_t i, std::size_t k) {
  const auto m = static_cast<std::size_t>(X.rows());
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (j == i) continue;
    dist.emplace_back((X.row(static_cast<Eigen::Index>(j)) - X.row(static_cast<Eigen::Index>(i))).squaredNorm(), j);
  }
  const std::size_t take = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out(take);
  for (std::size_t t = 0; t < take; ++t) out[t] = dist[t].second;
  return out;
}

/// SMOTE: each new row is x_i + lambda * (x_nn - x_i) for a uniformly drawn
/// minority row x_i, one of its k nearest minority neighbours x_nn, and
/// lambda ~ U[0, 1].
inline Eigen::MatrixXd smote(const Eigen::MatrixXd& X_min, std::size_t n_new, std::size_t k, std::uint64_t seed) {
  const auto m = static_cast<std::size_t>(X_min.rows());
  if (m == 0) throw Error("smote: empty minority class");
  if (m == 1) throw Error("smote: a single minority row has no neighbour to interpolate with");
  if (k < 1) throw ContractViolation("smote: k must be >= 1");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_new), X_min.cols());
  if (n_new == 0) return out;
  std::vector<std::vector<std::size_t>> neighbors(m);
  Rng rng(seed);
  for (std::size_t s = 0; s < n_new; ++s) {
    const std::size_t i = rng.uniform_index(m);
    if (neighbors[i].empty()) neighbors[i] = nearest_neighbors(X_min, i, k);
    const std::size_t nn = neighbors[i][rng.uniform_index(neighbors[i].size())];
    const double lambda = rng.uniform01_closed();
    const auto xi = X_min.row(static_cast<Eigen::Index>(i));
    out.row(static_cast<Eigen::Index>(s)) = xi + lambda * (X_min.row(static_cast<Eigen::Index>(nn)) - xi);
  }
  return out;
}

struct BalanceReport {
  std::size_t before_majority = 0;
  std::size_t before_minority = 0;
  std::size_t after_majority = 0;
  std::size_t after_minority = 0;
  std::size_t synthetic_count = 0;
  std::size_t k_neighbors_used = 0;
  int minority_label = 1;
  bool operator==(const BalanceReport&) const = default;
};

struct BalancedSet {
  Eigen::MatrixXd X;
  std::vector<int> y;
  BalanceReport report;
};

/// Appends SMOTE rows of the minority class until both classes have equal
/// counts. Original rows stay first and unchanged. Training data only.
inline BalancedSet balance_training_set(const Eigen::MatrixXd& X, std::span<const int> y, std::size_t k,
                                        std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n) throw ContractViolation("balance_training_set: label count does not match rows");
  std::size_t n1 = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw ContractViolation("balance_training_set: labels must be 0 or 1");
    n1 += static_cast<std::size_t>(v);
  }
  const std::size_t n0 = n - n1;
  if (n0 == 0 || n1 == 0) throw Error("balance_training_set: both classes must be present");
  const int minority = n1 <= n0 ? 1 : 0;
  const std::size_t n_min = std::min(n0, n1), n_maj = std::max(n0, n1);
  if (n_min < 2)
    throw Error("balance_training_set: minority class has " + std::to_string(n_min) +
                " row(s); SMOTE needs at least 2 (reduce the imbalance target or skip balancing)");

  BalancedSet out;
  out.report = {n_maj, n_min, n_maj, n_maj, n_maj - n_min, std::min(k, n_min - 1), minority};
  Eigen::MatrixXd X_min(static_cast<Eigen::Index>(n_min), X.cols());
  for (std::size_t i = 0, r = 0; i < n; ++i)
    if (y[i] == minority) X_min.row(static_cast<Eigen::Index>(r++)) = X.row(static_cast<Eigen::Index>(i));
  Eigen::MatrixXd synth = smote(X_min, n_maj - n_min, k, seed);
  out.X.resize(static_cast<Eigen::Index>(n + (n_maj - n_min)), X.cols());
  out.X.topRows(static_cast<Eigen::Index>(n)) = X;
  out.X.bottomRows(synth.rows()) = synth;
  out.y.assign(y.begin(), y.end());
  out.y.resize(n + (n_maj - n_min), minority);
  return out;
}

}  // namespace metalog
