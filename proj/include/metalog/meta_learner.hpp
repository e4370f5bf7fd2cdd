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
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metalog/common.hpp"
#include "metalog/neural_core.hpp"

namespace metalog {

// ---------------------------------------------------------------------------
// Episode pool

/// Labeled points of one source in the selected feature space. Synthetic
/// rows come from oversampling and may only be used in support sets;
/// drift-flagged rows never enter a support set.
struct SourcePool {
  std::string source_id;
  Eigen::MatrixXd x;  // rows are points
  std::vector<int> label;
  std::vector<bool> synthetic;
  std::vector<bool> drift;
  std::vector<std::int64_t> record_id;

  std::size_t size() const { return label.size(); }
  void add(std::span<const double> row, int y, bool is_synthetic, bool is_drift, std::int64_t id) {
    if (x.cols() == 0 && x.rows() == 0) x.resize(0, static_cast<Eigen::Index>(row.size()));
    require(static_cast<std::size_t>(x.cols()) == row.size(), "SourcePool::add: width mismatch");
    x.conservativeResize(x.rows() + 1, Eigen::NoChange);
    for (std::size_t j = 0; j < row.size(); ++j) x(x.rows() - 1, static_cast<Eigen::Index>(j)) = row[j];
    label.push_back(y);
    synthetic.push_back(is_synthetic);
    drift.push_back(is_drift);
    record_id.push_back(id);
  }
};

struct EpisodePool {
  std::vector<SourcePool> sources;
};

struct PointRef {
  std::size_t source = 0;
  std::size_t row = 0;
  bool operator==(const PointRef&) const = default;
  auto operator<=>(const PointRef&) const = default;
};

struct Episode {
  Eigen::MatrixXd support_x;
  std::vector<int> support_y;
  Eigen::MatrixXd query_x;
  std::vector<int> query_y;
  std::vector<PointRef> support_refs;
  std::vector<PointRef> query_refs;
  std::string support_source;
  std::set<std::string> query_sources;
  int phase = 1;
};

struct MetaConfig {
  std::size_t inner_steps = 5;
  double inner_lr = 0.01;
  double outer_lr = 1e-3;
  std::size_t meta_batch = 4;
  std::array<std::size_t, 3> episodes_per_phase{300, 300, 400};
  std::uint64_t seed = 0;
  std::size_t support_minority = 5;
  std::size_t support_majority = 5;
  std::size_t phase1_query_per_class = 15;
  std::size_t query_cap = 50;
  FocalLossConfig focal{};
  /// Probability threshold on p(anomaly).
  double threshold = 0.5;
};

namespace detail {

struct SourceCounts {
  std::vector<std::size_t> support_min, support_maj;  // non-drift, real or synthetic
  std::vector<std::size_t> real_min, real_maj;        // real points (query candidates)
};

inline SourceCounts classify_points(const SourcePool& s) {
  SourceCounts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool minority = s.label[i] == 1;
    if (!s.drift[i]) (minority ? c.support_min : c.support_maj).push_back(i);
    if (!s.synthetic[i]) (minority ? c.real_min : c.real_maj).push_back(i);
  }
  return c;
}

inline std::vector<std::size_t> draw(std::vector<std::size_t> from, std::size_t n, Rng& rng) {
  n = std::min(n, from.size());
  for (std::size_t i = 0; i < n; ++i) std::swap(from[i], from[i + rng.uniform_index(from.size() - i)]);
  from.resize(n);
  return from;
}

inline std::vector<std::size_t> minus(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::set<std::size_t> drop(b.begin(), b.end());
  std::vector<std::size_t> out;
  for (auto v : a)
    if (!drop.count(v)) out.push_back(v);
  return out;
}

/// Minority count for a query of `total` points at the natural ratio,
/// at least one.
inline std::size_t natural_minority(std::size_t total, std::size_t real_min, std::size_t real_maj,
                                    std::size_t avail_min) {
  const double ratio = static_cast<double>(real_min) / static_cast<double>(std::max<std::size_t>(1, real_min + real_maj));
  auto n = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  return std::clamp<std::size_t>(n, 1, std::min(avail_min, total));
}

inline void fill_rows(const SourcePool& s, std::size_t src, const std::vector<std::size_t>& rows, Eigen::MatrixXd& x,
                      std::vector<int>& y, std::vector<PointRef>& refs) {
  const auto start = x.rows();
  x.conservativeResize(start + static_cast<Eigen::Index>(rows.size()), s.x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(start + static_cast<Eigen::Index>(i)) = s.x.row(static_cast<Eigen::Index>(rows[i]));
    y.push_back(s.label[rows[i]]);
    refs.push_back({src, rows[i]});
  }
}

}  // namespace detail

/// Few-shot task sampler.
///   phase 1: one source, S_min + S_maj support, balanced query
///            (15 + 15, fewer when the source lacks real minority points);
///   phase 2: one source, query at the source's natural imbalance (<= cap);
///   phase 3: support from one source, query from a different source.
/// Query points are always real; support points never carry a drift flag.
inline Episode sample_episode(const EpisodePool& pool, int phase, const MetaConfig& cfg, Rng& rng) {
  require(phase >= 1 && phase <= 3, "sample_episode: phase must be 1, 2 or 3");
  const std::size_t n_src = pool.sources.size();
  std::vector<detail::SourceCounts> counts;
  counts.reserve(n_src);
  for (const auto& s : pool.sources) counts.push_back(detail::classify_points(s));

  auto support_ok = [&](std::size_t i) {
    return counts[i].support_min.size() >= cfg.support_minority && counts[i].support_maj.size() >= cfg.support_majority;
  };
  // Real minority points that can go to the query without starving support.
  auto query_min_budget = [&](std::size_t i) {
    const auto& c = counts[i];
    return std::min(c.real_min.size(), c.support_min.size() - cfg.support_minority);
  };
  auto within_ok = [&](std::size_t i) {
    return support_ok(i) && query_min_budget(i) >= 1 && counts[i].real_maj.size() > cfg.support_majority;
  };
  auto cross_query_ok = [&](std::size_t i) { return !counts[i].real_min.empty() && !counts[i].real_maj.empty(); };

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < n_src; ++i) {
    if (phase == 3) {
      bool other = false;
      for (std::size_t j = 0; j < n_src; ++j) other = other || (j != i && cross_query_ok(j));
      if (support_ok(i) && other) eligible.push_back(i);
    } else if (within_ok(i)) {
      eligible.push_back(i);
    }
  }
  if (eligible.empty()) {
    std::string msg = "sample_episode: no source can host a phase " + std::to_string(phase) + " episode (need " +
                      std::to_string(cfg.support_minority) + " minority + " + std::to_string(cfg.support_majority) +
                      " majority support points";
    msg += phase == 3 ? " and a second source with real points of both classes)"
                      : " plus real query points of both classes)";
    for (std::size_t i = 0; i < n_src; ++i)
      msg += "; " + pool.sources[i].source_id + ": " + std::to_string(counts[i].support_min.size()) + " minority/" +
             std::to_string(counts[i].support_maj.size()) + " majority";
    throw Error(msg);
  }

  Episode ep;
  ep.phase = phase;
  const std::size_t si = eligible[rng.uniform_index(eligible.size())];
  const SourcePool& s = pool.sources[si];
  const auto& c = counts[si];
  ep.support_source = s.source_id;
  ep.support_x.resize(0, s.x.cols());

  if (phase != 3) {
    // Query minority first, so the support draw cannot exhaust it.
    const std::size_t budget = query_min_budget(si);
    const std::size_t max_maj = c.real_maj.size() - cfg.support_majority;
    std::size_t n_min = 0, n_maj = 0;
    if (phase == 1) {
      n_min = std::min({cfg.phase1_query_per_class, budget, max_maj});
      n_maj = n_min;
    } else {
      const std::size_t total = std::min(cfg.query_cap, budget + max_maj);
      n_min = detail::natural_minority(total, c.real_min.size(), c.real_maj.size(), budget);
      n_maj = std::min(total - n_min, max_maj);
    }
    auto q_min = detail::draw(c.real_min, n_min, rng);
    auto sup_min = detail::draw(detail::minus(c.support_min, q_min), cfg.support_minority, rng);
    auto sup_maj = detail::draw(c.support_maj, cfg.support_majority, rng);
    auto q_maj = detail::draw(detail::minus(c.real_maj, sup_maj), n_maj, rng);
    detail::fill_rows(s, si, sup_min, ep.support_x, ep.support_y, ep.support_refs);
    detail::fill_rows(s, si, sup_maj, ep.support_x, ep.support_y, ep.support_refs);
    ep.query_x.resize(0, s.x.cols());
    detail::fill_rows(s, si, q_min, ep.query_x, ep.query_y, ep.query_refs);
    detail::fill_rows(s, si, q_maj, ep.query_x, ep.query_y, ep.query_refs);
    ep.query_sources.insert(s.source_id);
    return ep;
  }

  auto sup_min = detail::draw(c.support_min, cfg.support_minority, rng);
  auto sup_maj = detail::draw(c.support_maj, cfg.support_majority, rng);
  detail::fill_rows(s, si, sup_min, ep.support_x, ep.support_y, ep.support_refs);
  detail::fill_rows(s, si, sup_maj, ep.support_x, ep.support_y, ep.support_refs);

  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < n_src; ++j)
    if (j != si && cross_query_ok(j)) others.push_back(j);
  const std::size_t qi = others[rng.uniform_index(others.size())];
  const SourcePool& q = pool.sources[qi];
  const auto& qc = counts[qi];
  const std::size_t total = std::min(cfg.query_cap, qc.real_min.size() + qc.real_maj.size());
  const std::size_t n_min = detail::natural_minority(total, qc.real_min.size(), qc.real_maj.size(), qc.real_min.size());
  const std::size_t n_maj = std::min(total - n_min, qc.real_maj.size());
  ep.query_x.resize(0, q.x.cols());
  detail::fill_rows(q, qi, detail::draw(qc.real_min, n_min, rng), ep.query_x, ep.query_y, ep.query_refs);
  detail::fill_rows(q, qi, detail::draw(qc.real_maj, n_maj, rng), ep.query_x, ep.query_y, ep.query_refs);
  ep.query_sources.insert(q.source_id);
  return ep;
}

// ---------------------------------------------------------------------------
// Prototypes

struct Prototypes {
  /// Indexed by class label (0 = Normal, 1 = Anomaly); absent classes empty.
  std::array<std::optional<Eigen::VectorXd>, 2> mean;

  std::size_t count() const { return (mean[0] ? 1 : 0) + (mean[1] ? 1 : 0); }
};

/// Arithmetic class means of the support embeddings (rows of `embeddings`).
inline Prototypes compute_prototypes(const Eigen::MatrixXd& embeddings, std::span<const int> labels) {
  require(static_cast<std::size_t>(embeddings.rows()) == labels.size(), "compute_prototypes: label count mismatch");
  std::array<Eigen::VectorXd, 2> sum{Eigen::VectorXd::Zero(embeddings.cols()), Eigen::VectorXd::Zero(embeddings.cols())};
  std::array<std::size_t, 2> n{0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, "compute_prototypes: labels must be 0 or 1");
    sum[static_cast<std::size_t>(labels[i])] += embeddings.row(static_cast<Eigen::Index>(i)).transpose();
    ++n[static_cast<std::size_t>(labels[i])];
  }
  if (n[0] == 0 || n[1] == 0) throw Error("compute_prototypes: every class needs at least one support embedding");
  Prototypes p;
  for (std::size_t c = 0; c < 2; ++c) p.mean[c] = Eigen::VectorXd(sum[c] / static_cast<double>(n[c]));
  return p;
}

/// softmax over classes of -||z - mu_c||^2; absent classes get probability 0.
inline std::array<double, 2> proto_probabilities(const Eigen::VectorXd& z, const Prototypes& protos) {
  require(protos.count() > 0, "proto_probabilities: no prototypes");
  std::array<double, 2> logit{-INFINITY, -INFINITY};
  for (std::size_t c = 0; c < 2; ++c)
    if (protos.mean[c]) logit[c] = -(z - *protos.mean[c]).squaredNorm();
  const double mx = std::max(logit[0], logit[1]);
  std::array<double, 2> p{};
  double total = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    p[c] = protos.mean[c] ? std::exp(logit[c] - mx) : 0.0;
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

// ---------------------------------------------------------------------------
// Adaptation and meta-training

/// `steps` SGD updates of the leave-one-out prototypical focal loss on the
/// support set. Returns new parameters; `theta` is untouched.
inline EncoderParams inner_adapt(const EncoderParams& theta, const Eigen::MatrixXd& support_x,
                                 std::span<const int> support_y, std::size_t steps, double inner_lr,
                                 const FocalLossConfig& focal) {
  EncoderParams adapted = theta;
  if (steps == 0 || inner_lr == 0.0) return adapted;
  PrototypicalHead head{std::vector<int>(support_y.begin(), support_y.end()),
                        static_cast<std::size_t>(support_x.rows()), true, focal};
  for (std::size_t s = 0; s < steps; ++s) adapted = sgd_step(adapted, backward(adapted, support_x, head).grad, inner_lr);
  return adapted;
}

inline double support_loss(const EncoderParams& theta, const Eigen::MatrixXd& support_x, std::span<const int> support_y,
                           const FocalLossConfig& focal) {
  PrototypicalHead head{std::vector<int>(support_y.begin(), support_y.end()),
                        static_cast<std::size_t>(support_x.rows()), true, focal};
  return evaluate_loss(theta, support_x, head);
}

namespace detail {
inline Eigen::MatrixXd stack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

inline double binary_f1(std::span<const int> pred, std::span<const int> gold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] == 1 && gold[i] == 1;
    fp += pred[i] == 1 && gold[i] == 0;
    fn += pred[i] == 0 && gold[i] == 1;
  }
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
}
}  // namespace detail

/// Query-set loss and gradient at `theta`: prototypes from the support
/// embeddings, queries scored by the focal loss. Gradients flow through
/// both the query embeddings and the prototypes.
inline LossAndGradients query_loss_and_grad(const EncoderParams& theta, const Episode& ep, const FocalLossConfig& focal) {
  std::vector<int> labels = ep.support_y;
  labels.insert(labels.end(), ep.query_y.begin(), ep.query_y.end());
  PrototypicalHead head{std::move(labels), static_cast<std::size_t>(ep.support_x.rows()), false, focal};
  return backward(theta, detail::stack(ep.support_x, ep.query_x), head);
}

struct Predictions {
  std::vector<int> labels;
  std::vector<double> p_anomaly;
};

/// Classify rows of `queries` against prototypes built from `support`
/// under the encoder `theta` (no adaptation).
inline Predictions predict_with_prototypes(const EncoderParams& theta, const Eigen::MatrixXd& support_x,
                                           std::span<const int> support_y, const Eigen::MatrixXd& queries,
                                           double threshold = 0.5) {
  Predictions out;
  if (queries.rows() == 0) return out;
  const Prototypes protos = compute_prototypes(embed_batch(theta, support_x), support_y);
  const Eigen::MatrixXd zq = embed_batch(theta, queries);
  for (Eigen::Index i = 0; i < zq.rows(); ++i) {
    auto p = proto_probabilities(zq.row(i).transpose(), protos);
    out.p_anomaly.push_back(p[1]);
    out.labels.push_back(p[1] >= threshold ? 1 : 0);
  }
  return out;
}

struct TaskResult {
  double query_loss = 0.0;
  double query_f1 = 0.0;
};

struct MetaGradient {
  Gradients grad;
  std::vector<TaskResult> tasks;
};

/// First-order MAML meta-gradient: per task, adapt on the support set, take
/// the query gradient at the adapted parameters; average in task order.
inline MetaGradient meta_gradient(const EncoderParams& theta, std::span<const Episode> episodes, const MetaConfig& cfg) {
  require(!episodes.empty(), "meta_gradient: no episodes");
  MetaGradient mg;
  mg.grad = Gradients::zeros_like(theta);
  for (const auto& ep : episodes) {
    EncoderParams adapted = inner_adapt(theta, ep.support_x, ep.support_y, cfg.inner_steps, cfg.inner_lr, cfg.focal);
    auto lg = query_loss_and_grad(adapted, ep, cfg.focal);
    mg.grad += lg.grad;
    auto pred = predict_with_prototypes(adapted, ep.support_x, ep.support_y, ep.query_x, cfg.threshold);
    mg.tasks.push_back({lg.loss, detail::binary_f1(pred.labels, ep.query_y)});
  }
  mg.grad *= 1.0 / static_cast<double>(episodes.size());
  return mg;
}

struct CurveRow {
  std::size_t iteration = 0;
  int phase = 1;
  double mean_query_loss = 0.0;
  double mean_query_f1 = 0.0;
  bool operator==(const CurveRow&) const = default;
};

struct MetaTrainResult {
  EncoderParams theta;
  std::vector<CurveRow> curve;
  std::array<std::size_t, 3> episodes_run{0, 0, 0};
};

/// Curriculum FOMAML: phases 1 -> 2 -> 3, `episodes_per_phase` episodes each
/// in meta-batches of `meta_batch`, one Adam step on theta per meta-batch.
inline MetaTrainResult meta_train(const EpisodePool& pool, const MetaConfig& cfg, const EncoderParams& theta0) {
  require(cfg.meta_batch > 0, "meta_train: meta_batch must be positive");
  MetaTrainResult res;
  res.theta = theta0;
  AdamMoments moments = AdamMoments::zeros_like(theta0);
  Rng rng(cfg.seed);
  std::size_t iteration = 0;
  for (int phase = 1; phase <= 3; ++phase) {
    const std::size_t total = cfg.episodes_per_phase[static_cast<std::size_t>(phase - 1)];
    std::size_t done = 0;
    while (done < total) {
      const std::size_t batch = std::min(cfg.meta_batch, total - done);
      std::vector<Episode> episodes;
      for (std::size_t b = 0; b < batch; ++b) {
        try {
          episodes.push_back(sample_episode(pool, phase, cfg, rng));
        } catch (const Error& e) {
          throw Error("meta_train aborted at phase " + std::to_string(phase) + ", iteration " +
                      std::to_string(iteration) + ": " + e.what());
        }
      }
      MetaGradient mg = meta_gradient(res.theta, episodes, cfg);
      res.theta = adam_step(res.theta, mg.grad, moments, cfg.outer_lr);
      CurveRow row{iteration, phase, 0.0, 0.0};
      for (const auto& t : mg.tasks) {
        row.mean_query_loss += t.query_loss;
        row.mean_query_f1 += t.query_f1;
      }
      row.mean_query_loss /= static_cast<double>(mg.tasks.size());
      row.mean_query_f1 /= static_cast<double>(mg.tasks.size());
      res.curve.push_back(row);
      res.episodes_run[static_cast<std::size_t>(phase - 1)] += batch;
      done += batch;
      ++iteration;
    }
  }
  return res;
}

/// Mean query F1 after adaptation over a fixed episode set.
inline double evaluate_episodes(const EncoderParams& theta, std::span<const Episode> episodes, const MetaConfig& cfg) {
  if (episodes.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ep : episodes) {
    EncoderParams adapted = inner_adapt(theta, ep.support_x, ep.support_y, cfg.inner_steps, cfg.inner_lr, cfg.focal);
    auto pred = predict_with_prototypes(adapted, ep.support_x, ep.support_y, ep.query_x, cfg.threshold);
    total += detail::binary_f1(pred.labels, ep.query_y);
  }
  return total / static_cast<double>(episodes.size());
}

/// Few-shot inference on a held-out source: adapt on its support set, then
/// classify every query against the adapted prototypes.
inline Predictions adapt_and_predict(const EncoderParams& theta, const Eigen::MatrixXd& support_x,
                                     std::span<const int> support_y, const Eigen::MatrixXd& queries,
                                     const MetaConfig& cfg) {
  if (queries.rows() == 0) return {};
  EncoderParams adapted = inner_adapt(theta, support_x, support_y, cfg.inner_steps, cfg.inner_lr, cfg.focal);
  return predict_with_prototypes(adapted, support_x, support_y, queries, cfg.threshold);
}

inline void save_curve(const std::vector<CurveRow>& curve, std::ostream& out) {
  out << "iteration,phase,mean_query_loss,mean_query_f1\n";
  std::string line;
  for (const auto& r : curve) {
    line = std::to_string(r.iteration) + ',' + std::to_string(r.phase) + ',';
    append_double(line, r.mean_query_loss);
    line += ',';
    append_double(line, r.mean_query_f1);
    out << line << '\n';
  }
}

}  // namespace metalog
