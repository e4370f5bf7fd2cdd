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

#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metalog/common.hpp"

namespace metalog {

/// Dense encoder f_theta: affine layers, ReLU between them, linear output.
struct EncoderParams {
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
    bool operator==(const Layer& o) const { return weight == o.weight && bias == o.bias; }
  };
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }
  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> s;
    if (layers.empty()) return s;
    s.push_back(input_dim());
    for (const auto& l : layers) s.push_back(static_cast<std::size_t>(l.weight.rows()));
    return s;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }
  /// Flat parameter access: layer by layer, weights (column-major) then bias.
  double& at(std::size_t idx) {
    for (auto& l : layers) {
      const auto nw = static_cast<std::size_t>(l.weight.size());
      if (idx < nw) return l.weight.data()[idx];
      idx -= nw;
      const auto nb = static_cast<std::size_t>(l.bias.size());
      if (idx < nb) return l.bias.data()[idx];
      idx -= nb;
    }
    throw ContractViolation("parameter index out of range");
  }
  double at(std::size_t idx) const { return const_cast<EncoderParams*>(this)->at(idx); }

  bool same_shape(const EncoderParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].weight.rows() != o.layers[i].weight.rows() || layers[i].weight.cols() != o.layers[i].weight.cols())
        return false;
    return true;
  }
  bool operator==(const EncoderParams&) const = default;
};

/// Gradients share the parameter layout.
struct Gradients : EncoderParams {
  static Gradients zeros_like(const EncoderParams& p) {
    Gradients g;
    for (const auto& l : p.layers)
      g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    return g;
  }
  Gradients& operator+=(const Gradients& o) {
    require(same_shape(o), "gradient shapes differ");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }
  Gradients& operator*=(double s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
    return *this;
  }
  double norm() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
    return std::sqrt(s);
  }
};

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
inline EncoderParams init_encoder(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  require(layer_sizes.size() >= 2, "encoder needs at least input and output sizes");
  EncoderParams p;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(layer_sizes[i]);
    const auto out = static_cast<Eigen::Index>(layer_sizes[i + 1]);
    require(in > 0 && out > 0, "layer sizes must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    EncoderParams::Layer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index c = 0; c < in; ++c)
      for (Eigen::Index r = 0; r < out; ++r) l.weight(r, c) = (2.0 * rng.uniform01() - 1.0) * bound;
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline EncoderParams init_encoder(std::initializer_list<std::size_t> sizes, std::uint64_t seed) {
  std::vector<std::size_t> v(sizes);
  return init_encoder(std::span<const std::size_t>(v), seed);
}

/// Activations kept for the backward pass; rows are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  Eigen::MatrixXd output;
};

inline ForwardCache forward_batch(const EncoderParams& p, const Eigen::MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != p.input_dim())
    throw ContractViolation("forward: input has " + std::to_string(X.cols()) + " columns, encoder expects " +
                            std::to_string(p.input_dim()));
  ForwardCache c;
  Eigen::MatrixXd a = X;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    Eigen::MatrixXd z = a * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    if (!z.allFinite()) throw Error("non-finite activation in layer " + std::to_string(i));
    c.inputs.push_back(std::move(a));
    c.pre.push_back(z);
    a = (i + 1 < p.layers.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
  }
  c.output = std::move(a);
  return c;
}

inline Eigen::MatrixXd embed_batch(const EncoderParams& p, const Eigen::MatrixXd& X) {
  return forward_batch(p, X).output;
}

inline Eigen::VectorXd forward(const EncoderParams& p, const Eigen::VectorXd& x) {
  Eigen::MatrixXd row = x.transpose();
  return forward_batch(p, row).output.row(0).transpose();
}

// ---------------------------------------------------------------------------
// Focal loss

struct FocalLossConfig {
  double gamma = 2.0;
  /// Per-class weights; nullopt means "balanced" (inverse class frequency
  /// over the scored points, normalized to sum 1).
  std::optional<std::array<double, 2>> alpha;

  static FocalLossConfig cross_entropy() { return {0.0, std::array<double, 2>{1.0, 1.0}}; }
};

inline constexpr double kMinProbability = 1e-12;

/// -alpha * (1 - p)^gamma * ln(p) for the target-class probability p.
inline double focal_from_prob(double p, double gamma, double alpha) {
  return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

inline double focal_loss(std::span<const double> probs, std::size_t target, const FocalLossConfig& cfg,
                         Diagnostics* diag = nullptr) {
  require(target < probs.size(), "focal_loss: target out of range");
  require(cfg.gamma >= 0.0, "focal_loss: gamma must be >= 0");
  double p = probs[target];
  if (p < kMinProbability) {
    if (diag) diag->warn("focal_loss: target probability " + format_double(p) + " clamped to 1e-12");
    p = kMinProbability;
  }
  const double alpha = cfg.alpha ? (*cfg.alpha)[target] : 1.0;
  return focal_from_prob(p, cfg.gamma, alpha);
}

/// d/dp of the focal loss, expressed through ln p for stability.
inline double focal_dloss_dp(double p, double log_p, double gamma, double alpha) {
  const double q = 1.0 - p;
  double term = 0.0;
  if (gamma > 0.0 && q > 0.0) term = -gamma * std::pow(q, gamma - 1.0) * log_p;
  return -alpha * (term + std::pow(q, gamma) / p);
}

// ---------------------------------------------------------------------------
// Loss heads: map a batch of embeddings to (loss, d loss / d embeddings).

/// Mean over rows of ||z - t||^2.
struct SquaredErrorHead {
  Eigen::MatrixXd targets;

  double operator()(const Eigen::MatrixXd& Z, Eigen::MatrixXd* dZ) const {
    require(Z.rows() == targets.rows() && Z.cols() == targets.cols(), "squared-error head: shape mismatch");
    const Eigen::MatrixXd diff = Z - targets;
    const double n = static_cast<double>(Z.rows());
    if (dZ) *dZ = (2.0 / n) * diff;
    return diff.squaredNorm() / n;
  }
};

/// Prototypical-network head over a batch laid out as support rows first
/// (`n_support` of them) followed by query rows. Scored points are the
/// queries, or with `leave_one_out` the support rows themselves, each
/// compared against prototypes that exclude it. Loss is the mean focal loss
/// of softmax(-squared distance).
struct PrototypicalHead {
  std::vector<int> labels;
  std::size_t n_support = 0;
  bool leave_one_out = false;
  FocalLossConfig focal;

  double operator()(const Eigen::MatrixXd& Z, Eigen::MatrixXd* dZ) const {
    const auto n = static_cast<std::size_t>(Z.rows());
    require(labels.size() == n, "prototypical head: label count does not match batch");
    require(n_support <= n && n_support > 0, "prototypical head: bad support size");
    std::array<std::size_t, 2> count{0, 0};
    std::array<Eigen::VectorXd, 2> sum{Eigen::VectorXd::Zero(Z.cols()), Eigen::VectorXd::Zero(Z.cols())};
    for (std::size_t s = 0; s < n_support; ++s) {
      const int c = labels[s];
      require(c == 0 || c == 1, "prototypical head: labels must be 0 or 1");
      ++count[static_cast<std::size_t>(c)];
      sum[static_cast<std::size_t>(c)] += Z.row(static_cast<Eigen::Index>(s)).transpose();
    }
    if (count[0] == 0 || count[1] == 0) throw Error("prototypical head: support lacks a class");

    const std::size_t first = leave_one_out ? 0 : n_support;
    const std::size_t last = leave_one_out ? n_support : n;
    if (first == last) {
      if (dZ) *dZ = Eigen::MatrixXd::Zero(Z.rows(), Z.cols());
      return 0.0;
    }
    std::array<double, 2> alpha{1.0, 1.0};
    if (focal.alpha) {
      alpha = *focal.alpha;
    } else {
      std::array<double, 2> scored{0.0, 0.0};
      for (std::size_t q = first; q < last; ++q) scored[static_cast<std::size_t>(labels[q])] += 1.0;
      const double inv0 = scored[0] > 0 ? 1.0 / scored[0] : 0.0;
      const double inv1 = scored[1] > 0 ? 1.0 / scored[1] : 0.0;
      alpha = {inv0 / (inv0 + inv1), inv1 / (inv0 + inv1)};
    }

    const double inv_scored = 1.0 / static_cast<double>(last - first);
    if (dZ) *dZ = Eigen::MatrixXd::Zero(Z.rows(), Z.cols());
    double total = 0.0;
    for (std::size_t q = first; q < last; ++q) {
      const int t = labels[q];
      const Eigen::VectorXd zq = Z.row(static_cast<Eigen::Index>(q)).transpose();
      // Prototype of class c as (sum - excluded) / denominator.
      std::array<Eigen::VectorXd, 2> mu;
      std::array<double, 2> denom{};
      std::array<bool, 2> excluded{false, false};
      for (std::size_t c = 0; c < 2; ++c) {
        excluded[c] = leave_one_out && static_cast<int>(c) == t && count[c] > 1;
        denom[c] = static_cast<double>(count[c] - (excluded[c] ? 1 : 0));
        mu[c] = (excluded[c] ? Eigen::VectorXd(sum[c] - zq) : sum[c]) / denom[c];
      }
      std::array<double, 2> logit{-(zq - mu[0]).squaredNorm(), -(zq - mu[1]).squaredNorm()};
      const double mx = std::max(logit[0], logit[1]);
      const double lse = mx + std::log(std::exp(logit[0] - mx) + std::exp(logit[1] - mx));
      std::array<double, 2> prob{std::exp(logit[0] - lse), std::exp(logit[1] - lse)};
      // log p_t comes straight from the log-sum-exp, so no clamping is
      // needed and the loss stays smooth for very confident mistakes.
      const double log_pt = logit[static_cast<std::size_t>(t)] - lse;
      const double pt = prob[static_cast<std::size_t>(t)];
      const double a = alpha[static_cast<std::size_t>(t)];
      const double qt = 1.0 - pt;
      total += -a * std::pow(qt, focal.gamma) * log_pt;
      if (!dZ) continue;

      // p_t * dL/dp_t, finite even when p_t underflows.
      double p_dLdp = -a * std::pow(qt, focal.gamma);
      if (focal.gamma > 0.0 && qt > 0.0) p_dLdp += a * focal.gamma * std::pow(qt, focal.gamma - 1.0) * pt * log_pt;
      p_dLdp *= inv_scored;
      for (std::size_t c = 0; c < 2; ++c) {
        // d loss / d logit_c = p_t * dL/dp_t * (delta_tc - p_c)
        const double g = p_dLdp * ((static_cast<int>(c) == t ? 1.0 : 0.0) - prob[c]);
        const Eigen::VectorXd diff = zq - mu[c];
        // logit_c = -||zq - mu_c||^2
        Eigen::VectorXd d_mu = 2.0 * g * diff;
        dZ->row(static_cast<Eigen::Index>(q)) -= (2.0 * g * diff).transpose();
        const Eigen::RowVectorXd share = (d_mu / denom[c]).transpose();
        for (std::size_t s = 0; s < n_support; ++s) {
          if (labels[s] != static_cast<int>(c)) continue;
          if (excluded[c] && s == q) continue;
          dZ->row(static_cast<Eigen::Index>(s)) += share;
        }
      }
    }
    return total * inv_scored;
  }
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grad;
};

/// Analytic gradients of head(f_theta(X)) by backpropagation.
template <typename Head>
LossAndGradients backward(const EncoderParams& p, const Eigen::MatrixXd& X, const Head& head) {
  require(X.rows() > 0, "backward: empty batch");
  ForwardCache c = forward_batch(p, X);
  Eigen::MatrixXd delta;
  LossAndGradients out;
  out.loss = head(c.output, &delta);
  out.grad = Gradients::zeros_like(p);
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    if (li + 1 < p.layers.size()) delta = delta.cwiseProduct((c.pre[li].array() > 0.0).cast<double>().matrix());
    out.grad.layers[li].weight = delta.transpose() * c.inputs[li];
    out.grad.layers[li].bias = delta.colwise().sum().transpose();
    if (li > 0) delta = delta * p.layers[li].weight;
  }
  return out;
}

template <typename Head>
double evaluate_loss(const EncoderParams& p, const Eigen::MatrixXd& X, const Head& head) {
  return head(forward_batch(p, X).output, nullptr);
}

/// Max over parameters of |analytic - numeric| / max(|numeric|, 1e-7),
/// numeric by central differences.
template <typename Head>
double finite_diff_check(const EncoderParams& p, const Eigen::MatrixXd& X, const Head& head, double eps,
                         const Gradients* analytic = nullptr) {
  require(eps >= 1e-6 && eps <= 1e-3, "finite_diff_check: eps must lie in [1e-6, 1e-3]");
  const std::size_t count = p.parameter_count();
  if (count == 0) return 0.0;
  Gradients computed;
  if (!analytic) {
    computed = backward(p, X, head).grad;
    analytic = &computed;
  }
  EncoderParams probe = p;
  double worst = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double orig = probe.at(i);
    probe.at(i) = orig + eps;
    const double up = evaluate_loss(probe, X, head);
    probe.at(i) = orig - eps;
    const double down = evaluate_loss(probe, X, head);
    probe.at(i) = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic->at(i) - numeric) / std::max(std::abs(numeric), 1e-7);
    worst = std::max(worst, err);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Optimizers

inline EncoderParams sgd_step(const EncoderParams& p, const Gradients& g, double lr) {
  require(p.same_shape(g), "sgd_step: shape mismatch");
  require(lr >= 0.0, "sgd_step: lr must be non-negative");
  EncoderParams out = p;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    out.layers[i].weight -= lr * g.layers[i].weight;
    out.layers[i].bias -= lr * g.layers[i].bias;
  }
  return out;
}

struct AdamMoments {
  Gradients first;
  Gradients second;
  std::size_t step = 0;

  static AdamMoments zeros_like(const EncoderParams& p) {
    return {Gradients::zeros_like(p), Gradients::zeros_like(p), 0};
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update; `moments.step` is incremented first.
inline EncoderParams adam_step(const EncoderParams& p, const Gradients& g, AdamMoments& moments, double lr,
                               AdamConfig cfg = {}) {
  require(p.same_shape(g) && p.same_shape(moments.first), "adam_step: shape mismatch");
  require(lr > 0.0, "adam_step: lr must be positive");
  ++moments.step;
  const double t = static_cast<double>(moments.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  EncoderParams out = p;
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    update(out.layers[i].weight, g.layers[i].weight, moments.first.layers[i].weight, moments.second.layers[i].weight);
    update(out.layers[i].bias, g.layers[i].bias, moments.first.layers[i].bias, moments.second.layers[i].bias);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_digest;
  /// Free-form key=value lines echoed after the header (e.g. MetaConfig).
  std::vector<std::pair<std::string, std::string>> extra;
  bool operator==(const CheckpointMeta&) const = default;
};

/// Text checkpoint: header lines, then each layer's weight rows and bias in
/// shortest round-trip decimal form (exact on reload).
inline void save_checkpoint(const EncoderParams& p, const CheckpointMeta& meta, std::ostream& out) {
  out << "metalog-checkpoint " << kCheckpointVersion << '\n';
  out << "layers";
  for (auto s : p.layer_sizes()) out << ' ' << s;
  out << '\n';
  out << "seed " << meta.seed << '\n';
  out << "config_digest " << (meta.config_digest.empty() ? "-" : meta.config_digest) << '\n';
  for (const auto& [k, v] : meta.extra) out << "meta " << k << '=' << v << '\n';
  std::string line;
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const auto& l = p.layers[li];
    out << "weight " << li << ' ' << l.weight.rows() << ' ' << l.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      line.clear();
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        if (c) line += ' ';
        append_double(line, l.weight(r, c));
      }
      out << line << '\n';
    }
    out << "bias " << li << ' ' << l.bias.size() << '\n';
    line.clear();
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
      if (r) line += ' ';
      append_double(line, l.bias(r));
    }
    out << line << '\n';
  }
}

inline EncoderParams load_checkpoint(std::istream& in, CheckpointMeta* meta = nullptr) {
  std::string line;
  auto next = [&]() -> const std::string& {
    if (!std::getline(in, line)) throw Error("checkpoint truncated");
    return line;
  };
  auto head = split(trim(next()), ' ');
  if (head.size() != 2 || head[0] != "metalog-checkpoint") throw Error("not a metalog checkpoint");
  if (parse_int<int>(head[1]) != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::string(head[1]));
  auto sizes_line = split(trim(next()), ' ');
  if (sizes_line.empty() || sizes_line[0] != "layers") throw Error("checkpoint: missing layers line");
  std::vector<std::size_t> sizes;
  for (std::size_t i = 1; i < sizes_line.size(); ++i) sizes.push_back(parse_int<std::size_t>(sizes_line[i]));
  CheckpointMeta m;
  auto seed_line = split(trim(next()), ' ');
  if (seed_line.size() != 2 || seed_line[0] != "seed") throw Error("checkpoint: missing seed line");
  m.seed = parse_int<std::uint64_t>(seed_line[1]);
  auto digest_line = split(trim(next()), ' ');
  if (digest_line.size() != 2 || digest_line[0] != "config_digest") throw Error("checkpoint: missing digest line");
  m.config_digest = digest_line[1] == "-" ? "" : std::string(digest_line[1]);

  EncoderParams p;
  std::string pending = next();
  while (pending.starts_with("meta ")) {
    auto kv = std::string_view(pending).substr(5);
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw Error("checkpoint: malformed meta line");
    m.extra.emplace_back(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    pending = next();
  }
  for (std::size_t li = 0; li + 1 < sizes.size(); ++li) {
    auto wh = split(trim(pending), ' ');
    if (wh.size() != 4 || wh[0] != "weight" || parse_int<std::size_t>(wh[1]) != li)
      throw Error("checkpoint: expected weight header for layer " + std::to_string(li));
    const auto rows = parse_int<Eigen::Index>(wh[2]);
    const auto cols = parse_int<Eigen::Index>(wh[3]);
    if (static_cast<std::size_t>(rows) != sizes[li + 1] || static_cast<std::size_t>(cols) != sizes[li])
      throw Error("checkpoint: layer " + std::to_string(li) + " shape disagrees with layer sizes");
    EncoderParams::Layer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto vals = split(trim(next()), ' ');
      if (static_cast<Eigen::Index>(vals.size()) != cols) throw Error("checkpoint: short weight row");
      for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = parse_double(vals[static_cast<std::size_t>(c)]);
    }
    auto bh = split(trim(next()), ' ');
    if (bh.size() != 3 || bh[0] != "bias" || parse_int<Eigen::Index>(bh[2]) != rows)
      throw Error("checkpoint: expected bias header for layer " + std::to_string(li));
    auto vals = split(trim(next()), ' ');
    if (static_cast<Eigen::Index>(vals.size()) != rows) throw Error("checkpoint: short bias row");
    for (Eigen::Index r = 0; r < rows; ++r) l.bias(r) = parse_double(vals[static_cast<std::size_t>(r)]);
    p.layers.push_back(std::move(l));
    if (li + 2 < sizes.size()) pending = next();
  }
  if (meta) *meta = std::move(m);
  return p;
}

}  // namespace metalog
