#pragma once

// Representation and behavior-cloning objectives with exact gradients.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "imrl/errors.hpp"

namespace imrl {

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

namespace detail {

inline double log_sum_exp(std::span<const double> values) {
  const double peak = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

}  // namespace detail

/// -log softmax(logits)[label], gradient softmax - onehot.
inline LossAndGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (logits.empty() || label >= logits.size())
    throw LabelError("class label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  const double lse = detail::log_sum_exp(logits);
  LossAndGrad out;
  out.loss = lse - logits[label];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - lse);
  out.grad[label] -= 1.0;
  return out;
}

inline double l2_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("l2_distance: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

struct TripletBatch {
  std::vector<double> anchor;
  std::vector<double> positive;
  std::vector<double> negative;
  double margin = 0.2;
};

struct TripletResult {
  double loss = 0.0;
  std::vector<double> grad_anchor;
  std::vector<double> grad_positive;
  std::vector<double> grad_negative;
};

/// max(0, |A-P| - |A-N| + margin). The distance gradient at zero separation is
/// taken as zero.
inline TripletResult triplet_loss(const TripletBatch& t) {
  const std::size_t dim = t.anchor.size();
  if (t.positive.size() != dim || t.negative.size() != dim)
    throw ShapeError("triplet_loss: embeddings differ in dimension");
  if (!(t.margin >= 0.0)) throw ConfigError("triplet_loss: margin must be non-negative");
  const double d_ap = l2_distance(t.anchor, t.positive);
  const double d_an = l2_distance(t.anchor, t.negative);
  TripletResult out;
  out.grad_anchor.assign(dim, 0.0);
  out.grad_positive.assign(dim, 0.0);
  out.grad_negative.assign(dim, 0.0);
  const double hinge = d_ap - d_an + t.margin;
  if (hinge <= 0.0) return out;
  out.loss = hinge;
  for (std::size_t i = 0; i < dim; ++i) {
    const double gp = d_ap > 0.0 ? (t.anchor[i] - t.positive[i]) / d_ap : 0.0;
    const double gn = d_an > 0.0 ? (t.anchor[i] - t.negative[i]) / d_an : 0.0;
    out.grad_anchor[i] = gp - gn;
    out.grad_positive[i] = -gp;
    out.grad_negative[i] = gn;
  }
  return out;
}

/// Frame-order loss over an N x N row-major logit grid: row j scores the
/// original position of frame j. Sum of per-row cross entropies.
inline LossAndGrad temporal_order_loss(std::span<const double> order_logits,
                                       std::span<const std::size_t> true_positions) {
  const std::size_t n = true_positions.size();
  if (order_logits.size() != n * n) throw ShapeError("temporal_order_loss: logits must be N x N");
  std::vector<bool> seen(n, false);
  for (std::size_t p : true_positions) {
    if (p >= n || seen[p]) throw LabelError("temporal_order_loss: positions are not a permutation");
    seen[p] = true;
  }
  LossAndGrad out;
  out.grad.resize(n * n);
  for (std::size_t row = 0; row < n; ++row) {
    auto ce = softmax_cross_entropy(order_logits.subspan(row * n, n), true_positions[row]);
    out.loss += ce.loss;
    std::copy(ce.grad.begin(), ce.grad.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(row * n));
  }
  return out;
}

struct ScalarLoss {
  double loss = 0.0;
  double grad = 0.0;
};

inline ScalarLoss fullness_mse(double predicted, double target) {
  if (!(target >= 0.0 && target <= 1.0)) throw LabelError("fullness target must lie in [0, 1]");
  const double diff = predicted - target;
  return {diff * diff, 2.0 * diff};
}

struct LossWeights {
  double ce = 1.0;
  double tri = 1.0;
  double temp = 1.0;
  double full = 1.0;

  void validate() const {
    if (!(ce >= 0.0)) throw ConfigError("lambda_ce must be non-negative");
    if (!(tri >= 0.0)) throw ConfigError("lambda_tri must be non-negative");
    if (!(temp >= 0.0)) throw ConfigError("lambda_temp must be non-negative");
    if (!(full >= 0.0)) throw ConfigError("lambda_full must be non-negative");
  }

  bool operator==(const LossWeights&) const = default;
};

inline double combined_repr_loss(double l_ce, double l_tri, double l_temp, double l_full,
                                 const LossWeights& weights) {
  weights.validate();
  return weights.ce * l_ce + weights.tri * l_tri + weights.temp * l_temp + weights.full * l_full;
}

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian over actions. The log-std is clamped before use.
struct GaussianActionHead {
  std::vector<double> mean;
  std::vector<double> log_std;
};

struct GaussianNllResult {
  double loss = 0.0;
  std::vector<double> grad_mean;
  std::vector<double> grad_log_std;
};

/// Negative log-likelihood of `action` under the head:
/// sum_d 0.5 ((a_d - mu_d) / sigma_d)^2 + log sigma_d + 0.5 log 2 pi.
inline GaussianNllResult bc_nll(const GaussianActionHead& head, std::span<const double> action) {
  const std::size_t dim = head.mean.size();
  if (head.log_std.size() != dim || action.size() != dim)
    throw ShapeError("bc_nll: head and action dimensions differ");
  GaussianNllResult out;
  out.grad_mean.resize(dim);
  out.grad_log_std.resize(dim);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t d = 0; d < dim; ++d) {
    const double raw = head.log_std[d];
    const double log_sigma = std::clamp(raw, kLogStdMin, kLogStdMax);
    const double inv_sigma = std::exp(-log_sigma);
    const double z = (action[d] - head.mean[d]) * inv_sigma;
    out.loss += 0.5 * z * z + log_sigma + half_log_2pi;
    out.grad_mean[d] = -z * inv_sigma;
    const bool clamped = raw < kLogStdMin || raw > kLogStdMax;
    out.grad_log_std[d] = clamped ? 0.0 : 1.0 - z * z;
  }
  return out;
}

}  // namespace imrl
