#pragma once

// Embedding diagnostics: silhouette score, intra/inter distance ratio and an
// exact t-SNE.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "imrl/errors.hpp"
#include "imrl/numeric.hpp"
#include "imrl/rng.hpp"

namespace imrl {

/// Pairwise Euclidean distances between the columns of `x`.
inline Matrix pairwise_distances(const Matrix& x) {
  const Eigen::Index n = x.cols();
  const Vector sq = x.colwise().squaredNorm().transpose();
  Matrix d = (-2.0 * x.transpose() * x).colwise() + sq;
  d.rowwise() += sq.transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = i == j ? 0.0 : std::sqrt(std::max(d(i, j), 0.0));
  return d;
}

struct EmbeddingMetrics {
  double silhouette = 0.0;
  double intra_inter_ratio = 0.0;
};

/// Silhouette over L2 distances with `labels` as clusters, and mean
/// intra-cluster over mean inter-cluster distance. Columns are points.
inline EmbeddingMetrics embedding_metrics(const Matrix& embeddings, std::span<const std::size_t> labels) {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(embeddings.cols()) != n) throw ShapeError("one label per embedding column expected");
  std::size_t num_labels = 0;
  for (std::size_t l : labels) num_labels = std::max(num_labels, l + 1);
  std::vector<std::size_t> sizes(num_labels, 0);
  for (std::size_t l : labels) ++sizes[l];
  std::size_t clusters = 0;
  for (std::size_t s : sizes) clusters += s > 0 ? 1 : 0;
  if (clusters < 2) throw MetricsError("embedding metrics need at least two classes");

  const Matrix d = pairwise_distances(embeddings);
  double intra_sum = 0.0, inter_sum = 0.0;
  std::size_t intra_n = 0, inter_n = 0;
  double sil = 0.0;
  std::vector<double> per_cluster(num_labels);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(per_cluster.begin(), per_cluster.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dij = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      per_cluster[labels[j]] += dij;
      if (j > i) {
        if (labels[j] == labels[i]) {
          intra_sum += dij;
          ++intra_n;
        } else {
          inter_sum += dij;
          ++inter_n;
        }
      }
    }
    const std::size_t own = labels[i];
    if (sizes[own] < 2) continue;  // singleton clusters score 0
    const double a = per_cluster[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < num_labels; ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, per_cluster[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    sil += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  EmbeddingMetrics m;
  m.silhouette = sil / static_cast<double>(n);
  const double intra = intra_n ? intra_sum / static_cast<double>(intra_n) : 0.0;
  const double inter = inter_sum / static_cast<double>(inter_n);
  m.intra_inter_ratio = inter > 0.0 ? intra / inter : 0.0;
  return m;
}

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 500;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 100;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  double min_gain = 0.01;
};

struct TsneResult {
  Matrix coords;  // n x 2
  double initial_kl = 0.0;
  double final_kl = 0.0;
  std::vector<double> kl_history;
};

namespace detail {

/// Conditional affinities p_{j|i} with a per-point precision found by
/// bisection so that the entropy matches log(perplexity).
inline Matrix conditional_affinities(const Matrix& sq_dist, double perplexity) {
  const Eigen::Index n = sq_dist.rows();
  const double target = std::log(perplexity);
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) min_d = std::min(min_d, sq_dist(i, j));
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double v = std::exp(-beta * (sq_dist(i, j) - min_d));
        p(i, j) = v;
        sum += v;
        weighted += v * (sq_dist(i, j) - min_d);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (Eigen::Index j = 0; j < n; ++j) p(i, j) /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-10) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  return p;
}

inline double kl_divergence(const Matrix& p, const Matrix& y) {
  const Eigen::Index n = y.rows();
  double z = 0.0;
  Matrix num(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      z += num(i, j);
    }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) / std::max(num(i, j) / z, 1e-300));
  return kl;
}

}  // namespace detail

/// Exact t-SNE of the rows of `points` into two dimensions.
inline TsneResult tsne_2d(const Matrix& points, const TsneConfig& cfg, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (n < 4) throw ConfigError("t-SNE needs at least four points");
  if (n > 1000) throw ConfigError("exact t-SNE is limited to 1000 points");
  if (!(cfg.perplexity > 0.0) || !(cfg.perplexity < static_cast<double>(n) / 3.0))
    throw ConfigError("perplexity must be positive and below a third of the point count");
  if (cfg.iterations < 1) throw ConfigError("t-SNE needs at least one iteration");

  Matrix sq(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sq(i, j) = (points.row(i) - points.row(j)).squaredNorm();
  const Matrix cond = detail::conditional_affinities(sq, cfg.perplexity);
  Matrix p = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  for (Eigen::Index i = 0; i < n; ++i) p(i, i) = 0.0;
  p /= p.sum();

  Rng rng(seed);
  Matrix y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) y(i, c) = 1e-4 * rng.normal();
  Matrix velocity = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);

  TsneResult result;
  result.initial_kl = detail::kl_divergence(p, y);
  Matrix num(n, n), grad(n, 2);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    const double momentum = iter < cfg.exaggeration_iters ? cfg.initial_momentum : cfg.final_momentum;
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        z += num(i, j);
      }
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double coeff = (exaggeration * p(i, j) - num(i, j) / z) * num(i, j);
        grad.row(i) += 4.0 * coeff * (y.row(i) - y.row(j));
      }
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
        gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, cfg.min_gain) : gains(i, c) + 0.2;
        velocity(i, c) = momentum * velocity(i, c) - cfg.learning_rate * gains(i, c) * grad(i, c);
      }
    y += velocity;
    y.rowwise() -= y.colwise().mean();
    result.kl_history.push_back(detail::kl_divergence(p, y));
  }
  result.coords = y;
  result.final_kl = result.kl_history.back();
  return result;
}

}  // namespace imrl
