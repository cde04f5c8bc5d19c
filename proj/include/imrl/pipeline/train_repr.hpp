#pragma once

// Representation pretraining: type classification, property triplets,
// frame-order prediction and fullness regression on a shared trunk.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "imrl/losses.hpp"
#include "imrl/numeric.hpp"
#include "imrl/pipeline/dataset.hpp"
#include "imrl/pipeline/demos.hpp"
#include "imrl/pipeline/encoder.hpp"

namespace imrl {

struct TrainReprConfig {
  LossWeights weights;
  double margin_alpha = 0.2;
  int epochs = 20;
  std::size_t batch_size = 64;
  std::size_t temporal_batch = 16;  // sequences per step
  AdamConfig adam;
  double final_lr_fraction = 0.1;  // cosine decay from adam.lr to this fraction of it
};

/// Cosine schedule from `base` at progress 0 to `base * final_fraction` at 1.
inline double cosine_lr(double base, double final_fraction, double progress) {
  return base * (final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

struct ReprEpochStats {
  int epoch = 0;
  double ce = 0.0;
  double tri = 0.0;
  double temp = 0.0;
  double full = 0.0;
  double total = 0.0;
  double frozen_total = 0.0;  // L_z on a fixed batch after this epoch
};

struct TrainReprResult {
  Encoder encoder;
  std::vector<ReprEpochStats> history;
  double frozen_initial = 0.0;  // L_z on the fixed batch before training
};

/// N shuffled hand frames from one demonstration.
struct TemporalSequence {
  std::size_t demo = 0;
  std::vector<std::size_t> timesteps;  // in shuffled order
  std::vector<std::size_t> true_positions;
};

/// Draws N distinct sorted timesteps from a random demonstration with at
/// least N frames, then shuffles them.
inline TemporalSequence sample_temporal_sequence(const std::vector<Trajectory>& demos, std::size_t n, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t d = 0; d < demos.size(); ++d)
    if (demos[d].steps.size() >= n) eligible.push_back(d);
  if (eligible.empty()) throw ConfigError("no demonstration has enough frames for the temporal task");
  TemporalSequence seq;
  seq.demo = eligible[rng.index(eligible.size())];
  std::vector<std::size_t> all(demos[seq.demo].steps.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.index(all.size() - i)]);
  std::vector<std::size_t> sorted(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(sorted.begin(), sorted.end());
  const ShuffledFrames sh = shuffle_frames(n, rng.next());
  seq.timesteps = apply_shuffle(sorted, sh);
  seq.true_positions = sh.true_positions;
  return seq;
}

namespace detail {

struct ReprBatch {
  std::vector<std::size_t> items;  // dataset indices
  std::vector<TemporalSequence> sequences;
  std::vector<std::pair<std::size_t, std::size_t>> positives;  // (anchor slot, positive slot)
  std::vector<std::size_t> negatives;                          // parallel to positives
};

/// In-batch triplets: for every anchor, a uniformly drawn same-property
/// different-type positive and a uniformly drawn different-property negative.
inline void mine_triplets(const FoodImageDataset& ds, ReprBatch& batch, Rng& rng) {
  const auto& items = batch.items;
  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < items.size(); ++a) {
    const FoodImage& anchor = ds.items[items[a]];
    pos.clear();
    neg.clear();
    for (std::size_t j = 0; j < items.size(); ++j) {
      const FoodImage& other = ds.items[items[j]];
      if (other.property_label == anchor.property_label) {
        if (other.type_label != anchor.type_label) pos.push_back(j);
      } else {
        neg.push_back(j);
      }
    }
    if (pos.empty() || neg.empty()) continue;
    batch.positives.emplace_back(a, pos[rng.index(pos.size())]);
    batch.negatives.push_back(neg[rng.index(neg.size())]);
  }
}

struct ReprLosses {
  double ce = 0.0, tri = 0.0, temp = 0.0, full = 0.0;
};

/// Forward and backward over one batch. Gradients are accumulated into
/// `grads` (same layout as the encoder) when it is non-null.
inline ReprLosses repr_batch(const Encoder& enc, const FoodImageDataset& ds, const std::vector<Trajectory>& demos,
                             const ReprBatch& batch, const TrainReprConfig& cfg, Encoder* grads) {
  const LossWeights& w = cfg.weights;
  const std::size_t e = enc.embed_dim();
  const std::size_t n = enc.temporal_frames();
  const std::size_t b = batch.items.size();
  std::vector<const RgbImage*> images;
  for (std::size_t i : batch.items) images.push_back(&ds.items[i].image);
  for (const auto& seq : batch.sequences)
    for (std::size_t t : seq.timesteps) images.push_back(&demos[seq.demo].steps[t].hand);

  MlpCache trunk_cache;
  const Matrix x = encoder_inputs(std::span<const RgbImage* const>(images), enc.input_dim());
  const Matrix emb = mlp_forward_batch(enc.trunk, x, &trunk_cache);
  Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
  ReprLosses out;

  if (b > 0) {
    const Matrix img_emb = emb.leftCols(static_cast<Eigen::Index>(b));
    const double inv_b = 1.0 / static_cast<double>(b);

    MlpCache type_cache;
    const Matrix logits = mlp_forward_batch(enc.type_head, img_emb, &type_cache);
    Matrix d_logits(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < b; ++i) {
      const auto col = logits.col(static_cast<Eigen::Index>(i));
      const auto ce = softmax_cross_entropy(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                            ds.items[batch.items[i]].type_label);
      out.ce += ce.loss * inv_b;
      for (std::size_t c = 0; c < ce.grad.size(); ++c) d_logits(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = ce.grad[c] * w.ce * inv_b;
    }

    MlpCache full_cache;
    const Matrix fullness = mlp_forward_batch(enc.fullness_head, img_emb, &full_cache);
    Matrix d_full(1, static_cast<Eigen::Index>(b));
    for (std::size_t i = 0; i < b; ++i) {
      const auto l = fullness_mse(fullness(0, static_cast<Eigen::Index>(i)), ds.items[batch.items[i]].fullness);
      out.full += l.loss * inv_b;
      d_full(0, static_cast<Eigen::Index>(i)) = l.grad * w.full * inv_b;
    }

    if (!batch.positives.empty()) {
      const double inv_t = 1.0 / static_cast<double>(batch.positives.size());
      for (std::size_t k = 0; k < batch.positives.size(); ++k) {
        const auto [a, p] = batch.positives[k];
        const std::size_t ng = batch.negatives[k];
        auto col = [&](std::size_t j) {
          const auto c = img_emb.col(static_cast<Eigen::Index>(j));
          return std::vector<double>(c.data(), c.data() + c.size());
        };
        const auto r = triplet_loss({col(a), col(p), col(ng), cfg.margin_alpha});
        out.tri += r.loss * inv_t;
        if (r.loss == 0.0) continue;
        for (std::size_t d = 0; d < e; ++d) {
          const auto row = static_cast<Eigen::Index>(d);
          d_emb(row, static_cast<Eigen::Index>(a)) += r.grad_anchor[d] * w.tri * inv_t;
          d_emb(row, static_cast<Eigen::Index>(p)) += r.grad_positive[d] * w.tri * inv_t;
          d_emb(row, static_cast<Eigen::Index>(ng)) += r.grad_negative[d] * w.tri * inv_t;
        }
      }
    }

    if (grads) {
      Matrix dx;
      const MlpParams gt = mlp_backward_batch(enc.type_head, type_cache, d_logits, &dx);
      d_emb.leftCols(static_cast<Eigen::Index>(b)) += dx;
      grads->fullness_head = mlp_backward_batch(enc.fullness_head, full_cache, d_full, &dx);
      d_emb.leftCols(static_cast<Eigen::Index>(b)) += dx;
      grads->type_head = gt;
    }
  }

  if (!batch.sequences.empty()) {
    const std::size_t s = batch.sequences.size();
    const double inv_s = 1.0 / static_cast<double>(s);
    const Matrix frames = emb.rightCols(static_cast<Eigen::Index>(s * n));
    MlpCache agg_cache, order_cache;
    const Matrix zu = mlp_forward_batch(enc.temporal, stack_sequences(frames, n), &agg_cache);
    const Matrix logits = mlp_forward_batch(enc.order_head, zu, &order_cache);
    Matrix d_logits(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < s; ++i) {
      const auto col = logits.col(static_cast<Eigen::Index>(i));
      const auto l = temporal_order_loss(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                         batch.sequences[i].true_positions);
      out.temp += l.loss * inv_s;
      for (std::size_t c = 0; c < l.grad.size(); ++c)
        d_logits(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = l.grad[c] * w.temp * inv_s;
    }
    if (grads) {
      Matrix dzu, dstack;
      grads->order_head = mlp_backward_batch(enc.order_head, order_cache, d_logits, &dzu);
      grads->temporal = mlp_backward_batch(enc.temporal, agg_cache, dzu, &dstack);
      d_emb.rightCols(static_cast<Eigen::Index>(s * n)) += unstack_sequences(dstack, e);
    }
  }

  if (grads) grads->trunk = mlp_backward_batch(enc.trunk, trunk_cache, d_emb);
  return out;
}

inline double weighted(const ReprLosses& l, const LossWeights& w) {
  return combined_repr_loss(l.ce, l.tri, l.temp, l.full, w);
}

inline std::vector<std::span<double>> encoder_blocks(Encoder& enc) {
  std::vector<std::span<double>> out;
  for (MlpParams* p : {&enc.trunk, &enc.type_head, &enc.fullness_head, &enc.temporal, &enc.order_head})
    for (auto b : p->blocks()) out.push_back(b);
  return out;
}

inline std::vector<std::span<const double>> encoder_blocks(const Encoder& enc) {
  std::vector<std::span<const double>> out;
  for (const MlpParams* p : {&enc.trunk, &enc.type_head, &enc.fullness_head, &enc.temporal, &enc.order_head})
    for (auto b : p->blocks()) out.push_back(b);
  return out;
}

inline Encoder zero_grads(const Encoder& enc) {
  return {zeros_like(enc.trunk), zeros_like(enc.type_head), zeros_like(enc.fullness_head), zeros_like(enc.temporal),
          zeros_like(enc.order_head)};
}

}  // namespace detail

/// Minimises the weighted sum of the four representation losses with Adam.
/// Each step uses one image minibatch and, when the temporal weight is
/// positive, a batch of shuffled demo sequences.
inline TrainReprResult train_repr(const FoodImageDataset& ds, const std::vector<Trajectory>& demos, Encoder encoder,
                                  const TrainReprConfig& cfg, std::uint64_t seed) {
  cfg.weights.validate();
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("train_repr needs positive epochs and batch size");
  const std::vector<std::size_t> train = ds.indices(Split::train);
  if (train.empty()) throw ConfigError("train_repr: dataset has no training images");
  const bool use_temporal = cfg.weights.temp > 0.0;
  if (use_temporal && demos.empty()) throw ConfigError("train_repr: temporal loss needs demonstration videos");
  const std::size_t n = encoder.temporal_frames();
  const bool use_images = cfg.weights.ce > 0.0 || cfg.weights.tri > 0.0 || cfg.weights.full > 0.0;

  TrainReprResult result;
  Rng rng(derive_seed(seed, "train_repr"));

  detail::ReprBatch frozen;
  {
    Rng frozen_rng(derive_seed(seed, "train_repr/frozen"));
    std::vector<std::size_t> order = train;
    frozen_rng.shuffle(order);
    frozen.items.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.batch_size, order.size())));
    detail::mine_triplets(ds, frozen, frozen_rng);
    if (use_temporal)
      for (std::size_t i = 0; i < cfg.temporal_batch; ++i)
        frozen.sequences.push_back(sample_temporal_sequence(demos, n, frozen_rng));
  }
  result.frozen_initial = detail::weighted(detail::repr_batch(encoder, ds, demos, frozen, cfg, nullptr), cfg.weights);

  AdamState adam(cfg.adam);
  std::vector<std::size_t> order = train;
  const std::size_t steps_per_epoch = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    ReprEpochStats stats;
    stats.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      detail::ReprBatch batch;
      if (use_images) {
        const std::size_t end = std::min(start + cfg.batch_size, order.size());
        batch.items.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
        if (cfg.weights.tri > 0.0) detail::mine_triplets(ds, batch, rng);
      }
      if (use_temporal)
        for (std::size_t i = 0; i < cfg.temporal_batch; ++i)
          batch.sequences.push_back(sample_temporal_sequence(demos, n, rng));
      adam.config.lr = cosine_lr(cfg.adam.lr, cfg.final_lr_fraction,
                                 static_cast<double>(adam.step) / std::max(total_steps - 1.0, 1.0));
      Encoder grads = detail::zero_grads(encoder);
      const auto losses = detail::repr_batch(encoder, ds, demos, batch, cfg, &grads);
      auto pb = detail::encoder_blocks(encoder);
      const auto gb = detail::encoder_blocks(std::as_const(grads));
      adam_update(pb, gb, adam);
      stats.ce += losses.ce;
      stats.tri += losses.tri;
      stats.temp += losses.temp;
      stats.full += losses.full;
      ++steps;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    stats.ce *= inv;
    stats.tri *= inv;
    stats.temp *= inv;
    stats.full *= inv;
    stats.total = combined_repr_loss(stats.ce, stats.tri, stats.temp, stats.full, cfg.weights);
    stats.frozen_total = detail::weighted(detail::repr_batch(encoder, ds, demos, frozen, cfg, nullptr), cfg.weights);
    result.history.push_back(stats);
  }
  result.encoder = std::move(encoder);
  return result;
}

inline void write_loss_history_csv(const std::filesystem::path& path, const TrainReprResult& r,
                                   const std::string& config_hash) {
  auto out = open_for_write(path);
  out << "# config_hash=" << config_hash << '\n';
  out << "epoch,ce,tri,temp,full,total,frozen_total\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "-1,,,,,,%.10g\n", r.frozen_initial);
  out << buf;
  for (const auto& s : r.history) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", s.epoch, s.ce, s.tri, s.temp, s.full,
                  s.total, s.frozen_total);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Held-out checks.

inline Matrix embed_split(const Encoder& enc, const FoodImageDataset& ds, Split split) {
  std::vector<const RgbImage*> images;
  for (std::size_t i : ds.indices(split)) images.push_back(&ds.items[i].image);
  if (images.empty()) return Matrix(static_cast<Eigen::Index>(enc.embed_dim()), 0);
  return embed_images(enc, images);
}

inline double type_accuracy(const Encoder& enc, const FoodImageDataset& ds, Split split) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw MetricsError("split is empty");
  const Matrix logits = mlp_forward_batch(enc.type_head, embed_split(enc, ds, split));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Eigen::Index best;
    logits.col(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    if (static_cast<std::size_t>(best) == ds.items[idx[i]].type_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

inline double fullness_mae(const Encoder& enc, const FoodImageDataset& ds, Split split) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw MetricsError("split is empty");
  const Matrix pred = mlp_forward_batch(enc.fullness_head, embed_split(enc, ds, split));
  double sum = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) sum += std::abs(pred(0, static_cast<Eigen::Index>(i)) - ds.items[idx[i]].fullness);
  return sum / static_cast<double>(idx.size());
}

/// Fraction of frames whose predicted position (row argmax) is correct.
inline double temporal_accuracy(const Encoder& enc, const std::vector<Trajectory>& demos, std::size_t sequences,
                                std::uint64_t seed) {
  if (sequences == 0) throw MetricsError("temporal_accuracy needs at least one sequence");
  const std::size_t n = enc.temporal_frames();
  Rng rng(seed);
  std::vector<TemporalSequence> seqs;
  std::vector<const RgbImage*> images;
  for (std::size_t i = 0; i < sequences; ++i) {
    seqs.push_back(sample_temporal_sequence(demos, n, rng));
    for (std::size_t t : seqs.back().timesteps) images.push_back(&demos[seqs.back().demo].steps[t].hand);
  }
  const Matrix emb = embed_images(enc, images);
  const Matrix logits = mlp_forward_batch(enc.order_head, mlp_forward_batch(enc.temporal, stack_sequences(emb, n)));
  std::size_t correct = 0;
  for (std::size_t s = 0; s < sequences; ++s)
    for (std::size_t row = 0; row < n; ++row) {
      Eigen::Index best;
      logits.col(static_cast<Eigen::Index>(s)).segment(static_cast<Eigen::Index>(row * n), static_cast<Eigen::Index>(n)).maxCoeff(&best);
      if (static_cast<std::size_t>(best) == seqs[s].true_positions[row]) ++correct;
    }
  return static_cast<double>(correct) / static_cast<double>(sequences * n);
}

}  // namespace imrl
