#pragma once

// Behaviour cloning: a Gaussian policy over z ++ the last k proprioception
// vectors, trained by negative log-likelihood, optionally fine-tuning the
// encoder.
//
// The mean is parameterised as p_t + f(standardised input): the network
// predicts the move away from the current pose.

#include <algorithm>
#include <deque>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "imrl/losses.hpp"
#include "imrl/numeric.hpp"
#include "imrl/pipeline/dataset.hpp"
#include "imrl/pipeline/demos.hpp"
#include "imrl/pipeline/encoder.hpp"
#include "imrl/pipeline/train_repr.hpp"
#include "imrl/simworld.hpp"

namespace imrl {

inline constexpr std::size_t kActionDim = 6;

struct PolicyParams {
  MlpParams net;  // standardised (z ++ p_{t-k+1..t}) -> mean - p_t
  std::vector<double> log_std = std::vector<double>(kActionDim, 0.0);
  std::vector<double> input_mean;   // per input feature
  std::vector<double> input_scale;  // 1 / std, per input feature
  std::size_t history = 4;
  RepresentationMask mask;

  std::size_t input_dim() const { return net.input_dim(); }
  bool operator==(const PolicyParams&) const = default;
};

struct BcConfig {
  std::size_t history = 4;  // k
  std::vector<std::size_t> hidden = {256, 256};
  int epochs = 1000;  // ~200 pairs from 30 demos: 4 steps per epoch
  std::size_t batch_size = 64;
  AdamConfig adam;
  double final_lr_fraction = 0.1;
  bool finetune_encoder = false;
  double encoder_lr = 1e-4;
  double min_input_std = 1.0;  // features are only scaled down, never up
  double feature_noise = 1.0;  // training noise on z_vp and z_u, in (floored) standard deviations
  RepresentationMask mask;
  int density_radius = 9;
  double margin = 3.0;
};

inline PolicyParams init_policy(std::size_t representation_dim, const BcConfig& cfg, std::uint64_t seed) {
  if (cfg.history < 1) throw ConfigError("history length k must be at least 1");
  std::vector<std::size_t> dims{representation_dim + kActionDim * cfg.history};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(kActionDim);
  PolicyParams p;
  p.net = init_params(dims, derive_seed(seed, "policy"));
  p.input_mean.assign(dims.front(), 0.0);
  p.input_scale.assign(dims.front(), 1.0);
  p.history = cfg.history;
  p.mask = cfg.mask;
  return p;
}

/// Proprioception history p_{t-k+1..t}, oldest first, padded with the earliest.
template <typename PoseAt>
std::vector<double> proprio_window(std::size_t t, std::size_t k, PoseAt&& pose_at) {
  std::vector<double> out;
  out.reserve(k * kActionDim);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t back = k - 1 - i;
    const Pose& p = pose_at(t >= back ? t - back : 0);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

/// Policy mean for raw (unstandardised) inputs, one column per sample.
inline Matrix policy_mean(const PolicyParams& p, const Matrix& raw, MlpCache* cache = nullptr) {
  const auto d = static_cast<Eigen::Index>(p.input_dim());
  if (raw.rows() != d) throw ShapeError("policy input has the wrong dimension");
  const Eigen::Map<const Vector> mean(p.input_mean.data(), d), scale(p.input_scale.data(), d);
  const Matrix x = (raw.colwise() - mean).array().colwise() * scale.array();
  Matrix out = mlp_forward_batch(p.net, x, cache);
  out += raw.bottomRows(static_cast<Eigen::Index>(kActionDim));  // current pose p_t
  return out;
}

struct BcResult {
  PolicyParams policy;
  Encoder encoder;  // fine-tuned copy, identical to the input when frozen
  std::vector<double> nll_history;  // epoch-mean NLL
  double initial_nll = 0.0;         // mean NLL over all pairs before training
};

namespace detail {

struct BcSample {
  std::size_t demo = 0;
  std::size_t t = 0;
};

/// Per-frame inputs that do not depend on the encoder weights.
struct BcFrames {
  std::vector<std::vector<RgbImage>> env_views;  // [demo][t]
  std::vector<std::vector<GeometryFeature>> geometry;
};

inline BcFrames prepare_frames(const std::vector<Trajectory>& demos, int radius, double margin) {
  BcFrames f;
  for (const auto& d : demos) {
    f.env_views.emplace_back();
    f.geometry.emplace_back();
    for (const auto& st : d.steps) {
      f.env_views.back().push_back(environment_view(st.environment));
      f.geometry.back().push_back(scoop_feature(st.mask, radius, margin));
    }
  }
  return f;
}

/// Encoder forward for a batch of samples. Frames shared between samples
/// are embedded once.
struct BcFeatures {
  Matrix raw;  // policy input before standardisation
  std::vector<std::size_t> env_idx, hand_idx;
  Matrix emb;
  MlpCache trunk_cache, agg_cache, full_cache;
};

inline BcFeatures bc_features(const Encoder& enc, std::size_t k, const RepresentationMask& m,
                              const std::vector<Trajectory>& demos, const BcFrames& frames,
                              std::span<const BcSample> samples, bool keep_caches) {
  const std::size_t n = enc.temporal_frames();
  const auto e = static_cast<Eigen::Index>(enc.embed_dim());
  const std::size_t b = samples.size();
  BcFeatures f;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> env_col, hand_col;
  std::vector<const RgbImage*> images;
  auto column = [&](auto& table, std::size_t d, std::size_t t, const RgbImage* img) {
    auto [it, inserted] = table.try_emplace({d, t}, images.size());
    if (inserted) images.push_back(img);
    return it->second;
  };
  f.env_idx.resize(b);
  f.hand_idx.resize(b * n);
  for (std::size_t i = 0; i < b; ++i) {
    const auto [d, t] = samples[i];
    f.env_idx[i] = column(env_col, d, t, &frames.env_views[d][t]);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t back = n - 1 - j;
      const std::size_t tt = t >= back ? t - back : 0;
      f.hand_idx[i * n + j] = column(hand_col, d, tt, &demos[d].steps[tt].hand);
    }
  }

  f.emb = mlp_forward_batch(enc.trunk, encoder_inputs(std::span<const RgbImage* const>(images), enc.input_dim()),
                            keep_caches ? &f.trunk_cache : nullptr);
  Matrix env_emb(e, static_cast<Eigen::Index>(b));
  Matrix seq(e * static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(b));
  for (std::size_t i = 0; i < b; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    env_emb.col(c) = f.emb.col(static_cast<Eigen::Index>(f.env_idx[i]));
    for (std::size_t j = 0; j < n; ++j)
      seq.block(static_cast<Eigen::Index>(j) * e, c, e, 1) = f.emb.col(static_cast<Eigen::Index>(f.hand_idx[i * n + j]));
  }
  const Matrix zu = mlp_forward_batch(enc.temporal, seq, keep_caches ? &f.agg_cache : nullptr);
  const Matrix fullness = mlp_forward_batch(enc.fullness_head, env_emb, keep_caches ? &f.full_cache : nullptr);

  const Eigen::Index zdim = 2 * e + 3;
  f.raw = Matrix::Zero(zdim + static_cast<Eigen::Index>(kActionDim * k), static_cast<Eigen::Index>(b));
  for (std::size_t i = 0; i < b; ++i) {
    const auto [d, t] = samples[i];
    auto col = f.raw.col(static_cast<Eigen::Index>(i));
    if (m.visual_physical) col.head(e) = env_emb.col(static_cast<Eigen::Index>(i));
    if (m.temporal) col.segment(e, e) = zu.col(static_cast<Eigen::Index>(i));
    if (m.geometric) {
      const GeometryFeature& g = frames.geometry[d][t];
      col(2 * e) = g.x;
      col(2 * e + 1) = g.y;
      col(2 * e + 2) = fullness(0, static_cast<Eigen::Index>(i));
    }
    const auto p = proprio_window(t, k, [&](std::size_t s) -> const Pose& { return demos[d].steps[s].proprio; });
    for (std::size_t r = 0; r < p.size(); ++r) col(zdim + static_cast<Eigen::Index>(r)) = p[r];
  }
  return f;
}

/// Back-propagates d(raw input) into encoder gradients.
inline void bc_encoder_backward(const Encoder& enc, const RepresentationMask& m, const BcFeatures& f,
                                const Matrix& d_raw, Encoder& grads) {
  const std::size_t n = enc.temporal_frames();
  const auto e = static_cast<Eigen::Index>(enc.embed_dim());
  const Eigen::Index b = d_raw.cols();
  Matrix d_env = m.visual_physical ? Matrix(d_raw.topRows(e)) : Matrix::Zero(e, b);
  const Matrix d_zu = m.temporal ? Matrix(d_raw.middleRows(e, e)) : Matrix::Zero(e, b);
  const Matrix d_full = m.geometric ? Matrix(d_raw.middleRows(2 * e + 2, 1)) : Matrix::Zero(1, b);
  Matrix dx;
  grads.fullness_head = mlp_backward_batch(enc.fullness_head, f.full_cache, d_full, &dx);
  d_env += dx;
  Matrix d_seq;
  grads.temporal = mlp_backward_batch(enc.temporal, f.agg_cache, d_zu, &d_seq);
  Matrix d_emb = Matrix::Zero(f.emb.rows(), f.emb.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    d_emb.col(static_cast<Eigen::Index>(f.env_idx[static_cast<std::size_t>(i)])) += d_env.col(i);
    for (std::size_t j = 0; j < n; ++j)
      d_emb.col(static_cast<Eigen::Index>(f.hand_idx[static_cast<std::size_t>(i) * n + j])) +=
          d_seq.block(static_cast<Eigen::Index>(j) * e, i, e, 1);
  }
  grads.trunk = mlp_backward_batch(enc.trunk, f.trunk_cache, d_emb);
}

/// Summed NLL of the expert actions for the columns of `raw`, with the
/// policy gradients (batch-mean) and, if requested, d(raw input).
inline double bc_loss(const PolicyParams& policy, const Matrix& raw, std::span<const Pose> actions,
                      PolicyParams* grads, Matrix* d_raw) {
  const Eigen::Index b = raw.cols();
  MlpCache cache;
  const Matrix mean = policy_mean(policy, raw, grads ? &cache : nullptr);
  double nll = 0.0;
  Matrix d_mean(mean.rows(), b);
  std::vector<double> d_log_std(kActionDim, 0.0);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto col = mean.col(i);
    const GaussianActionHead head{std::vector<double>(col.data(), col.data() + col.size()), policy.log_std};
    const auto r = bc_nll(head, actions[static_cast<std::size_t>(i)]);
    nll += r.loss;
    for (std::size_t a = 0; a < kActionDim; ++a) {
      d_mean(static_cast<Eigen::Index>(a), i) = r.grad_mean[a] / static_cast<double>(b);
      d_log_std[a] += r.grad_log_std[a] / static_cast<double>(b);
    }
  }
  if (!grads) return nll;
  Matrix dx;
  grads->net = mlp_backward_batch(policy.net, cache, d_mean, d_raw ? &dx : nullptr);
  grads->log_std = d_log_std;
  if (d_raw) {
    const Eigen::Map<const Vector> scale(policy.input_scale.data(), raw.rows());
    *d_raw = dx.array().colwise() * scale.array();
    d_raw->bottomRows(static_cast<Eigen::Index>(kActionDim)) += d_mean;
  }
  return nll;
}

}  // namespace detail

/// Minimises the behaviour-cloning NLL over every (observation window, expert
/// action) pair of the demonstrations. Input statistics come from the
/// initial encoder. With `finetune_encoder` the trunk, temporal aggregator
/// and fullness head are updated at `encoder_lr`; otherwise the features are
/// computed once.
inline BcResult train_bc(const std::vector<Trajectory>& demos, Encoder encoder, const BcConfig& cfg,
                         std::uint64_t seed) {
  if (demos.empty()) throw ConfigError("train_bc: no demonstrations");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("train_bc needs positive epochs and batch size");
  std::vector<detail::BcSample> samples;
  std::vector<Pose> actions;
  for (std::size_t d = 0; d < demos.size(); ++d)
    for (std::size_t t = 0; t < demos[d].steps.size(); ++t)
      if (demos[d].steps[t].action) {
        samples.push_back({d, t});
        actions.push_back(*demos[d].steps[t].action);
      }
  if (samples.empty()) throw ConfigError("train_bc: demonstrations contain no actions");

  BcResult result;
  PolicyParams& policy = result.policy;
  policy = init_policy(encoder.representation_dim(), cfg, seed);
  const detail::BcFrames frames = detail::prepare_frames(demos, cfg.density_radius, cfg.margin);

  // Features of all pairs under the initial encoder, in chunks.
  Matrix all(static_cast<Eigen::Index>(policy.input_dim()), static_cast<Eigen::Index>(samples.size()));
  constexpr std::size_t kChunk = 256;
  for (std::size_t s = 0; s < samples.size(); s += kChunk) {
    const std::size_t e = std::min(s + kChunk, samples.size());
    all.middleCols(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) =
        detail::bc_features(encoder, cfg.history, cfg.mask, demos, frames,
                            std::span<const detail::BcSample>(samples).subspan(s, e - s), false)
            .raw;
  }
  const Vector mu = all.rowwise().mean();
  const Vector var = (all.colwise() - mu).array().square().rowwise().mean();
  for (Eigen::Index r = 0; r < all.rows(); ++r) {
    policy.input_mean[static_cast<std::size_t>(r)] = mu(r);
    policy.input_scale[static_cast<std::size_t>(r)] = 1.0 / std::max({std::sqrt(var(r)), cfg.min_input_std, 1e-6});
  }
  result.initial_nll = detail::bc_loss(policy, all, actions, nullptr, nullptr) / static_cast<double>(samples.size());

  AdamState policy_adam(cfg.adam);
  AdamConfig enc_cfg = cfg.adam;
  enc_cfg.lr = cfg.encoder_lr;
  AdamState encoder_adam(enc_cfg);
  Rng rng(derive_seed(seed, "train_bc"));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t steps_per_epoch = (samples.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_nll = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(s + cfg.batch_size, order.size());
      const double progress = static_cast<double>(policy_adam.step) / std::max(total_steps - 1.0, 1.0);
      policy_adam.config.lr = cosine_lr(cfg.adam.lr, cfg.final_lr_fraction, progress);
      encoder_adam.config.lr = cosine_lr(cfg.encoder_lr, cfg.final_lr_fraction, progress);

      std::vector<detail::BcSample> batch;
      std::vector<Pose> batch_actions;
      Matrix raw(all.rows(), static_cast<Eigen::Index>(e - s));
      for (std::size_t i = s; i < e; ++i) {
        batch.push_back(samples[order[i]]);
        batch_actions.push_back(actions[order[i]]);
        raw.col(static_cast<Eigen::Index>(i - s)) = all.col(static_cast<Eigen::Index>(order[i]));
      }
      detail::BcFeatures feats;
      if (cfg.finetune_encoder) {
        feats = detail::bc_features(encoder, cfg.history, cfg.mask, demos, frames, batch, true);
        raw = feats.raw;
      }
      if (cfg.feature_noise > 0.0) {
        const auto learned = static_cast<Eigen::Index>(2 * encoder.embed_dim());
        for (Eigen::Index c = 0; c < raw.cols(); ++c)
          for (Eigen::Index r = 0; r < learned; ++r)
            raw(r, c) += cfg.feature_noise * rng.normal() / policy.input_scale[static_cast<std::size_t>(r)];
      }
      PolicyParams pg;
      Matrix d_raw;
      epoch_nll += detail::bc_loss(policy, raw, batch_actions, &pg, cfg.finetune_encoder ? &d_raw : nullptr);
      auto pb = policy.net.blocks();
      pb.emplace_back(policy.log_std);
      auto gb = std::as_const(pg.net).blocks();
      gb.emplace_back(pg.log_std);
      adam_update(pb, gb, policy_adam);
      if (cfg.finetune_encoder) {
        Encoder eg = detail::zero_grads(encoder);
        detail::bc_encoder_backward(encoder, cfg.mask, feats, d_raw, eg);
        auto eb = detail::encoder_blocks(encoder);
        const auto egb = detail::encoder_blocks(std::as_const(eg));
        adam_update(eb, egb, encoder_adam);
      }
    }
    result.nll_history.push_back(epoch_nll / static_cast<double>(samples.size()));
  }
  result.encoder = std::move(encoder);
  return result;
}

/// Closed-loop controller: renders the state, encodes the observation window
/// with ground-truth masks and returns the policy mean.
class PolicyController {
 public:
  PolicyController(const Encoder& encoder, const PolicyParams& policy, int density_radius = 9, double margin = 3.0)
      : encoder_(&encoder), policy_(&policy), radius_(density_radius), margin_(margin) {}

  void reset() {
    hands_.clear();
    poses_.clear();
  }

  Pose operator()(const SimState& s) {
    const Observation obs = render(s);
    const std::size_t n = encoder_->temporal_frames();
    const std::size_t k = policy_->history;
    hands_.push_back(obs.hand);
    poses_.push_back(obs.proprio);
    while (hands_.size() > n) hands_.pop_front();
    while (poses_.size() > k) poses_.pop_front();
    const RgbImage view = environment_view(obs.environment);
    const auto window = hand_window(hands_.size() - 1, n, [&](std::size_t i) -> const RgbImage& { return hands_[i]; });
    const IntegratedRepresentation r = encode(*encoder_, view, window, food_mask(s), radius_, margin_);
    if (r.used_fallback) ++fallbacks_;
    std::vector<double> x = r.concat(policy_->mask);
    const auto p = proprio_window(poses_.size() - 1, k, [&](std::size_t i) -> const Pose& { return poses_[i]; });
    x.insert(x.end(), p.begin(), p.end());
    const Matrix mean = policy_mean(*policy_, Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())));
    Pose action;
    for (std::size_t a = 0; a < kActionDim; ++a) action[a] = std::clamp(mean(static_cast<Eigen::Index>(a), 0), -1.0, 1.0);
    return action;
  }

  /// Steps at which the scoop point fell back to the centroid or centre.
  std::size_t fallbacks() const { return fallbacks_; }

 private:
  const Encoder* encoder_;
  const PolicyParams* policy_;
  int radius_;
  double margin_;
  std::deque<RgbImage> hands_;
  std::deque<Pose> poses_;
  std::size_t fallbacks_ = 0;
};

// Policy checkpoint: the network, then single-layer records whose biases
// carry the log-std, input mean, input scale and (history, mask flags), then
// the optional hash trailer.

namespace detail {

inline MlpParams vector_record(const std::vector<double>& v) {
  MlpParams p = init_params({1, v.size()}, 0);
  std::fill(p.weights[0].data.begin(), p.weights[0].data.end(), 0.0);
  p.biases[0].data.assign(v.begin(), v.end());
  return p;
}

}  // namespace detail

inline void write_policy(const std::filesystem::path& path, const PolicyParams& p, const std::string& config_hash = {}) {
  auto out = open_for_write(path, std::ios::binary);
  write_params(out, p.net);
  write_params(out, detail::vector_record(p.log_std));
  write_params(out, detail::vector_record(p.input_mean));
  write_params(out, detail::vector_record(p.input_scale));
  write_params(out, detail::vector_record({static_cast<double>(p.history), p.mask.visual_physical ? 1.0 : 0.0,
                                           p.mask.temporal ? 1.0 : 0.0, p.mask.geometric ? 1.0 : 0.0}));
  if (!config_hash.empty()) write_hash_trailer(out, config_hash);
}

inline PolicyParams read_policy(const std::filesystem::path& path) {
  auto in = open_for_read(path, std::ios::binary);
  PolicyParams p;
  p.net = read_params(in);
  auto record = [&in] {
    const auto d = read_params(in).biases[0].data;
    return std::vector<double>(d.begin(), d.end());
  };
  p.log_std = record();
  p.input_mean = record();
  p.input_scale = record();
  const auto meta = record();
  if (p.net.output_dim() != kActionDim || p.log_std.size() != kActionDim || meta.size() != 4 ||
      p.input_mean.size() != p.input_dim() || p.input_scale.size() != p.input_dim())
    throw IoError("policy checkpoint has inconsistent shapes");
  p.history = static_cast<std::size_t>(meta[0]);
  p.mask = {meta[1] != 0.0, meta[2] != 0.0, meta[3] != 0.0};
  if (p.history < 1 || p.input_dim() <= kActionDim * p.history)
    throw IoError("policy checkpoint has an invalid history length");
  return p;
}

}  // namespace imrl
