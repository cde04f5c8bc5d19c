#pragma once

// Image encoder with its pretraining heads, and the integrated representation
// z = z_vp ++ z_u ++ (x*, y*) ++ fullness.

#include <filesystem>
#include <span>
#include <vector>

#include "imrl/geometry.hpp"
#include "imrl/image.hpp"
#include "imrl/io.hpp"
#include "imrl/numeric.hpp"
#include "imrl/rng.hpp"

namespace imrl {

struct EncoderConfig {
  std::vector<std::size_t> trunk_dims = {3072, 256, 64, 32};
  std::size_t num_types = 12;
  std::size_t temporal_frames = 4;
  std::size_t temporal_hidden = 64;
};

/// Shared image trunk plus the heads trained on top of it. The trunk embeds
/// both environment and hand views. The temporal aggregator maps N
/// concatenated frame embeddings to z_u; the order head is only used in
/// pretraining.
struct Encoder {
  MlpParams trunk;
  MlpParams type_head;
  MlpParams fullness_head;
  MlpParams temporal;
  MlpParams order_head;

  std::size_t embed_dim() const { return trunk.output_dim(); }
  std::size_t input_dim() const { return trunk.input_dim(); }
  std::size_t temporal_frames() const { return temporal.input_dim() / embed_dim(); }
  std::size_t representation_dim() const { return 2 * embed_dim() + 3; }

  bool operator==(const Encoder&) const = default;
};

inline Encoder init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.trunk_dims.size() < 2) throw InvalidArchitecture("trunk needs at least two layer sizes");
  if (cfg.num_types < 2) throw ConfigError("type head needs at least two classes");
  if (cfg.temporal_frames < 2) throw ConfigError("temporal window needs at least two frames");
  const std::size_t e = cfg.trunk_dims.back();
  const std::size_t n = cfg.temporal_frames;
  Encoder enc;
  enc.trunk = init_params(cfg.trunk_dims, derive_seed(seed, "encoder/trunk"));
  enc.type_head = init_params({e, cfg.num_types}, derive_seed(seed, "encoder/type"));
  enc.fullness_head = init_params({e, 1}, derive_seed(seed, "encoder/fullness"));
  enc.temporal = init_params({e * n, cfg.temporal_hidden, e}, derive_seed(seed, "encoder/temporal"));
  enc.order_head = init_params({e, n * n}, derive_seed(seed, "encoder/order"));
  return enc;
}

/// Trunk input: channel-major pixels shifted to [-0.5, 0.5].
inline void write_encoder_input(const RgbImage& image, double* out) {
  const std::size_t plane = static_cast<std::size_t>(image.width * image.height);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + p] = image.data[p * 3 + c] / 255.0 - 0.5;
}

inline Matrix encoder_inputs(std::span<const RgbImage* const> images, std::size_t input_dim) {
  Matrix x(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->data.size() != input_dim) throw ShapeError("image size does not match the encoder input");
    write_encoder_input(*images[i], x.col(static_cast<Eigen::Index>(i)).data());
  }
  return x;
}

inline Matrix encoder_inputs(std::span<const RgbImage> images, std::size_t input_dim) {
  std::vector<const RgbImage*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  return encoder_inputs(std::span<const RgbImage* const>(ptrs), input_dim);
}

/// Reinterprets an (e x B*N) matrix of frame embeddings, sequence-major, as
/// (e*N x B) aggregator input. Column-major storage makes this a relabelling.
inline Matrix stack_sequences(const Matrix& frames, std::size_t n) {
  if (frames.cols() % static_cast<Eigen::Index>(n) != 0) throw ShapeError("frame count is not a multiple of N");
  return Eigen::Map<const Matrix>(frames.data(), frames.rows() * static_cast<Eigen::Index>(n),
                                  frames.cols() / static_cast<Eigen::Index>(n));
}

inline Matrix unstack_sequences(const Matrix& stacked, std::size_t embed_dim) {
  return Eigen::Map<const Matrix>(stacked.data(), static_cast<Eigen::Index>(embed_dim),
                                  stacked.size() / static_cast<Eigen::Index>(embed_dim));
}

/// Which parts of z are fed to the policy; disabled parts are zeroed.
struct RepresentationMask {
  bool visual_physical = true;
  bool temporal = true;
  bool geometric = true;

  bool operator==(const RepresentationMask&) const = default;
};

struct IntegratedRepresentation {
  std::vector<double> z_vp;
  std::vector<double> z_u;
  double scoop_x = 0.5;  // normalised to [0, 1]
  double scoop_y = 0.5;
  double fullness = 0.0;
  bool used_fallback = false;

  std::vector<double> concat(const RepresentationMask& mask = {}) const {
    std::vector<double> z;
    z.reserve(z_vp.size() + z_u.size() + 3);
    for (double v : z_vp) z.push_back(mask.visual_physical ? v : 0.0);
    for (double v : z_u) z.push_back(mask.temporal ? v : 0.0);
    z.push_back(mask.geometric ? scoop_x : 0.0);
    z.push_back(mask.geometric ? scoop_y : 0.0);
    z.push_back(mask.geometric ? fullness : 0.0);
    return z;
  }
};

struct GeometryFeature {
  double x = 0.5;
  double y = 0.5;
  bool used_fallback = false;
};

/// Normalised scoop point of the mask. Falls back to the centroid when no
/// pixel clears the margin, and to the image centre for an empty mask.
inline GeometryFeature scoop_feature(const BinaryMask& mask, int radius, double margin) {
  const double sx = std::max(mask.width - 1, 1), sy = std::max(mask.height - 1, 1);
  try {
    const ScoopPoint p = optimal_scoop_point(mask, radius, margin);
    return {p.x / sx, p.y / sy, false};
  } catch (const NoFeasiblePoint&) {
    if (mask.empty()) return {0.5, 0.5, true};
    const Centroid c = centroid(mask);
    return {c.x / sx, c.y / sy, true};
  }
}

/// Hand frames t-k+1..t, oldest first; the earliest frame is repeated when
/// fewer than k are available.
template <typename FrameAt>
std::vector<const RgbImage*> hand_window(std::size_t t, std::size_t k, FrameAt&& frame_at) {
  std::vector<const RgbImage*> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t back = k - 1 - i;
    out.push_back(&frame_at(t >= back ? t - back : 0));
  }
  return out;
}

/// `environment` is the encoder-sized environment view, `hands` the
/// temporal window of hand frames.
inline IntegratedRepresentation encode(const Encoder& enc, const RgbImage& environment,
                                       std::span<const RgbImage* const> hands, const BinaryMask& mask, int radius,
                                       double margin) {
  const std::size_t n = enc.temporal_frames();
  if (hands.size() != n) throw ShapeError("encode: expected " + std::to_string(n) + " hand frames");
  std::vector<const RgbImage*> images{&environment};
  images.insert(images.end(), hands.begin(), hands.end());
  const Matrix x = encoder_inputs(std::span<const RgbImage* const>(images), enc.input_dim());
  const Matrix emb = mlp_forward_batch(enc.trunk, x);
  IntegratedRepresentation r;
  r.z_vp.assign(emb.col(0).data(), emb.col(0).data() + emb.rows());
  const Matrix seq = Eigen::Map<const Matrix>(emb.col(1).data(), emb.rows() * static_cast<Eigen::Index>(n), 1);
  const Matrix zu = mlp_forward_batch(enc.temporal, seq);
  r.z_u.assign(zu.data(), zu.data() + zu.size());
  r.fullness = mlp_forward_batch(enc.fullness_head, emb.col(0))(0, 0);
  const GeometryFeature g = scoop_feature(mask, radius, margin);
  r.scoop_x = g.x;
  r.scoop_y = g.y;
  r.used_fallback = g.used_fallback;
  return r;
}

inline double predict_fullness(const Encoder& enc, const RgbImage& view) {
  const std::array<const RgbImage*, 1> one{&view};
  const Matrix emb = mlp_forward_batch(enc.trunk, encoder_inputs(std::span<const RgbImage* const>(one), enc.input_dim()));
  return mlp_forward_batch(enc.fullness_head, emb)(0, 0);
}

inline Matrix embed_images(const Encoder& enc, std::span<const RgbImage* const> images) {
  return mlp_forward_batch(enc.trunk, encoder_inputs(images, enc.input_dim()));
}

// Checkpoint: five consecutive parameter records (trunk, type head, fullness
// head, temporal aggregator, order head), then the optional hash trailer.

inline void write_encoder(const std::filesystem::path& path, const Encoder& enc, const std::string& config_hash = {}) {
  auto out = open_for_write(path, std::ios::binary);
  for (const MlpParams* p : {&enc.trunk, &enc.type_head, &enc.fullness_head, &enc.temporal, &enc.order_head})
    write_params(out, *p);
  if (!config_hash.empty()) write_hash_trailer(out, config_hash);
}

inline Encoder read_encoder(const std::filesystem::path& path) {
  auto in = open_for_read(path, std::ios::binary);
  Encoder enc;
  for (MlpParams* p : {&enc.trunk, &enc.type_head, &enc.fullness_head, &enc.temporal, &enc.order_head})
    *p = read_params(in);
  const std::size_t e = enc.embed_dim();
  if (enc.type_head.input_dim() != e || enc.fullness_head.input_dim() != e || enc.fullness_head.output_dim() != 1 ||
      enc.temporal.output_dim() != e || enc.temporal.input_dim() % e != 0 || enc.order_head.input_dim() != e)
    throw IoError("encoder checkpoint has inconsistent shapes");
  const std::size_t n = enc.temporal_frames();
  if (enc.order_head.output_dim() != n * n) throw IoError("encoder checkpoint has inconsistent order head");
  return enc;
}

}  // namespace imrl
