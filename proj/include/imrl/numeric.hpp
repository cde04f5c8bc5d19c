#pragma once

// Dense arrays, a ReLU multilayer perceptron with hand-written reverse-mode
// gradients, a central finite-difference oracle and the Adam optimizer.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "imrl/errors.hpp"
#include "imrl/rng.hpp"

namespace imrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Parameter storage is aligned so Eigen's vectorised kernels peel the same
// way on every allocation; with std::vector's default alignment the summation
// order (and so the last bits of the result) depended on the address.
using AlignedDoubles = std::vector<double, Eigen::aligned_allocator<double>>;

struct DenseArray {
  std::vector<std::size_t> shape;
  AlignedDoubles data;

  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)), data(element_count(shape), fill) {}

  static std::size_t element_count(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
  }

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const DenseArray&) const = default;
};

inline void debug_check_finite([[maybe_unused]] std::span<const double> values,
                               [[maybe_unused]] const char* what) {
#ifndef NDEBUG
  for (double v : values) {
    if (!std::isfinite(v)) throw ShapeError(std::string("non-finite value in ") + what);
  }
#endif
}

/// Fully connected network. Weights of layer i are stored row-major with shape
/// (layer_dims[i+1], layer_dims[i]); hidden layers use ReLU, the output layer
/// is linear.
struct MlpParams {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseArray> weights;
  std::vector<DenseArray> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i)
      n += layer_dims[i] * layer_dims[i + 1] + layer_dims[i + 1];
    return n;
  }

  /// Parameter blocks in checkpoint order (W0, b0, W1, b1, ...).
  std::vector<std::span<double>> blocks() {
    std::vector<std::span<double>> out;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      out.emplace_back(weights[i].data);
      out.emplace_back(biases[i].data);
    }
    return out;
  }
  std::vector<std::span<const double>> blocks() const {
    std::vector<std::span<const double>> out;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      out.emplace_back(weights[i].data);
      out.emplace_back(biases[i].data);
    }
    return out;
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (auto block : blocks()) flat.insert(flat.end(), block.begin(), block.end());
    return flat;
  }
  void unflatten(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw ShapeError("unflatten: parameter count mismatch");
    std::size_t offset = 0;
    for (auto block : blocks()) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
      offset += block.size();
    }
  }

  Eigen::Map<const RowMajorMatrix> weight_map(std::size_t layer) const {
    return {weights[layer].data.data(), static_cast<Eigen::Index>(layer_dims[layer + 1]),
            static_cast<Eigen::Index>(layer_dims[layer])};
  }
  Eigen::Map<const Vector> bias_map(std::size_t layer) const {
    return {biases[layer].data.data(), static_cast<Eigen::Index>(layer_dims[layer + 1])};
  }

  bool operator==(const MlpParams&) const = default;
};

/// Same shapes as the parameters, all zero.
inline MlpParams zeros_like(const MlpParams& params) {
  MlpParams out;
  out.layer_dims = params.layer_dims;
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    out.weights.emplace_back(params.weights[i].shape);
    out.biases.emplace_back(params.biases[i].shape);
  }
  return out;
}

inline void check_architecture(std::span<const std::size_t> layer_dims) {
  if (layer_dims.size() < 2) throw InvalidArchitecture("an MLP needs at least two layer dims");
  for (std::size_t d : layer_dims)
    if (d < 1) throw InvalidArchitecture("layer dims must be positive");
}

/// He-style fan-in scaled uniform initialization, biases zero.
inline MlpParams init_params(std::span<const std::size_t> layer_dims, std::uint64_t seed) {
  check_architecture(layer_dims);
  Rng rng(seed);
  MlpParams params;
  params.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    const std::size_t fan_in = layer_dims[i];
    const std::size_t fan_out = layer_dims[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    DenseArray w({fan_out, fan_in});
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(std::vector<std::size_t>{fan_out});
  }
  return params;
}

inline MlpParams init_params(std::initializer_list<std::size_t> layer_dims, std::uint64_t seed) {
  std::vector<std::size_t> dims(layer_dims);
  return init_params(dims, seed);
}

/// Activations saved by a forward pass. Columns are samples.
struct MlpCache {
  std::vector<Matrix> inputs;     // input to each layer
  std::vector<Matrix> preacts;    // pre-activation of each layer
};

/// Batched forward pass; `x` holds one sample per column.
inline Matrix mlp_forward_batch(const MlpParams& params, const Matrix& x, MlpCache* cache = nullptr) {
  if (static_cast<std::size_t>(x.rows()) != params.input_dim())
    throw ShapeError("mlp_forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(params.input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  Matrix activation = x;
  for (std::size_t layer = 0; layer < params.num_layers(); ++layer) {
    Matrix pre = params.weight_map(layer) * activation;
    pre.colwise() += params.bias_map(layer);
    if (cache) {
      cache->inputs.push_back(std::move(activation));
      cache->preacts.push_back(pre);
    }
    if (layer + 1 < params.num_layers())
      activation = pre.cwiseMax(0.0);
    else
      activation = std::move(pre);
  }
  return activation;
}

/// Batched reverse pass. Parameter gradients are summed over the batch. When
/// `dx` is null the gradient with respect to the input is not formed.
inline MlpParams mlp_backward_batch(const MlpParams& params, const MlpCache& cache, const Matrix& dy,
                                    Matrix* dx = nullptr) {
  const std::size_t layers = params.num_layers();
  if (cache.inputs.size() != layers || cache.preacts.size() != layers)
    throw ShapeError("mlp_backward: cache does not match the network depth");
  if (static_cast<std::size_t>(dy.rows()) != params.output_dim() ||
      dy.cols() != cache.preacts.back().cols())
    throw ShapeError("mlp_backward: upstream gradient shape mismatch");
  for (std::size_t layer = 0; layer < layers; ++layer) {
    if (static_cast<std::size_t>(cache.inputs[layer].rows()) != params.layer_dims[layer] ||
        static_cast<std::size_t>(cache.preacts[layer].rows()) != params.layer_dims[layer + 1])
      throw ShapeError("mlp_backward: stale cache");
  }

  MlpParams grads = zeros_like(params);
  Matrix delta = dy;
  for (std::size_t layer = layers; layer-- > 0;) {
    if (layer + 1 < layers) delta = delta.cwiseProduct((cache.preacts[layer].array() > 0.0).cast<double>().matrix());
    Eigen::Map<RowMajorMatrix> gw(grads.weights[layer].data.data(),
                                  static_cast<Eigen::Index>(params.layer_dims[layer + 1]),
                                  static_cast<Eigen::Index>(params.layer_dims[layer]));
    gw.noalias() = delta * cache.inputs[layer].transpose();
    Eigen::Map<Vector> gb(grads.biases[layer].data.data(), gw.rows());
    gb = delta.rowwise().sum();
    if (layer > 0) {
      delta = params.weight_map(layer).transpose() * delta;
    } else if (dx) {
      *dx = params.weight_map(0).transpose() * delta;
    }
  }
  return grads;
}

struct ForwardResult {
  std::vector<double> y;
  MlpCache cache;
};

struct BackwardResult {
  MlpParams param_grads;
  std::vector<double> dx;
};

inline ForwardResult mlp_forward(const MlpParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim())
    throw ShapeError("mlp_forward: input length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(params.input_dim()));
  ForwardResult result;
  const Matrix input = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  const Matrix y = mlp_forward_batch(params, input, &result.cache);
  result.y.assign(y.data(), y.data() + y.size());
  debug_check_finite(result.y, "mlp_forward");
  return result;
}

inline BackwardResult mlp_backward(const MlpParams& params, const MlpCache& cache,
                                   std::span<const double> dloss_dy) {
  const Matrix dy = Eigen::Map<const Vector>(dloss_dy.data(), static_cast<Eigen::Index>(dloss_dy.size()));
  BackwardResult result;
  Matrix dx;
  result.param_grads = mlp_backward_batch(params, cache, dy, &dx);
  result.dx.assign(dx.data(), dx.data() + dx.size());
  return result;
}

/// Central differences (f(w+eps) - f(w-eps)) / (2 eps), one coordinate at a time.
inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                            std::span<const double> params, double eps = 1e-5) {
  std::vector<double> w(params.begin(), params.end());
  std::vector<double> grads(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + eps;
    const double plus = fn(w);
    w[i] = saved - eps;
    const double minus = fn(w);
    w[i] = saved;
    grads[i] = (plus - minus) / (2.0 * eps);
  }
  return grads;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}

  bool operator==(const AdamState&) const = default;
};

/// One Adam update with bias correction over a list of parameter blocks.
/// Moments are allocated lazily on the first call.
inline void adam_update(std::span<const std::span<double>> params,
                        std::span<const std::span<const double>> grads, AdamState& state) {
  if (params.size() != grads.size()) throw ShapeError("adam: block count mismatch");
  if (state.first_moment.empty()) {
    for (auto block : params) {
      state.first_moment.emplace_back(block.size(), 0.0);
      state.second_moment.emplace_back(block.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam: state/param mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size())
      throw ShapeError("adam: block shape mismatch");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    auto p = params[b];
    auto g = grads[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

inline void adam_update(MlpParams& params, const MlpParams& grads, AdamState& state) {
  if (params.layer_dims != grads.layer_dims) throw ShapeError("adam: gradient architecture mismatch");
  const auto p = params.blocks();
  const auto g = grads.blocks();
  adam_update(p, g, state);
}

/// Value-returning form: (params', state').
inline std::pair<MlpParams, AdamState> adam_step(MlpParams params, const MlpParams& grads, AdamState state) {
  adam_update(params, grads, state);
  return {std::move(params), std::move(state)};
}

// ---------------------------------------------------------------------------
// Checkpoints: "IMRLPAR1", u32 dim count, u32 dims, then f64 W/b per layer, all
// little-endian.

inline constexpr std::array<char, 8> kParamMagic = {'I', 'M', 'R', 'L', 'P', 'A', 'R', '1'};

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw IoError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline void write_params(std::ostream& out, const MlpParams& params) {
  out.write(kParamMagic.data(), kParamMagic.size());
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layer_dims.size()));
  for (std::size_t d : params.layer_dims) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (auto block : params.blocks())
    for (double v : block) detail::write_le<double>(out, v);
  if (!out) throw IoError("failed to write checkpoint");
}

inline MlpParams read_params(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kParamMagic) throw IoError("bad checkpoint magic");
  const auto count = detail::read_le<std::uint32_t>(in);
  if (count < 2 || count > 64) throw IoError("bad layer count in checkpoint");
  std::vector<std::size_t> dims(count);
  for (auto& d : dims) d = detail::read_le<std::uint32_t>(in);
  check_architecture(dims);
  MlpParams params = init_params(dims, 0);
  for (auto block : params.blocks())
    for (double& v : block) v = detail::read_le<double>(in);
  return params;
}

}  // namespace imrl
