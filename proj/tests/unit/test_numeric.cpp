#include <gtest/gtest.h>

#include <sstream>

#include "imrl/numeric.hpp"
#include "oracles.hpp"

using namespace imrl;

namespace {

std::vector<std::vector<double>> weight_lists(const MlpParams& p) {
  std::vector<std::vector<double>> w;
  for (const auto& a : p.weights) w.emplace_back(a.data.begin(), a.data.end());
  return w;
}
std::vector<std::vector<double>> bias_lists(const MlpParams& p) {
  std::vector<std::vector<double>> b;
  for (const auto& a : p.biases) b.emplace_back(a.data.begin(), a.data.end());
  return b;
}

}  // namespace

TEST(InitParams, CountsParameters) { EXPECT_EQ(init_params({2, 3, 1}, 0).parameter_count(), 13u); }

TEST(InitParams, SameSeedSameParams) { EXPECT_EQ(init_params({4, 8, 2}, 5), init_params({4, 8, 2}, 5)); }

TEST(InitParams, DifferentSeedDifferentParams) { EXPECT_NE(init_params({4, 8, 2}, 5), init_params({4, 8, 2}, 6)); }

TEST(InitParams, SingleLayerSizeRejected) { EXPECT_THROW(init_params({5}, 0), InvalidArchitecture); }

TEST(MlpForward, ZeroWeightsGiveBias) {
  MlpParams p = init_params({3, 2}, 1);
  std::fill(p.weights[0].data.begin(), p.weights[0].data.end(), 0.0);
  p.biases[0].data = {0.5, -2.0};
  const auto y = mlp_forward(p, std::vector<double>{1.0, 2.0, 3.0}).y;
  EXPECT_EQ(y, (std::vector<double>{0.5, -2.0}));
}

TEST(MlpForward, ReluClampsNegativePreactivation) {
  MlpParams p = init_params({1, 1, 1}, 0);
  p.weights[0].data = {1.0};
  p.biases[0].data = {-2.0};  // hidden pre-activation -1 for x = 1
  p.weights[1].data = {1.0};
  p.biases[1].data = {0.0};
  const auto r = mlp_forward(p, std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(r.cache.preacts[0](0, 0), -1.0);
  EXPECT_DOUBLE_EQ(r.y[0], 0.0);
}

TEST(MlpForward, MatchesLoopOracle) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const std::vector<std::size_t> dims{1 + rng.index(9), 1 + rng.index(9), 1 + rng.index(9)};
    MlpParams p = init_params(dims, rng.next());
    for (auto b : p.blocks())
      for (double& v : b) v += 0.1 * rng.normal();
    std::vector<double> x(dims[0]);
    for (double& v : x) v = rng.normal();
    const auto y = mlp_forward(p, x).y;
    const auto ref = oracle::mlp(dims, weight_lists(p), bias_lists(p), x);
    ASSERT_EQ(y.size(), ref.size());
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(y[k], ref[k], 1e-12);
  }
}

TEST(MlpForward, WrongInputSizeRejected) {
  EXPECT_THROW(mlp_forward(init_params({3, 2}, 0), std::vector<double>{1.0}), ShapeError);
}

TEST(MlpForward, BatchColumnsMatchSingleSamples) {
  const MlpParams p = init_params({4, 6, 3}, 2);
  Matrix x = Matrix::Random(4, 5);
  const Matrix y = mlp_forward_batch(p, x);
  for (Eigen::Index c = 0; c < 5; ++c) {
    const auto single = mlp_forward(p, std::vector<double>(x.col(c).data(), x.col(c).data() + 4)).y;
    for (Eigen::Index r = 0; r < 3; ++r) EXPECT_NEAR(y(r, c), single[static_cast<std::size_t>(r)], 1e-12);
  }
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGrads) {
  const MlpParams p = init_params({3, 4, 2}, 4);
  const auto f = mlp_forward(p, std::vector<double>{0.1, -0.3, 0.7});
  const auto b = mlp_backward(p, f.cache, std::vector<double>{0.0, 0.0});
  for (double g : b.param_grads.flatten()) EXPECT_EQ(g, 0.0);
  for (double g : b.dx) EXPECT_EQ(g, 0.0);
}

TEST(MlpBackward, IdentityNetPassesGradient) {
  MlpParams p = init_params({3, 3}, 0);
  p.weights[0].data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  p.biases[0].data = {0, 0, 0};
  const auto f = mlp_forward(p, std::vector<double>{0.2, 0.4, 0.6});
  const auto b = mlp_backward(p, f.cache, std::vector<double>{1.0, 1.0, 1.0});
  EXPECT_EQ(b.dx, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  Rng rng(11);
  for (int i = 0; i < 10; ++i) {
    const std::vector<std::size_t> dims{3, 7, 5, 2};
    MlpParams p = init_params(dims, rng.next());
    // zero biases can leave a whole layer sitting on the ReLU kink
    for (auto block : p.blocks())
      for (double& v : block) v += 0.1 * rng.normal();
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    const std::vector<double> c{rng.normal(), rng.normal()};
    auto loss = [&](const MlpParams& q, const std::vector<double>& in) {
      const auto y = mlp_forward(q, in).y;
      return c[0] * y[0] + c[1] * y[1];
    };
    const auto f = mlp_forward(p, x);
    const auto b = mlp_backward(p, f.cache, c);
    const auto num = oracle::numeric_gradient(
        [&](const std::vector<double>& flat) {
          MlpParams q = p;
          q.unflatten(flat);
          return loss(q, x);
        },
        p.flatten());
    EXPECT_LT(oracle::relative_error(b.param_grads.flatten(), num), 1e-6);
    EXPECT_LT(oracle::relative_error(b.dx, oracle::numeric_gradient([&](const auto& v) { return loss(p, v); }, x)), 1e-6);
  }
}

TEST(MlpBackward, StaleCacheRejected) {
  const MlpParams p = init_params({3, 4, 2}, 4);
  const auto f = mlp_forward(init_params({3, 5, 2}, 4), std::vector<double>{0.1, 0.2, 0.3});
  EXPECT_THROW(mlp_backward(p, f.cache, std::vector<double>{1.0, 1.0}), ShapeError);
}

TEST(FiniteDiff, Square) {
  const auto g = finite_diff_grad([](std::span<const double> w) { return w[0] * w[0]; }, std::vector<double>{3.0});
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(FiniteDiff, LinearAndConstant) {
  EXPECT_NEAR(finite_diff_grad([](std::span<const double> w) { return 2.0 * w[0]; }, std::vector<double>{1.5})[0], 2.0, 1e-9);
  EXPECT_EQ(finite_diff_grad([](std::span<const double>) { return 4.0; }, std::vector<double>{1.5})[0], 0.0);
}

TEST(Adam, ZeroGradsLeaveParams) {
  const MlpParams p = init_params({2, 3}, 1);
  const auto [q, s] = adam_step(p, zeros_like(p), AdamState{});
  EXPECT_EQ(q, p);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  MlpParams p = init_params({2, 1}, 1);
  MlpParams g = zeros_like(p);
  g.weights[0].data = {3.0, -0.5};
  g.biases[0].data = {1e-3};
  const auto [q, s] = adam_step(p, g, AdamState{});
  EXPECT_NEAR(q.weights[0].data[0] - p.weights[0].data[0], -0.001, 1e-8);
  EXPECT_NEAR(q.weights[0].data[1] - p.weights[0].data[1], 0.001, 1e-8);
  EXPECT_NEAR(q.biases[0].data[0] - p.biases[0].data[0], -0.001, 1e-7);
}

TEST(Adam, Deterministic) {
  const MlpParams p = init_params({3, 2}, 9);
  MlpParams g = init_params({3, 2}, 10);
  EXPECT_EQ(adam_step(p, g, AdamState{}).first, adam_step(p, g, AdamState{}).first);
}

TEST(Checkpoint, RoundTrip) {
  const MlpParams p = init_params({5, 4, 3}, 21);
  std::stringstream ss;
  write_params(ss, p);
  EXPECT_EQ(ss.str().substr(0, 8), "IMRLPAR1");
  EXPECT_EQ(read_params(ss), p);
}

TEST(Checkpoint, BadMagicRejected) {
  std::stringstream ss("NOTMAGIC");
  EXPECT_THROW(read_params(ss), IoError);
}

TEST(Rng, DeriveSeedDistinguishesLabels) {
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_EQ(derive_seed(1, "a"), derive_seed(1, "a"));
  EXPECT_NE(derive_seed(1, std::uint64_t{0}), derive_seed(1, std::uint64_t{1}));
}

TEST(Rng, UniformInRange) {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.index(5), 5u);
  }
}
