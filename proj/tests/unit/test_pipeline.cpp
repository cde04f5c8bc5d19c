#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "imrl/io.hpp"
#include "imrl/pipeline/analysis.hpp"
#include "imrl/pipeline/experiment.hpp"
#include "oracles.hpp"

using namespace imrl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "imrl_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DatasetSpec small_spec() {
  DatasetSpec s;
  s.counts = {6, 2, 2};
  return s;
}

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.trunk_dims = {3072, 32, 8};
  e.num_types = food_catalog().size();
  return e;
}

RunConfig tiny_run() {
  RunConfig c;
  c.train_per_type = 4;
  c.val_per_type = 1;
  c.test_per_type = 1;
  c.repr_epochs = 2;
  c.trunk_dims = {3072, 16, 8};
  c.temporal_hidden = 8;
  c.num_demos = 3;
  c.bc_epochs = 3;
  c.bc_hidden = {16};
  c.eval_episodes = 3;
  c.gen_episodes = 7;
  c.afs_attempts = 2;
  return c;
}

// shared across tests so the demos are generated once
const std::vector<Trajectory>& few_demos() {
  static const auto demos = gen_demos(3, in_distribution_suite(), 11);
  return demos;
}

}  // namespace

TEST(Dataset, PropertyClassesAndLabels) {
  const auto ds = gen_food_dataset(small_spec(), 1);
  std::set<std::size_t> props;
  for (const auto& it : ds.items) props.insert(it.property_label);
  EXPECT_EQ(props.size(), kNumPropertyClasses);
  EXPECT_EQ(ds.items.size(), food_catalog().size() * 10);
  const auto& foods = ds.foods;
  const auto idx = [&](const char* name) {
    for (std::size_t i = 0; i < foods.size(); ++i)
      if (foods[i].name == name) return i;
    return foods.size();
  };
  std::size_t milk_prop = 99, water_prop = 98;
  for (const auto& it : ds.items) {
    if (it.type_label == idx("milk")) milk_prop = it.property_label;
    if (it.type_label == idx("water")) water_prop = it.property_label;
    EXPECT_EQ(it.image.width, 32);
    EXPECT_GE(it.fullness, 0.2);
    EXPECT_LE(it.fullness, 1.0);
  }
  EXPECT_EQ(milk_prop, water_prop);
  EXPECT_EQ(ds.indices(Split::test).size(), food_catalog().size() * 2);
}

TEST(Dataset, Deterministic) {
  EXPECT_TRUE(gen_food_dataset(small_spec(), 5) == gen_food_dataset(small_spec(), 5));
  EXPECT_FALSE(gen_food_dataset(small_spec(), 5) == gen_food_dataset(small_spec(), 6));
}

TEST(Dataset, JsonlRoundTrip) {
  const auto dir = scratch("dataset");
  const auto ds = gen_food_dataset(small_spec(), 2);
  write_dataset_jsonl(dir / "ds.jsonl", ds, "abc");
  EXPECT_TRUE(read_dataset_jsonl(dir / "ds.jsonl") == ds);
  EXPECT_THROW(read_dataset_jsonl(dir / "missing.jsonl"), IoError);
}

TEST(Shuffle, RestoreInvertsApply) {
  for (std::size_t n : {2u, 4u, 9u}) {
    std::vector<int> frames(n);
    std::iota(frames.begin(), frames.end(), 100);
    const auto s = shuffle_frames(n, 7 + n);
    const auto shuffled = apply_shuffle(frames, s);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(shuffled[i], frames[s.true_positions[i]]);
    EXPECT_EQ(restore_order(shuffled, s.true_positions), frames);
  }
  EXPECT_THROW(shuffle_frames(1, 0), ConfigError);
}

TEST(Demos, DeterministicAndSuccessful) {
  const auto a = gen_demos(2, in_distribution_suite(), 3);
  const auto b = gen_demos(2, in_distribution_suite(), 3);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t e = 0; e < a.size(); ++e) {
    ASSERT_EQ(a[e].steps.size(), b[e].steps.size());
    EXPECT_GT(a[e].steps.size(), 3u);
    EXPECT_FALSE(a[e].steps.back().action.has_value());
    for (std::size_t t = 0; t < a[e].steps.size(); ++t) {
      EXPECT_EQ(a[e].steps[t].environment, b[e].steps[t].environment);
      EXPECT_EQ(a[e].steps[t].action, b[e].steps[t].action);
    }
  }
}

TEST(Demos, JsonlRoundTrip) {
  const auto dir = scratch("demos");
  const auto& demos = few_demos();
  write_demos_jsonl(dir / "demos.jsonl", demos, "abc");
  const auto back = read_demos_jsonl(dir / "demos.jsonl");
  ASSERT_EQ(back.size(), demos.size());
  for (std::size_t e = 0; e < demos.size(); ++e) {
    EXPECT_EQ(back[e].env_name, demos[e].env_name);
    EXPECT_EQ(back[e].property, demos[e].property);
    ASSERT_EQ(back[e].steps.size(), demos[e].steps.size());
    for (std::size_t t = 0; t < demos[e].steps.size(); ++t) {
      EXPECT_EQ(back[e].steps[t].environment, demos[e].steps[t].environment);
      EXPECT_EQ(back[e].steps[t].hand, demos[e].steps[t].hand);
      EXPECT_EQ(back[e].steps[t].mask, demos[e].steps[t].mask);
      EXPECT_EQ(back[e].steps[t].action, demos[e].steps[t].action);
      EXPECT_DOUBLE_EQ(back[e].steps[t].fill, demos[e].steps[t].fill);
    }
  }
}

TEST(Encoder, RepresentationLayout) {
  EncoderConfig cfg;
  cfg.num_types = food_catalog().size();
  const Encoder enc = init_encoder(cfg, 1);
  EXPECT_EQ(enc.representation_dim(), 67u);
  const auto& st = few_demos()[0].steps;
  const RgbImage view = environment_view(st[0].environment);
  std::vector<const RgbImage*> hands(4, &st[0].hand);
  const auto a = encode(enc, view, hands, st[0].mask, 9, 3.0);
  const auto b = encode(enc, view, hands, st[0].mask, 9, 3.0);
  EXPECT_EQ(a.concat(), b.concat());
  EXPECT_EQ(a.concat().size(), 67u);
  EXPECT_GE(a.scoop_x, 0.0);
  EXPECT_LE(a.scoop_x, 1.0);
  EXPECT_FALSE(a.used_fallback);
}

TEST(Encoder, ScoopFeatureFallsBackToCentroid) {
  BinaryMask line(64, 64);
  for (int x = 10; x < 30; ++x) line.set(x, 20, true);
  const auto g = scoop_feature(line, 9, 3.0);
  EXPECT_TRUE(g.used_fallback);
  EXPECT_NEAR(g.x, 19.5 / 63.0, 1e-12);
  EXPECT_NEAR(g.y, 20.0 / 63.0, 1e-12);
}

TEST(TrainRepr, LossDecreases) {
  const auto ds = gen_food_dataset(small_spec(), 3);
  TrainReprConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 32;
  cfg.temporal_batch = 4;
  const auto r = train_repr(ds, few_demos(), init_encoder(small_encoder(), 4), cfg, 5);
  ASSERT_EQ(r.history.size(), 8u);
  EXPECT_LT(r.history.back().frozen_total, r.frozen_initial);
  for (const auto& s : r.history) EXPECT_TRUE(std::isfinite(s.total));
}

TEST(TrainRepr, ZeroWeightsLeaveParamsUnchanged) {
  const auto ds = gen_food_dataset(small_spec(), 3);
  TrainReprConfig cfg;
  cfg.epochs = 2;
  cfg.weights = {0.0, 0.0, 0.0, 0.0};
  const Encoder init = init_encoder(small_encoder(), 4);
  const auto r = train_repr(ds, few_demos(), init, cfg, 5);
  EXPECT_TRUE(r.encoder == init);
}

TEST(TrainRepr, CrossEntropyFitsTrainingSet) {
  const auto ds = gen_food_dataset(small_spec(), 3);
  TrainReprConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 24;
  cfg.weights = {1.0, 0.0, 0.0, 0.0};
  const auto r = train_repr(ds, few_demos(), init_encoder(small_encoder(), 4), cfg, 5);
  EXPECT_GT(type_accuracy(r.encoder, ds, Split::train), 0.9);
}

TEST(TrainBc, NllDecreasesAndFrozenEncoderUntouched) {
  EncoderConfig ec;
  ec.num_types = food_catalog().size();
  const Encoder enc = init_encoder(ec, 2);
  BcConfig cfg;
  cfg.epochs = 30;
  cfg.hidden = {32};
  // epoch NLL is measured under the training feature noise; initial_nll is not
  cfg.feature_noise = 0.0;
  const auto r = train_bc(few_demos(), enc, cfg, 3);
  ASSERT_EQ(r.nll_history.size(), 30u);
  EXPECT_LT(r.nll_history.back(), r.initial_nll);
  EXPECT_TRUE(r.encoder == enc);
  cfg.feature_noise = 1.0;
  const auto noisy = train_bc(few_demos(), enc, cfg, 3);
  EXPECT_LT(noisy.nll_history.back(), noisy.nll_history.front());
  EXPECT_TRUE(noisy.encoder == enc);
}

TEST(Checkpoints, RoundTripWithHash) {
  const auto dir = scratch("ckpt");
  EncoderConfig ec;
  ec.num_types = food_catalog().size();
  const Encoder enc = init_encoder(ec, 8);
  BcConfig cfg;
  cfg.epochs = 1;
  cfg.hidden = {16};
  const auto bc = train_bc(few_demos(), enc, cfg, 1);
  write_encoder(dir / "enc.bin", enc, "0123456789abcdef");
  write_policy(dir / "pol.bin", bc.policy, "fedcba9876543210");
  EXPECT_TRUE(read_encoder(dir / "enc.bin") == enc);
  EXPECT_TRUE(read_policy(dir / "pol.bin") == bc.policy);
  EXPECT_EQ(read_hash_trailer(dir / "enc.bin"), "0123456789abcdef");
  EXPECT_EQ(read_hash_trailer(dir / "pol.bin"), "fedcba9876543210");
  write_encoder(dir / "plain.bin", enc);
  EXPECT_EQ(read_hash_trailer(dir / "plain.bin"), "");
  EXPECT_THROW(read_policy(dir / "enc.bin"), IoError);
}

TEST(Evaluate, ExpertIsDeterministicAndBounded) {
  EvalConfig cfg;
  cfg.episodes = 6;
  cfg.afs_attempts = 3;
  const auto make = [] { return ExpertController{}; };
  const auto a = evaluate_suite(make, in_distribution_suite(), cfg, 4);
  const auto b = evaluate_suite(make, in_distribution_suite(), cfg, 4);
  EXPECT_EQ(a.sur, b.sur);
  EXPECT_EQ(a.afs, b.afs);
  EXPECT_GE(a.sur, 0.0);
  EXPECT_LE(a.sur, 1.0);
  EXPECT_DOUBLE_EQ(a.sur + a.sfr, 1.0);
  EXPECT_EQ(a.envs.size(), 3u);
  EXPECT_GE(a.sur, 0.8);
}

TEST(Evaluate, UntrainedPolicyRuns) {
  EncoderConfig ec;
  ec.num_types = food_catalog().size();
  const Encoder enc = init_encoder(ec, 2);
  BcConfig cfg;
  cfg.epochs = 1;
  cfg.hidden = {16};
  const auto bc = train_bc(few_demos(), enc, cfg, 3);
  EvalConfig ev;
  ev.episodes = 3;
  ev.afs_attempts = 2;
  const auto make = [&] { return PolicyController(bc.encoder, bc.policy); };
  const auto a = evaluate_suite(make, in_distribution_suite(), ev, 9);
  const auto b = evaluate_suite(make, in_distribution_suite(), ev, 9);
  EXPECT_EQ(a.sur, b.sur);
  EXPECT_GE(a.sur, 0.0);
  EXPECT_LE(a.sur, 1.0);
}

TEST(EmbeddingMetrics, IdealClusters) {
  Matrix x(2, 6);
  x << 0, 0, 0, 5, 5, 5, 0, 0, 0, 5, 5, 5;
  const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1};
  const auto m = embedding_metrics(x, labels);
  EXPECT_DOUBLE_EQ(m.silhouette, 1.0);
  EXPECT_DOUBLE_EQ(m.intra_inter_ratio, 0.0);
  const std::vector<std::size_t> one(6, 2);
  EXPECT_THROW(embedding_metrics(x, one), MetricsError);
}

TEST(EmbeddingMetrics, MatchesOracleSilhouette) {
  Rng rng(6);
  Matrix x(3, 40);
  std::vector<std::size_t> labels(40);
  std::vector<std::vector<double>> pts(40);
  std::vector<int> lab(40);
  for (int i = 0; i < 40; ++i) {
    labels[i] = static_cast<std::size_t>(i % 4);
    lab[i] = i % 4;
    for (int d = 0; d < 3; ++d) {
      x(d, i) = rng.normal() + (d == 0 ? 2.0 * (i % 4) : 0.0);
      pts[i].push_back(x(d, i));
    }
  }
  EXPECT_NEAR(embedding_metrics(x, labels).silhouette, oracle::silhouette(pts, lab), 1e-9);
}

TEST(Tsne, KlDecreasesAndOutputCentred) {
  Rng rng(8);
  Matrix pts(40, 5);
  for (int i = 0; i < 40; ++i)
    for (int d = 0; d < 5; ++d) pts(i, d) = rng.normal() + (i < 20 ? 4.0 : 0.0);
  TsneConfig cfg;
  cfg.perplexity = 8;
  cfg.iterations = 200;
  const auto r = tsne_2d(pts, cfg, 1);
  EXPECT_LT(r.final_kl, r.initial_kl);
  EXPECT_TRUE(std::isfinite(r.final_kl));
  EXPECT_NEAR(r.coords.col(0).mean(), 0.0, 1e-9);
  EXPECT_NEAR(r.coords.col(1).mean(), 0.0, 1e-9);
  const auto again = tsne_2d(pts, cfg, 1);
  EXPECT_TRUE(again.coords == r.coords);
  EXPECT_THROW(tsne_2d(pts.topRows(3), cfg, 1), ConfigError);
}

TEST(Tsne, DuplicatesLandTogether) {
  Rng rng(9);
  Matrix pts(30, 4);
  for (int i = 0; i < 30; ++i)
    for (int d = 0; d < 4; ++d) pts(i, d) = 3.0 * rng.normal();
  pts.row(1) = pts.row(0);
  TsneConfig cfg;
  cfg.perplexity = 5;
  cfg.iterations = 300;
  const auto r = tsne_2d(pts, cfg, 2);
  const double dup = (r.coords.row(0) - r.coords.row(1)).norm();
  // the layout scale is arbitrary, so compare with the closest other point
  double nearest_other = std::numeric_limits<double>::infinity();
  for (int i = 2; i < 30; ++i) nearest_other = std::min(nearest_other, (r.coords.row(0) - r.coords.row(i)).norm());
  EXPECT_LT(dup, 0.5 * nearest_other);
}

TEST(Ablation, FourVariantsShareInputs) {
  const RunConfig c = tiny_run();
  std::vector<std::string> stages;
  const auto run = ablation_suite(c, 0, false, [&](const std::string& v, const std::string& s) { stages.push_back(v + ":" + s); });
  ASSERT_EQ(run.runs.size(), 4u);
  EXPECT_EQ(run.runs[0].variant.name, "full");
  EXPECT_EQ(run.runs[3].variant.name, "no_geometric");
  // no_geometric reuses the full encoder
  EXPECT_EQ(run.pretrained.size(), 3u);
  EXPECT_TRUE(run.runs[0].bc.encoder == run.runs[3].bc.encoder);
  EXPECT_EQ(run.report.rows.size(), 4u * 10u);
  EXPECT_EQ(std::count(stages.begin(), stages.end(), "no_geometric:train-repr"), 0);
  for (const auto& row : run.report.rows) EXPECT_DOUBLE_EQ(row.sur + row.sfr, 1.0);
}

TEST(Determinism, RerunsAreBitIdentical) {
  const RunConfig c = tiny_run();
  const auto in = make_shared_inputs(c, 3);
  const auto a = pretrain(c, in, c.weights, 3);
  const auto b = pretrain(c, in, c.weights, 3);
  EXPECT_TRUE(a.encoder == b.encoder);
  const auto pa = train_bc(in.demos, a.encoder, bc_config(c), 4);
  const auto pb = train_bc(in.demos, b.encoder, bc_config(c), 4);
  EXPECT_TRUE(pa.policy == pb.policy);
  const auto dir = scratch("determinism");
  write_policy(dir / "a.bin", pa.policy);
  write_policy(dir / "b.bin", pb.policy);
  std::ifstream fa(dir / "a.bin", std::ios::binary), fb(dir / "b.bin", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}
