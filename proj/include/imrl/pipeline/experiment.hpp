#pragma once

// Wiring from RunConfig to the pipeline stages, and the ablation protocol:
// every variant shares the dataset, the demonstrations, the encoder
// initialisation and all BC/evaluation seeds; only the representation differs.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "imrl/config.hpp"
#include "imrl/pipeline/bc.hpp"
#include "imrl/pipeline/dataset.hpp"
#include "imrl/pipeline/demos.hpp"
#include "imrl/pipeline/encoder.hpp"
#include "imrl/pipeline/evaluate.hpp"
#include "imrl/pipeline/train_repr.hpp"
#include "imrl/report.hpp"

namespace imrl {

inline DatasetSpec dataset_spec(const RunConfig& c) {
  DatasetSpec spec;
  spec.counts = {c.train_per_type, c.val_per_type, c.test_per_type};
  return spec;
}

inline EncoderConfig encoder_config(const RunConfig& c) {
  EncoderConfig e;
  e.trunk_dims = c.trunk_dims;
  e.num_types = food_catalog().size();
  e.temporal_frames = static_cast<std::size_t>(c.temporal_frames);
  e.temporal_hidden = static_cast<std::size_t>(c.temporal_hidden);
  return e;
}

inline TrainReprConfig repr_config(const RunConfig& c, const LossWeights& weights) {
  TrainReprConfig r;
  r.weights = weights;
  r.margin_alpha = c.margin_alpha;
  r.epochs = c.repr_epochs;
  r.batch_size = static_cast<std::size_t>(c.repr_batch);
  r.temporal_batch = static_cast<std::size_t>(c.temporal_batch);
  r.adam.lr = c.repr_lr;
  return r;
}

inline BcConfig bc_config(const RunConfig& c, const RepresentationMask& mask = {}) {
  BcConfig b;
  b.history = static_cast<std::size_t>(c.history);
  b.hidden = c.bc_hidden;
  b.epochs = c.bc_epochs;
  b.batch_size = static_cast<std::size_t>(c.bc_batch);
  b.adam.lr = c.bc_lr;
  b.finetune_encoder = c.finetune_encoder;
  b.encoder_lr = c.encoder_lr;
  b.feature_noise = c.feature_noise;
  b.min_input_std = c.min_input_std;
  b.mask = mask;
  b.density_radius = c.density_radius;
  b.margin = c.scoop_margin;
  return b;
}

inline EvalConfig eval_config(const RunConfig& c, int episodes) {
  EvalConfig e;
  e.episodes = static_cast<std::size_t>(episodes);
  e.afs_attempts = static_cast<std::size_t>(c.afs_attempts);
  e.afs_runs = static_cast<std::size_t>(c.afs_runs);
  return e;
}

// Child seeds, all derived from one root by fixed labels.
namespace seeds {
inline std::uint64_t dataset(std::uint64_t root) { return derive_seed(root, "dataset"); }
inline std::uint64_t demos(std::uint64_t root) { return derive_seed(root, "demos"); }
inline std::uint64_t encoder_init(std::uint64_t root) { return derive_seed(root, "encoder_init"); }
inline std::uint64_t train_repr(std::uint64_t root) { return derive_seed(root, "train_repr"); }
inline std::uint64_t train_bc(std::uint64_t root) { return derive_seed(root, "train_bc"); }
inline std::uint64_t eval(std::uint64_t root, std::string_view suite) {
  return derive_seed(root, "eval/" + std::string(suite));
}
}  // namespace seeds

struct Variant {
  std::string name;
  LossWeights weights;
  RepresentationMask mask;
  bool pretrained = true;  // false: the untrained initial encoder
};

/// full; no visual/physical losses; no temporal loss with z_u zeroed;
/// geometric inputs zeroed.
inline std::vector<Variant> ablation_variants(const LossWeights& w) {
  LossWeights no_vp = w, no_temp = w;
  no_vp.ce = no_vp.tri = 0.0;
  no_temp.temp = 0.0;
  return {{"full", w, {}},
          {"no_vp", no_vp, {}},
          {"no_temporal", no_temp, {true, false, true}},
          {"no_geometric", w, {true, true, false}}};
}

/// No representation learning: the initial encoder, and no geometric inputs.
inline Variant raw_variant() { return {"raw", {}, {true, true, false}, false}; }

struct SharedInputs {
  FoodImageDataset dataset;
  std::vector<Trajectory> demos;
};

inline SharedInputs make_shared_inputs(const RunConfig& c, std::uint64_t seed) {
  return {gen_food_dataset(dataset_spec(c), seeds::dataset(seed)),
          gen_demos(c.num_demos, env_suite(c.demo_suite), seeds::demos(seed))};
}

inline TrainReprResult pretrain(const RunConfig& c, const SharedInputs& in, const LossWeights& w, std::uint64_t seed) {
  return train_repr(in.dataset, in.demos, init_encoder(encoder_config(c), seeds::encoder_init(seed)), repr_config(c, w),
                    seeds::train_repr(seed));
}

struct VariantRun {
  Variant variant;
  BcResult bc;
  SuiteMetrics eval;
  SuiteMetrics gen;
};

struct AblationRun {
  std::uint64_t seed = 0;
  std::vector<VariantRun> runs;
  std::map<std::string, TrainReprResult> pretrained;  // keyed by variant that first trained it
  MetricsReport report;
};

/// Progress callback: (variant, stage).
using ProgressFn = std::function<void(const std::string&, const std::string&)>;

/// Trains and evaluates `variants` at one seed. Variants with equal loss
/// weights share one pretrained encoder.
inline AblationRun run_variants(const RunConfig& c, std::uint64_t seed, const std::vector<Variant>& variants,
                                const SharedInputs& in, const ProgressFn& progress = {}) {
  validate(c);
  AblationRun out;
  out.seed = seed;
  out.report.config_hash = config_hash(c);
  const auto eval_suite = env_suite(c.eval_suite), gen_suite = env_suite(c.gen_suite);
  const EvalConfig ev = eval_config(c, c.eval_episodes), gv = eval_config(c, c.gen_episodes);
  std::vector<std::pair<LossWeights, std::string>> trained;
  for (const Variant& v : variants) {
    Encoder encoder;
    if (!v.pretrained) {
      encoder = init_encoder(encoder_config(c), seeds::encoder_init(seed));
    } else {
      const auto hit = std::find_if(trained.begin(), trained.end(), [&](const auto& t) { return t.first == v.weights; });
      if (hit != trained.end()) {
        encoder = out.pretrained.at(hit->second).encoder;
      } else {
        if (progress) progress(v.name, "train-repr");
        auto r = pretrain(c, in, v.weights, seed);
        encoder = r.encoder;
        out.pretrained.emplace(v.name, std::move(r));
        trained.emplace_back(v.weights, v.name);
      }
    }
    if (progress) progress(v.name, "train-bc");
    VariantRun run{v, train_bc(in.demos, std::move(encoder), bc_config(c, v.mask), seeds::train_bc(seed)), {}, {}};
    if (progress) progress(v.name, "eval");
    auto make = [&] { return PolicyController(run.bc.encoder, run.bc.policy, c.density_radius, c.scoop_margin); };
    run.eval = evaluate_suite(make, eval_suite, ev, seeds::eval(seed, c.eval_suite));
    run.gen = evaluate_suite(make, gen_suite, gv, seeds::eval(seed, c.gen_suite));
    append_suite(out.report, v.name, c.eval_suite, seed, run.eval);
    append_suite(out.report, v.name, c.gen_suite, seed, run.gen);
    out.runs.push_back(std::move(run));
  }
  return out;
}

/// The four-variant comparison at one seed.
inline AblationRun ablation_suite(const RunConfig& c, std::uint64_t seed, bool with_raw = false,
                                  const ProgressFn& progress = {}) {
  auto variants = ablation_variants(c.weights);
  if (with_raw) variants.push_back(raw_variant());
  return run_variants(c, seed, variants, make_shared_inputs(c, seed), progress);
}

/// ablation_suite over seeds seed, seed+1, ..., seed+num_seeds-1, merged
/// into one report.
inline MetricsReport ablation_report(const RunConfig& c, bool with_raw = false, const ProgressFn& progress = {}) {
  MetricsReport report;
  report.config_hash = config_hash(c);
  for (int i = 0; i < c.num_seeds; ++i) {
    const auto run = ablation_suite(c, c.seed + static_cast<std::uint64_t>(i), with_raw, progress);
    report.rows.insert(report.rows.end(), run.report.rows.begin(), run.report.rows.end());
  }
  return report;
}

}  // namespace imrl
