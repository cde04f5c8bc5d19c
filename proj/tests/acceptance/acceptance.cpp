// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: imrl_acceptance [config file]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "imrl/config.hpp"
#include "imrl/geometry.hpp"
#include "imrl/losses.hpp"
#include "imrl/numeric.hpp"
#include "imrl/pipeline/analysis.hpp"
#include "imrl/pipeline/experiment.hpp"
#include "oracles.hpp"

using namespace imrl;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> normals(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// ---------------------------------------------------------------------------
// 1. gradients

struct GradCase {
  std::string name;
  double worst = 0.0;
  int count = 0;
};

void check(GradCase& c, const std::vector<double>& analytic, const std::vector<double>& numeric) {
  c.worst = std::max(c.worst, oracle::relative_error(analytic, numeric));
  ++c.count;
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  constexpr int kInstances = 20;
  Rng rng(derive_seed(1, "acceptance/gradients"));
  std::vector<GradCase> cases;

  {
    GradCase c{"softmax_cross_entropy"};
    for (int i = 0; i < kInstances; ++i) {
      const std::size_t k = 2 + rng.index(11);
      const std::size_t label = rng.index(k);
      const auto logits = normals(rng, k, 2.0);
      const auto f = [&](const std::vector<double>& x) { return softmax_cross_entropy(x, label).loss; };
      check(c, softmax_cross_entropy(logits, label).grad, oracle::numeric_gradient(f, logits));
    }
    cases.push_back(c);
  }
  {
    GradCase c{"triplet_loss"};
    const std::size_t d = 8;
    while (c.count < kInstances) {
      const auto x = normals(rng, 3 * d);
      const double margin = rng.uniform(0.2, 1.0);
      auto make = [&](const std::vector<double>& v) {
        return TripletBatch{{v.begin(), v.begin() + d}, {v.begin() + d, v.begin() + 2 * d}, {v.begin() + 2 * d, v.end()},
                            margin};
      };
      const auto r = triplet_loss(make(x));
      // stay away from the hinge kink, where the derivative is undefined
      const double hinge = l2_distance(make(x).anchor, make(x).positive) - l2_distance(make(x).anchor, make(x).negative) + margin;
      if (std::abs(hinge) < 1e-3) continue;
      std::vector<double> g = r.grad_anchor;
      g.insert(g.end(), r.grad_positive.begin(), r.grad_positive.end());
      g.insert(g.end(), r.grad_negative.begin(), r.grad_negative.end());
      const auto f = [&](const std::vector<double>& v) { return triplet_loss(make(v)).loss; };
      check(c, g, oracle::numeric_gradient(f, x));
    }
    cases.push_back(c);
  }
  {
    GradCase c{"temporal_order_loss"};
    for (int i = 0; i < kInstances; ++i) {
      const std::size_t n = 4;
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      const auto logits = normals(rng, n * n, 2.0);
      const auto f = [&](const std::vector<double>& x) { return temporal_order_loss(x, perm).loss; };
      check(c, temporal_order_loss(logits, perm).grad, oracle::numeric_gradient(f, logits));
    }
    cases.push_back(c);
  }
  {
    GradCase c{"fullness_mse"};
    for (int i = 0; i < kInstances; ++i) {
      const double target = rng.uniform(0.0, 1.0);
      const std::vector<double> pred{rng.normal()};
      const auto f = [&](const std::vector<double>& x) { return fullness_mse(x[0], target).loss; };
      check(c, {fullness_mse(pred[0], target).grad}, oracle::numeric_gradient(f, pred));
    }
    cases.push_back(c);
  }
  {
    GradCase c{"bc_nll"};
    for (int i = 0; i < kInstances; ++i) {
      std::vector<double> x = normals(rng, 12);
      for (std::size_t j = 6; j < 12; ++j) x[j] = rng.uniform(-3.0, 1.5);  // inside the clamp range
      const auto action = normals(rng, 6);
      auto head = [](const std::vector<double>& v) {
        return GaussianActionHead{{v.begin(), v.begin() + 6}, {v.begin() + 6, v.end()}};
      };
      const auto r = bc_nll(head(x), action);
      std::vector<double> g = r.grad_mean;
      g.insert(g.end(), r.grad_log_std.begin(), r.grad_log_std.end());
      const auto f = [&](const std::vector<double>& v) { return bc_nll(head(v), action).loss; };
      check(c, g, oracle::numeric_gradient(f, x));
    }
    cases.push_back(c);
  }
  {
    GradCase cp{"mlp_backward (parameters)"}, cx{"mlp_backward (input)"};
    for (int i = 0; i < kInstances; ++i) {
      const std::vector<std::size_t> dims{1 + rng.index(8), 1 + rng.index(10), 1 + rng.index(10), 1 + rng.index(5)};
      MlpParams p = init_params(dims, rng.next());
      for (auto block : p.blocks())
        for (double& v : block) v += 0.1 * rng.normal();  // non-zero biases
      const auto x = normals(rng, dims.front());
      const auto coef = normals(rng, dims.back());
      auto loss = [&](const MlpParams& params, const std::vector<double>& input) {
        const auto y = mlp_forward(params, input).y;
        double s = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) s += coef[j] * y[j];
        return s;
      };
      const auto fwd = mlp_forward(p, x);
      const auto back = mlp_backward(p, fwd.cache, coef);
      const auto fp = [&](const std::vector<double>& flat) {
        MlpParams q = p;
        q.unflatten(flat);
        return loss(q, x);
      };
      check(cp, back.param_grads.flatten(), oracle::numeric_gradient(fp, p.flatten()));
      check(cx, back.dx, oracle::numeric_gradient([&](const std::vector<double>& v) { return loss(p, v); }, x));
    }
    cases.push_back(cp);
    cases.push_back(cx);
  }

  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string detail;
  for (const auto& c : cases) {
    worst = std::max(worst, c.worst);
    detail += fmt("%s %.1e (%d); ", c.name.c_str(), c.worst, c.count);
  }
  report(1, worst < 1e-4 && secs < 10.0, fmt("gradient check, worst relative error %.2e, %.2fs [%s]", worst, secs, detail.c_str()));
}

// ---------------------------------------------------------------------------
// 2 and 3. geometry against brute force

struct RandomMask {
  BinaryMask mask;
  oracle::Grid grid;
};

RandomMask random_mask(Rng& rng) {
  const int w = 1 + static_cast<int>(rng.index(64)), h = 1 + static_cast<int>(rng.index(64));
  BinaryMask m(w, h);
  const double kind = rng.uniform();
  if (kind < 0.25) {  // salt and pepper
    const double p = rng.uniform(0.1, 0.95);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.set(x, y, rng.uniform() < p);
  } else if (kind < 0.9) {  // a few disks and rectangles, possibly touching the border
    const int shapes = 1 + static_cast<int>(rng.index(4));
    for (int s = 0; s < shapes; ++s) {
      const double cx = rng.uniform(-0.1, 1.1) * w, cy = rng.uniform(-0.1, 1.1) * h;
      const double rad = rng.uniform(1.0, 0.6 * std::max(w, h));
      const bool disk = rng.uniform() < 0.6;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const bool in = disk ? (x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad
                               : std::abs(x - cx) <= rad && std::abs(y - cy) <= 0.6 * rad;
          if (in) m.set(x, y, true);
        }
    }
    if (rng.uniform() < 0.3)  // holes
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (rng.uniform() < 0.02) m.set(x, y, false);
  } else if (kind < 0.95) {
    // all food
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.set(x, y, true);
  }  // else empty
  oracle::Grid g{w, h, std::vector<int>(m.cells.begin(), m.cells.end())};
  return {std::move(m), std::move(g)};
}

void criterion_geometry() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(2, "acceptance/geometry"));
  int mismatches = 0, infeasible = 0, clipped = 0, empty = 0;
  std::string first;
  auto fail = [&](const std::string& what) {
    if (first.empty()) first = what;
    ++mismatches;
  };
  for (int i = 0; i < 200; ++i) {
    const RandomMask rm = random_mask(rng);
    const int r = 1 + 2 * static_cast<int>(rng.index(8));
    const double margin = rng.uniform() < 0.3 ? static_cast<double>(rng.index(5)) : rng.uniform(0.0, 6.0);
    if (r / 2 > 0 && (rm.mask.width < r || rm.mask.height < r || true)) ++clipped;  // every mask has border pixels

    const DensityMap d = local_density(rm.mask, r);
    for (int y = 0; y < rm.grid.h; ++y)
      for (int x = 0; x < rm.grid.w; ++x) {
        const auto wc = oracle::window_count(rm.grid, x, y, r);
        if (d.count_at(x, y) != wc.count || d.window_at(x, y) != wc.area ||
            d.at(x, y) != static_cast<double>(wc.count) / static_cast<double>(wc.area))
          fail(fmt("density mask %d at (%d,%d)", i, x, y));
      }

    if (rm.mask.empty()) {
      ++empty;
      bool threw = false;
      try {
        boundary_distance(rm.mask);
      } catch (const EmptyMask&) {
        threw = true;
      }
      if (!threw) fail(fmt("mask %d: empty mask accepted by boundary_distance", i));
    } else {
      const DistanceField df = boundary_distance(rm.mask);
      const auto ref = oracle::squared_boundary_distance(rm.grid);
      for (int y = 0; y < rm.grid.h; ++y)
        for (int x = 0; x < rm.grid.w; ++x)
          if (df.squared_at(x, y) != ref[static_cast<std::size_t>(y * rm.grid.w + x)])
            fail(fmt("distance mask %d at (%d,%d)", i, x, y));
    }

    const auto expected = oracle::best_scoop_point(rm.grid, r, margin);
    try {
      const ScoopPoint p = optimal_scoop_point(rm.mask, r, margin);
      if (!expected || p.x != expected->x || p.y != expected->y) fail(fmt("scoop point mask %d", i));
    } catch (const NoFeasiblePoint&) {
      ++infeasible;
      if (expected) fail(fmt("mask %d: NoFeasiblePoint but oracle found (%d,%d)", i, expected->x, expected->y));
    }
  }
  const double secs = seconds_since(t0);
  report(2, mismatches == 0 && infeasible > 0 && secs < 60.0,
         fmt("200 masks, %d mismatches, %d NoFeasiblePoint cases, %d empty, %.1fs%s", mismatches, infeasible, empty, secs,
             first.empty() ? "" : (", first: " + first).c_str()));
}

void criterion_margin() {
  Rng rng(derive_seed(3, "acceptance/margin"));
  int feasible = 0, generated = 0, violations = 0, iff_errors = 0;
  while (feasible < 500) {
    const RandomMask rm = random_mask(rng);
    ++generated;
    const int r = 1 + 2 * static_cast<int>(rng.index(8));
    const double margin = rng.uniform(0.0, 8.0);
    const bool oracle_feasible = !oracle::feasible_set(rm.grid, margin).empty();
    try {
      const ScoopPoint p = optimal_scoop_point(rm.mask, r, margin);
      ++feasible;
      if (!oracle_feasible) ++iff_errors;
      const auto d2 = oracle::squared_boundary_distance(rm.grid)[static_cast<std::size_t>(p.y * rm.grid.w + p.x)];
      if (!rm.grid.at(p.x, p.y) || !(std::sqrt(static_cast<double>(d2)) > margin) || !(p.boundary_distance > margin))
        ++violations;
    } catch (const NoFeasiblePoint&) {
      if (oracle_feasible) ++iff_errors;
    }
  }
  report(3, violations == 0 && iff_errors == 0,
         fmt("%d feasible masks of %d generated, %d margin violations, %d NoFeasiblePoint disagreements", feasible,
             generated, violations, iff_errors));
}

// ---------------------------------------------------------------------------

std::string csv_bytes(const MetricsReport& r, const std::filesystem::path& path) {
  write_report(r, path);
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricsReport rows_of(const MetricsReport& r, std::string_view variant) {
  MetricsReport out{r.config_hash, {}};
  for (const auto& row : r.rows)
    if (row.variant == variant) out.rows.push_back(row);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const auto t_start = Clock::now();
  RunConfig cfg;
  try {
    if (argc > 1) cfg = parse_config(argv[1]);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  const std::filesystem::path out_dir = "acceptance_out";
  std::filesystem::create_directories(out_dir);
  std::printf("config hash %s, root seed %llu, %d seeds\n", config_hash(cfg).c_str(),
              static_cast<unsigned long long>(cfg.seed), cfg.num_seeds);

  criterion_gradients();
  criterion_geometry();
  criterion_margin();

  // One ablation run per seed, with the untrained-encoder baseline.
  auto variants = ablation_variants(cfg.weights);
  variants.push_back(raw_variant());
  MetricsReport all{config_hash(cfg), {}};
  std::vector<AblationRun> runs;
  SharedInputs first_inputs;
  double full_repr_seconds = 0.0;
  for (int s = 0; s < cfg.num_seeds; ++s) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
    const auto t0 = Clock::now();
    SharedInputs in = make_shared_inputs(cfg, seed);
    Clock::time_point stage_start = Clock::now();
    std::string stage_name;
    auto progress = [&](const std::string& v, const std::string& stage) {
      if (s == 0 && stage_name == "full/train-repr") full_repr_seconds = seconds_since(stage_start);
      stage_name = v + "/" + stage;
      stage_start = Clock::now();
      std::fprintf(stderr, "  [seed %llu %7.1fs] %s\n", static_cast<unsigned long long>(seed), seconds_since(t_start),
                   stage_name.c_str());
    };
    runs.push_back(run_variants(cfg, seed, variants, in, progress));
    all.rows.insert(all.rows.end(), runs.back().report.rows.begin(), runs.back().report.rows.end());
    std::fprintf(stderr, "  seed %llu done in %.1fs\n", static_cast<unsigned long long>(seed), seconds_since(t0));
    if (s == 0) first_inputs = std::move(in);
  }
  write_report(all, out_dir / "ablation_metrics.csv");
  const auto summary = summarize(all);

  // not a numbered criterion, but it must hold for every pretraining run
  {
    int runs_checked = 0, rising = 0;
    for (const auto& run : runs)
      for (const auto& [name, r] : run.pretrained) {
        ++runs_checked;
        if (!(r.history.back().frozen_total < r.frozen_initial)) {
          ++rising;
          std::printf("  frozen-batch L_z did not fall: seed %llu %s %.4f -> %.4f\n",
                      static_cast<unsigned long long>(run.seed), name.c_str(), r.frozen_initial,
                      r.history.back().frozen_total);
        }
      }
    std::printf("invariant   : %s  frozen-batch L_z fell in %d of %d pretraining runs\n", rising ? "FAIL" : "PASS",
                runs_checked - rising, runs_checked);
    if (rising) ++failures;
  }

  // 4. embedding clustering against the CE-only encoder at the same seed
  const AblationRun& first = runs.front();
  const Encoder& full_encoder = first.pretrained.at("full").encoder;
  {
    const auto t0 = Clock::now();
    const auto ce_only = pretrain(cfg, first_inputs, {1.0, 0.0, 0.0, 0.0}, first.seed);
    const double ce_seconds = seconds_since(t0);
    const auto& ds = first_inputs.dataset;
    std::vector<std::size_t> props;
    for (std::size_t i : ds.indices(Split::test)) props.push_back(ds.items[i].property_label);
    const auto m_full = embedding_metrics(embed_split(full_encoder, ds, Split::test), props);
    const auto m_ce = embedding_metrics(embed_split(ce_only.encoder, ds, Split::test), props);
    // cross-check the silhouette against the textbook version
    const Matrix e = embed_split(full_encoder, ds, Split::test);
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      pts.emplace_back(e.col(c).data(), e.col(c).data() + e.rows());
      labels.push_back(static_cast<int>(props[static_cast<std::size_t>(c)]));
    }
    const double sil_oracle = oracle::silhouette(pts, labels);
    const bool pass = m_full.silhouette >= 0.1 && m_full.silhouette > m_ce.silhouette &&
                      m_full.intra_inter_ratio < m_ce.intra_inter_ratio && full_repr_seconds <= 300.0 &&
                      std::abs(sil_oracle - m_full.silhouette) < 1e-9;
    report(4, pass,
           fmt("test-split silhouette %.3f (CE-only %.3f, oracle %.3f), intra/inter %.3f (CE-only %.3f), "
               "pretraining %.1fs (CE-only %.1fs)",
               m_full.silhouette, m_ce.silhouette, sil_oracle, m_full.intra_inter_ratio, m_ce.intra_inter_ratio,
               full_repr_seconds, ce_seconds));
  }

  // 5. frame order on demonstrations not used in pretraining
  {
    const auto held_out = gen_demos(cfg.num_demos, env_suite(cfg.demo_suite), derive_seed(first.seed, "held_out_demos"));
    const double acc = temporal_accuracy(full_encoder, held_out, 400, derive_seed(first.seed, "temporal_eval"));
    report(5, acc >= 0.6, fmt("held-out frame-order accuracy %.3f with N=%zu (chance %.3f)", acc,
                              full_encoder.temporal_frames(), 1.0 / static_cast<double>(full_encoder.temporal_frames())));
  }

  // 6. fullness head
  {
    const double mae = fullness_mae(full_encoder, first_inputs.dataset, Split::test);
    const SimState s = make_env(default_bowl(), find_food("cereals"), cfg.fullness_label, derive_seed(first.seed, "fill_check"));
    const double pred = predict_fullness(full_encoder, environment_view(render_environment(s)));
    report(6, mae <= 0.1, fmt("test-split fullness MAE %.4f; render at fill %.2f predicted %.3f", mae, cfg.fullness_label, pred));
  }

  // 7 and 8. closed-loop success
  {
    std::string per_seed;
    for (const auto& r : runs) {
      const auto s = summarize(r.report);
      per_seed += fmt(" seed %llu: in %.2f, full %.2f, raw %.2f;", static_cast<unsigned long long>(r.seed),
                      find_summary(s, "full", cfg.eval_suite).sur, find_summary(s, "full", cfg.gen_suite).sur,
                      find_summary(s, "raw", cfg.gen_suite).sur);
    }
    const double in_sur = find_summary(summary, "full", cfg.eval_suite).sur;
    const double full_gen = find_summary(summary, "full", cfg.gen_suite).sur;
    const double raw_gen = find_summary(summary, "raw", cfg.gen_suite).sur;
    report(7, in_sur >= 0.70 && full_gen - raw_gen >= 0.15,
           fmt("%d demos; in-distribution SUR %.3f over %d episodes/seed; generalization full %.3f vs raw %.3f "
               "(gap %.3f), mean of %d seeds;%s",
               cfg.num_demos, in_sur, cfg.eval_episodes, full_gen, raw_gen, full_gen - raw_gen, cfg.num_seeds,
               per_seed.c_str()));

    bool ordered = true;
    std::string detail = fmt("generalization SUR full %.3f", full_gen);
    for (const char* v : {"no_vp", "no_temporal", "no_geometric"}) {
      const double sur = find_summary(summary, v, cfg.gen_suite).sur;
      ordered = ordered && full_gen >= sur;
      detail += fmt(", %s %.3f", v, sur);
    }
    report(8, ordered, detail + fmt(" (mean of %d seeds)", cfg.num_seeds));
  }

  // 9. determinism: rerun the full variant at the first seed
  {
    const auto rerun = run_variants(cfg, first.seed, {variants.front()}, first_inputs);
    const std::string a = csv_bytes(rows_of(first.report, "full"), out_dir / "determinism_a.csv");
    const std::string b = csv_bytes(rerun.report, out_dir / "determinism_b.csv");
    const bool same_policy = rerun.runs.front().bc.policy == first.runs.front().bc.policy;
    const bool same_encoder = rerun.pretrained.at("full").encoder == full_encoder;
    report(9, a == b && same_policy && same_encoder,
           fmt("metrics CSV %s (%zu bytes), encoder %s, policy %s", a == b ? "byte-identical" : "differs", a.size(),
               same_encoder ? "bit-identical" : "differs", same_policy ? "bit-identical" : "differs"));
  }

  // 10. t-SNE on 300 trained embeddings
  {
    const auto& ds = first_inputs.dataset;
    std::vector<const RgbImage*> images;
    for (Split split : {Split::val, Split::test})
      for (std::size_t i : ds.indices(split)) images.push_back(&ds.items[i].image);
    const std::size_t n = std::min<std::size_t>(300, images.size());
    std::vector<const RgbImage*> chosen;
    for (std::size_t i = 0; i < n; ++i) chosen.push_back(images[i * images.size() / n]);
    const Matrix pts = embed_images(full_encoder, chosen).transpose();
    const TsneConfig tc;
    const auto t1 = tsne_2d(pts, tc, derive_seed(first.seed, "tsne"));
    const auto t2 = tsne_2d(pts, tc, derive_seed(first.seed, "tsne"));
    bool finite = true;
    for (double kl : t1.kl_history) finite = finite && std::isfinite(kl);
    report(10, n == 300 && t1.final_kl < t1.initial_kl && finite && t1.coords == t2.coords,
           fmt("%zu points, KL %.4f -> %.4f, %s across repeats", n, t1.initial_kl, t1.final_kl,
               t1.coords == t2.coords ? "coordinates identical" : "coordinates differ"));
  }

  const double total = seconds_since(t_start);
  std::printf("total time %.1fs (budget 900s) %s\n", total, total <= 900.0 ? "within budget" : "OVER BUDGET");
  std::printf("%d criteria failed\n", failures);
  std::printf("summary (mean over seeds):\n");
  for (const auto& s : summary)
    std::printf("  %-13s %-16s SUR %.3f SFR %.3f AFS %.4f\n", s.variant.c_str(), s.suite.c_str(), s.sur, s.sfr, s.afs);
  return failures == 0 && total <= 900.0 ? 0 : 1;
}
