#pragma once

// Command-line front end. run_command is the whole program minus main() so
// tests can drive it with captured streams.

#include <array>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "imrl/config.hpp"
#include "imrl/geometry.hpp"
#include "imrl/pipeline/analysis.hpp"
#include "imrl/pipeline/experiment.hpp"

namespace imrl {

inline constexpr std::array<std::string_view, 8> kSubcommands = {
    "gen-data", "gen-demos", "train-repr", "train-bc", "eval", "ablate", "scoop-point", "embed"};

inline std::string usage_text() {
  return "usage: imrl <command> [options]\n"
         "commands:\n"
         "  gen-data     render the labelled food image dataset\n"
         "  gen-demos    record scripted expert demonstrations\n"
         "  train-repr   pretrain the encoder on the dataset and demo videos\n"
         "  train-bc     train the behaviour-cloning policy\n"
         "  eval         evaluate the policy on the configured suites\n"
         "  ablate       train and evaluate full, no_vp, no_temporal and no_geometric\n"
         "  scoop-point  print the scoop point of a PGM mask\n"
         "  embed        export embeddings, clustering metrics and t-SNE coordinates\n"
         "common options: --config FILE, --set key=value (repeatable)\n"
         "run 'imrl <command> --help' for details\n";
}

namespace detail {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

inline RunConfig load_config(const CommonOptions& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : parse_config(o.config_path);
  if (!o.overrides.empty()) {
    // overrides replace file values, so they are applied as a second layer
    std::string text;
    for (const auto& kv : o.overrides) text += kv + "\n";
    c = parse_config_text(text, c);
  }
  return c;
}

inline void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", o.overrides, "override one key, e.g. --set seed=3");
}

inline std::string write_embeddings_csv(const std::filesystem::path& path, const Matrix& emb,
                                        const std::vector<std::size_t>& types, const std::vector<std::size_t>& props,
                                        const std::string& hash) {
  auto out = open_for_write(path);
  out << "# config_hash=" << hash << "\ntype,property";
  for (Eigen::Index d = 0; d < emb.rows(); ++d) out << ",e" << d;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < emb.cols(); ++i) {
    out << types[static_cast<std::size_t>(i)] << ',' << props[static_cast<std::size_t>(i)];
    for (Eigen::Index d = 0; d < emb.rows(); ++d) {
      std::snprintf(buf, sizeof buf, ",%.9g", emb(d, i));
      out << buf;
    }
    out << '\n';
  }
  return path.string();
}

}  // namespace detail

inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  if (argc < 2) {
    err << usage_text();
    return 2;
  }
  const std::string_view name = argv[1];
  if (name == "--help" || name == "-h" || name == "help") {
    out << usage_text();
    return 0;
  }
  if (std::find(kSubcommands.begin(), kSubcommands.end(), name) == kSubcommands.end()) {
    err << "unknown command '" << name << "'\n" << usage_text();
    return 2;
  }

  CLI::App app{"Scooping policy toolkit", "imrl"};
  app.require_subcommand(1);
  detail::CommonOptions common;
  std::map<std::string, CLI::App*> subs;
  for (auto n : kSubcommands) subs[std::string(n)] = app.add_subcommand(std::string(n));
  subs["gen-data"]->description("Render the labelled food image dataset to dataset_path");
  subs["gen-demos"]->description("Record num_demos expert demonstrations to demos_path");
  subs["train-repr"]->description("Pretrain the encoder; writes encoder_path and loss_path");
  subs["train-bc"]->description("Train the policy from demos_path and encoder_path");
  subs["eval"]->description("Evaluate policy_path on eval_suite and gen_suite; writes metrics_path");
  subs["ablate"]->description("Four-variant ablation over num_seeds seeds; writes metrics_path");
  subs["scoop-point"]->description("Print 'x y density boundary_distance' for a mask");
  subs["embed"]->description("Embed dataset images; writes embeddings_path and tsne_path");
  for (auto& [n, sub] : subs)
    if (n != "scoop-point") detail::add_common(sub, common);

  bool with_raw = false;
  subs["ablate"]->add_flag("--with-raw", with_raw, "also run the untrained-encoder baseline");

  std::string mask_path;
  int radius = 9;
  double margin = 3.0;
  subs["scoop-point"]->add_option("--mask", mask_path, "P2 PGM mask")->required()->check(CLI::ExistingFile);
  subs["scoop-point"]->add_option("--r", radius, "density window radius (pixels)")->capture_default_str();
  subs["scoop-point"]->add_option("--m", margin, "boundary margin (pixels)")->capture_default_str();

  std::string split_name = "test";
  int points = 300;
  double perplexity = 30.0;
  int iterations = 500;
  subs["embed"]->add_option("--split", split_name, "train, val or test")->capture_default_str();
  subs["embed"]->add_option("--points", points, "t-SNE points, at most 1000; 0 skips t-SNE")->capture_default_str();
  subs["embed"]->add_option("--perplexity", perplexity)->capture_default_str();
  subs["embed"]->add_option("--iters", iterations)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  auto log = [&](const std::string& msg) { err << msg << '\n'; };
  try {
    if (name == "scoop-point") {
      const ScoopPoint p = optimal_scoop_point(read_pgm(mask_path), radius, margin);
      out << format_scoop_point(p) << '\n';
      return 0;
    }

    const RunConfig cfg = detail::load_config(common);
    const std::string hash = config_hash(cfg);

    if (name == "gen-data") {
      const auto ds = gen_food_dataset(dataset_spec(cfg), seeds::dataset(cfg.seed));
      write_dataset_jsonl(cfg.dataset_path, ds, hash);
      out << "wrote " << ds.items.size() << " images to " << cfg.dataset_path << '\n';
    } else if (name == "gen-demos") {
      const auto demos = gen_demos(cfg.num_demos, env_suite(cfg.demo_suite), seeds::demos(cfg.seed));
      write_demos_jsonl(cfg.demos_path, demos, hash);
      out << "wrote " << demos.size() << " demonstrations to " << cfg.demos_path << '\n';
    } else if (name == "train-repr") {
      const SharedInputs in{read_dataset_jsonl(cfg.dataset_path),
                            cfg.weights.temp > 0.0 ? read_demos_jsonl(cfg.demos_path) : std::vector<Trajectory>{}};
      const auto r = pretrain(cfg, in, cfg.weights, cfg.seed);
      write_encoder(cfg.encoder_path, r.encoder, hash);
      write_loss_history_csv(cfg.loss_path, r, hash);
      char buf[256];
      std::snprintf(buf, sizeof buf, "L_z frozen batch %.6g -> %.6g\n", r.frozen_initial, r.history.back().frozen_total);
      out << buf;
      if (!in.dataset.indices(Split::test).empty()) {
        std::snprintf(buf, sizeof buf, "test type accuracy %.4f, fullness MAE %.4f\n",
                      type_accuracy(r.encoder, in.dataset, Split::test), fullness_mae(r.encoder, in.dataset, Split::test));
        out << buf;
      }
      out << "wrote " << cfg.encoder_path << " and " << cfg.loss_path << '\n';
    } else if (name == "train-bc") {
      const auto demos = read_demos_jsonl(cfg.demos_path);
      const auto r = train_bc(demos, read_encoder(cfg.encoder_path), bc_config(cfg), seeds::train_bc(cfg.seed));
      write_policy(cfg.policy_path, r.policy, hash);
      write_encoder(cfg.bc_encoder_path, r.encoder, hash);
      char buf[128];
      std::snprintf(buf, sizeof buf, "NLL %.6g -> %.6g\n", r.initial_nll, r.nll_history.back());
      out << buf << "wrote " << cfg.policy_path << " and " << cfg.bc_encoder_path << '\n';
    } else if (name == "eval") {
      const Encoder enc = read_encoder(cfg.bc_encoder_path);
      const PolicyParams policy = read_policy(cfg.policy_path);
      auto make = [&] { return PolicyController(enc, policy, cfg.density_radius, cfg.scoop_margin); };
      MetricsReport report{hash, {}};
      for (const auto& [suite, episodes] :
           {std::pair{cfg.eval_suite, cfg.eval_episodes}, std::pair{cfg.gen_suite, cfg.gen_episodes}}) {
        const auto m = evaluate_suite(make, env_suite(suite), eval_config(cfg, episodes), seeds::eval(cfg.seed, suite));
        append_suite(report, "policy", suite, cfg.seed, m);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-16s SUR %.3f SFR %.3f AFS %.4f\n", suite.c_str(), m.sur, m.sfr, m.afs);
        out << buf;
      }
      write_report(report, cfg.metrics_path);
      out << "wrote " << cfg.metrics_path << '\n';
    } else if (name == "ablate") {
      const auto t0 = std::chrono::steady_clock::now();
      const auto report = ablation_report(cfg, with_raw, [&](const std::string& v, const std::string& stage) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[128];
        std::snprintf(buf, sizeof buf, "[%7.1fs] %s: %s", s, v.c_str(), stage.c_str());
        log(buf);
      });
      write_report(report, cfg.metrics_path);
      for (const auto& s : summarize(report)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-13s %-16s SUR %.3f SFR %.3f AFS %.4f (%zu seeds)\n", s.variant.c_str(),
                      s.suite.c_str(), s.sur, s.sfr, s.afs, s.seeds);
        out << buf;
      }
      out << "wrote " << cfg.metrics_path << " and " << summary_path(cfg.metrics_path).string() << '\n';
    } else if (name == "embed") {
      Split split;
      try {
        split = parse_split(split_name);
      } catch (const IoError&) {
        throw ConfigError("--split must be train, val or test");
      }
      const Encoder enc = read_encoder(cfg.encoder_path);
      const auto ds = read_dataset_jsonl(cfg.dataset_path);
      const auto idx = ds.indices(split);
      if (idx.empty()) throw ConfigError("split '" + split_name + "' is empty");
      const Matrix emb = embed_split(enc, ds, split);
      std::vector<std::size_t> types, props;
      for (std::size_t i : idx) {
        types.push_back(ds.items[i].type_label);
        props.push_back(ds.items[i].property_label);
      }
      detail::write_embeddings_csv(cfg.embeddings_path, emb, types, props, hash);
      const auto m = embedding_metrics(emb, props);
      char buf[160];
      std::snprintf(buf, sizeof buf, "silhouette %.4f, intra/inter %.4f over %zu points\n", m.silhouette,
                    m.intra_inter_ratio, idx.size());
      out << buf;
      if (points > 0) {
        if (points > 1000) throw ConfigError("--points must be at most 1000");
        // evenly spaced subset, so every type is represented
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(points), idx.size());
        Matrix sub(static_cast<Eigen::Index>(n), emb.rows());
        std::vector<std::size_t> sub_props;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = i * idx.size() / n;
          sub.row(static_cast<Eigen::Index>(i)) = emb.col(static_cast<Eigen::Index>(j)).transpose();
          sub_props.push_back(props[j]);
        }
        TsneConfig tc;
        tc.perplexity = perplexity;
        tc.iterations = iterations;
        const auto t = tsne_2d(sub, tc, derive_seed(cfg.seed, "tsne"));
        auto f = open_for_write(cfg.tsne_path);
        f << "# config_hash=" << hash << "\nproperty,x,y\n";
        for (std::size_t i = 0; i < n; ++i) {
          std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", sub_props[i], t.coords(static_cast<Eigen::Index>(i), 0),
                        t.coords(static_cast<Eigen::Index>(i), 1));
          f << buf;
        }
        std::snprintf(buf, sizeof buf, "t-SNE KL %.4f -> %.4f\n", t.initial_kl, t.final_kl);
        out << buf;
      }
      out << "wrote " << cfg.embeddings_path << (points > 0 ? " and " + cfg.tsne_path : std::string()) << '\n';
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace imrl
