#pragma once

// Flat key=value run configuration. Unknown keys and out-of-range values are
// rejected with the key name; omitted keys keep their defaults.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imrl/errors.hpp"
#include "imrl/losses.hpp"
#include "imrl/rng.hpp"

namespace imrl {

struct RunConfig {
  std::uint64_t seed = 0;
  int num_seeds = 3;  // ablate: seeds seed, seed+1, ...

  // image dataset
  int train_per_type = 200;
  int val_per_type = 10;
  int test_per_type = 20;

  // representation pretraining
  LossWeights weights;
  double margin_alpha = 0.2;
  int repr_epochs = 20;
  int repr_batch = 64;
  int temporal_batch = 16;
  double repr_lr = 1e-3;
  std::vector<std::size_t> trunk_dims = {3072, 256, 64, 32};
  int temporal_frames = 4;  // N
  int temporal_hidden = 64;

  // geometry
  int density_radius = 9;     // r, odd window side in pixels
  double scoop_margin = 3.0;  // m, pixels
  double fullness_label = 0.8;  // fill of the reference render used for the fullness spot check

  // demonstrations and behaviour cloning
  int num_demos = 30;
  std::string demo_suite = "in_distribution";
  int history = 4;  // k
  int bc_epochs = 1000;
  int bc_batch = 64;
  double bc_lr = 1e-3;
  std::vector<std::size_t> bc_hidden = {256, 256};
  bool finetune_encoder = false;
  double encoder_lr = 1e-4;
  double feature_noise = 1.0;
  double min_input_std = 1.0;

  // evaluation
  int eval_episodes = 50;
  int gen_episodes = 70;
  int afs_attempts = 10;
  int afs_runs = 1;
  std::string eval_suite = "in_distribution";
  std::string gen_suite = "generalization";

  // artifacts
  std::string dataset_path = "out/dataset.jsonl";
  std::string demos_path = "out/demos.jsonl";
  std::string encoder_path = "out/encoder.bin";
  std::string policy_path = "out/policy.bin";
  std::string bc_encoder_path = "out/encoder_bc.bin";  // encoder paired with the policy
  std::string loss_path = "out/loss_history.csv";
  std::string metrics_path = "out/metrics.csv";
  std::string embeddings_path = "out/embeddings.csv";
  std::string tsne_path = "out/tsne.csv";
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

/// One configurable key: how to read, write and validate it.
struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
ConfigKey int_key(std::string name, T RunConfig::*field, long long lo, long long hi) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            const long long x = parse_int(name, v);
            if (x < lo || x > hi)
              throw ConfigError(name + ": " + v + " is outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            c.*field = static_cast<T>(x);
          },
          [=](const RunConfig& c) { return std::to_string(c.*field); }};
}

inline ConfigKey double_key(std::string name, double RunConfig::*field, double lo, double hi, bool open_lo = false) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            const double x = parse_double(name, v);
            if (x < lo || x > hi || (open_lo && x == lo))
              throw ConfigError(name + ": " + v + " is outside " + (open_lo ? "(" : "[") + format_double(lo) + ", " +
                                format_double(hi) + "]");
            c.*field = x;
          },
          [=](const RunConfig& c) { return format_double(c.*field); }};
}

inline ConfigKey weight_key(std::string name, double LossWeights::*field) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            const double x = parse_double(name, v);
            if (x < 0.0) throw ConfigError(name + ": must be non-negative, got " + v);
            c.weights.*field = x;
          },
          [=](const RunConfig& c) { return format_double(c.weights.*field); }};
}

inline ConfigKey string_key(std::string name, std::string RunConfig::*field, std::set<std::string> allowed = {}) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            if (v.empty()) throw ConfigError(name + ": value is empty");
            if (!allowed.empty() && !allowed.count(v)) throw ConfigError(name + ": unknown value '" + v + "'");
            c.*field = v;
          },
          [=](const RunConfig& c) { return c.*field; }};
}

inline ConfigKey bool_key(std::string name, bool RunConfig::*field) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            if (v == "true" || v == "1") c.*field = true;
            else if (v == "false" || v == "0") c.*field = false;
            else throw ConfigError(name + ": expected true or false, got '" + v + "'");
          },
          [=](const RunConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

inline ConfigKey dims_key(std::string name, std::vector<std::size_t> RunConfig::*field, std::size_t min_count) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            std::vector<std::size_t> dims;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) {
              const long long d = parse_int(name, trim(item));
              if (d < 1 || d > 100000) throw ConfigError(name + ": layer sizes must lie in [1, 100000]");
              dims.push_back(static_cast<std::size_t>(d));
            }
            if (dims.size() < min_count)
              throw ConfigError(name + ": expected at least " + std::to_string(min_count) + " sizes");
            c.*field = dims;
          },
          [=](const RunConfig& c) {
            std::string out;
            for (std::size_t i = 0; i < (c.*field).size(); ++i) out += (i ? "," : "") + std::to_string((c.*field)[i]);
            return out;
          }};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    const std::set<std::string> suites{"in_distribution", "generalization"};
    constexpr long long kBig = 1000000;
    return std::vector<ConfigKey>{
        {"seed",
         [](RunConfig& c, const std::string& v) {
           std::uint64_t x = 0;
           const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
           if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("seed: expected an unsigned integer");
           c.seed = x;
         },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        int_key("num_seeds", &RunConfig::num_seeds, 1, 100),
        int_key("train_per_type", &RunConfig::train_per_type, 1, kBig),
        int_key("val_per_type", &RunConfig::val_per_type, 0, kBig),
        int_key("test_per_type", &RunConfig::test_per_type, 0, kBig),
        weight_key("lambda_ce", &LossWeights::ce),
        weight_key("lambda_tri", &LossWeights::tri),
        weight_key("lambda_temp", &LossWeights::temp),
        weight_key("lambda_full", &LossWeights::full),
        double_key("margin_alpha", &RunConfig::margin_alpha, 0.0, 1e6),
        int_key("repr_epochs", &RunConfig::repr_epochs, 1, kBig),
        int_key("repr_batch", &RunConfig::repr_batch, 2, kBig),
        int_key("temporal_batch", &RunConfig::temporal_batch, 1, kBig),
        double_key("repr_lr", &RunConfig::repr_lr, 0.0, 1.0, true),
        dims_key("trunk_dims", &RunConfig::trunk_dims, 2),
        int_key("temporal_frames", &RunConfig::temporal_frames, 2, 16),
        int_key("temporal_hidden", &RunConfig::temporal_hidden, 1, 100000),
        int_key("density_radius", &RunConfig::density_radius, 1, 63),
        double_key("scoop_margin", &RunConfig::scoop_margin, 0.0, 64.0),
        double_key("fullness_label", &RunConfig::fullness_label, 0.0, 1.0),
        int_key("num_demos", &RunConfig::num_demos, 1, kBig),
        string_key("demo_suite", &RunConfig::demo_suite, suites),
        int_key("history", &RunConfig::history, 1, 64),
        int_key("bc_epochs", &RunConfig::bc_epochs, 1, kBig),
        int_key("bc_batch", &RunConfig::bc_batch, 1, kBig),
        double_key("bc_lr", &RunConfig::bc_lr, 0.0, 1.0, true),
        dims_key("bc_hidden", &RunConfig::bc_hidden, 0),
        bool_key("finetune_encoder", &RunConfig::finetune_encoder),
        double_key("encoder_lr", &RunConfig::encoder_lr, 0.0, 1.0),
        double_key("feature_noise", &RunConfig::feature_noise, 0.0, 100.0),
        double_key("min_input_std", &RunConfig::min_input_std, 0.0, 1e6),
        int_key("eval_episodes", &RunConfig::eval_episodes, 1, kBig),
        int_key("gen_episodes", &RunConfig::gen_episodes, 1, kBig),
        int_key("afs_attempts", &RunConfig::afs_attempts, 1, 1000),
        int_key("afs_runs", &RunConfig::afs_runs, 0, 1000),
        string_key("eval_suite", &RunConfig::eval_suite, suites),
        string_key("gen_suite", &RunConfig::gen_suite, suites),
        string_key("dataset_path", &RunConfig::dataset_path),
        string_key("demos_path", &RunConfig::demos_path),
        string_key("encoder_path", &RunConfig::encoder_path),
        string_key("policy_path", &RunConfig::policy_path),
        string_key("bc_encoder_path", &RunConfig::bc_encoder_path),
        string_key("loss_path", &RunConfig::loss_path),
        string_key("metrics_path", &RunConfig::metrics_path),
        string_key("embeddings_path", &RunConfig::embeddings_path),
        string_key("tsne_path", &RunConfig::tsne_path),
    };
  }();
  return keys;
}

}  // namespace detail

/// Cross-field checks that single-key ranges cannot express.
inline void validate(const RunConfig& c) {
  if (c.trunk_dims.front() != 3072) throw ConfigError("trunk_dims: input size must be 3072 (32x32 RGB)");
  if (c.density_radius % 2 == 0) throw ConfigError("density_radius: window side must be odd");
}

/// Applies `key=value` lines. Blank lines and '#' comments are ignored.
inline RunConfig parse_config_text(std::string_view text, RunConfig base = {}) {
  std::map<std::string, const detail::ConfigKey*> index;
  for (const auto& k : detail::config_keys()) index[k.name] = &k;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError("unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(key + ": given more than once");
    it->second->set(base, value);
  }
  validate(base);
  return base;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Every key in table order with its canonical value.
inline std::string canonical_config(const RunConfig& c) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + "=" + k.get(c) + "\n";
  return out;
}

/// Configs with equal canonical text hash equally; 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_config(c))));
  return buf;
}

}  // namespace imrl
