#pragma once

// Scripted-expert demonstrations and their JSON-lines representation.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "imrl/geometry.hpp"
#include "imrl/io.hpp"
#include "imrl/rng.hpp"
#include "imrl/simworld.hpp"

namespace imrl {

struct TrajectoryStep {
  RgbImage environment;
  RgbImage hand;
  Pose proprio{};
  std::optional<Pose> action;  // empty on the terminal frame
  BinaryMask mask;
  double fill = 0.0;
};

struct Trajectory {
  std::string env_name;
  std::string food;
  PropertyClass property = PropertyClass::granular;
  std::vector<TrajectoryStep> steps;

  std::size_t action_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.action ? 1 : 0;
    return n;
  }
};

inline constexpr double kDemoFillMin = 0.3;
inline constexpr double kDemoFillMax = 0.9;
inline constexpr int kMaxAttemptSteps = 32;

/// One expert attempt per demonstration, cycling through the suite. Each
/// episode draws its own fill level and food placement.
inline std::vector<Trajectory> gen_demos(int n, const std::vector<EnvSpec>& suite, std::uint64_t seed,
                                         const SimParams& params = {}) {
  if (n < 1) throw ConfigError("demo count must be at least 1");
  if (suite.empty()) throw ConfigError("demo suite is empty");
  std::vector<Trajectory> demos;
  for (int i = 0; i < n; ++i) {
    const EnvSpec& env = suite[static_cast<std::size_t>(i) % suite.size()];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const double fill = rng.uniform(kDemoFillMin, kDemoFillMax);
    SimState state = make_env(env.bowl, env.food, fill, rng.next(), params);
    Trajectory traj{env.name, env.food.name, env.food.property, {}};
    bool swept = false;
    for (int t = 0; t < kMaxAttemptSteps; ++t) {
      Observation obs = render(state);
      const Pose action = expert_action(state);
      traj.steps.push_back({std::move(obs.environment), std::move(obs.hand), obs.proprio, action, food_mask(state),
                            state.fill});
      const Pose previous = state.pose;
      step_in_place(state, action);
      if (previous[pose_index::sweep] < 0.0 && state.pose[pose_index::sweep] >= 0.0) swept = true;
      if (attempt_finished(state, swept)) break;
    }
    Observation last = render(state);
    traj.steps.push_back(
        {std::move(last.environment), std::move(last.hand), last.proprio, std::nullopt, food_mask(state), state.fill});
    demos.push_back(std::move(traj));
  }
  return demos;
}

inline std::string mask_filename(std::size_t episode, std::size_t t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "ep%03zu_t%03zu.pgm", episode, t);
  return buf;
}

/// One JSON record per timestep; masks go to `<mask_dir>/epXXX_tYYY.pgm` and
/// are referenced relative to the JSONL file's directory.
inline void write_demos_jsonl(const std::filesystem::path& path, const std::vector<Trajectory>& demos,
                              const std::string& config_hash) {
  const std::filesystem::path base = path.parent_path();
  const std::filesystem::path mask_dir = path.stem().string() + "_masks";
  std::filesystem::create_directories(base / mask_dir);
  auto out = open_for_write(path);
  for (std::size_t e = 0; e < demos.size(); ++e) {
    const Trajectory& traj = demos[e];
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const TrajectoryStep& st = traj.steps[t];
      const std::string mask_rel = (mask_dir / mask_filename(e, t)).generic_string();
      write_pgm((base / mask_rel).string(), st.mask);
      nlohmann::ordered_json rec;
      rec["config_hash"] = config_hash;
      rec["episode"] = e;
      rec["t"] = t;
      rec["env"] = traj.env_name;
      rec["food"] = traj.food;
      rec["property"] = std::string(to_string(traj.property));
      rec["fill"] = st.fill;
      rec["environment_image"] = image_to_json(st.environment);
      rec["hand_image"] = image_to_json(st.hand);
      rec["proprio"] = st.proprio;
      rec["action"] = st.action ? nlohmann::ordered_json(*st.action) : nlohmann::ordered_json(nullptr);
      rec["mask"] = mask_rel;
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<Trajectory> read_demos_jsonl(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  const std::filesystem::path base = path.parent_path();
  std::vector<Trajectory> demos;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      const auto episode = rec.at("episode").get<std::size_t>();
      if (episode == demos.size()) {
        demos.push_back({rec.at("env").get<std::string>(), rec.at("food").get<std::string>(),
                         parse_property(rec.at("property").get<std::string>()), {}});
      } else if (episode + 1 != demos.size()) {
        throw IoError("episodes must be contiguous");
      }
      TrajectoryStep st;
      st.environment = image_from_json(rec.at("environment_image"));
      st.hand = image_from_json(rec.at("hand_image"));
      st.proprio = rec.at("proprio").get<Pose>();
      if (!rec.at("action").is_null()) st.action = rec.at("action").get<Pose>();
      st.mask = read_pgm((base / rec.at("mask").get<std::string>()).string());
      st.fill = rec.at("fill").get<double>();
      demos.back().steps.push_back(std::move(st));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return demos;
}

}  // namespace imrl
