#pragma once

// Closed-loop evaluation: per-environment success rate, failure rate and
// amount of food scooped over sequential attempts.

#include <string>
#include <vector>

#include "imrl/pipeline/demos.hpp"
#include "imrl/rng.hpp"
#include "imrl/simworld.hpp"

namespace imrl {

struct EvalConfig {
  std::size_t episodes = 50;  // single-attempt episodes, round-robin over the suite
  double fill_min = 0.35;
  double fill_max = 0.9;
  std::size_t afs_attempts = kDefaultAfsWindow;
  double afs_fill = 0.9;
  std::size_t afs_runs = 1;  // sequential runs per environment
  int max_steps = kMaxAttemptSteps;
};

struct EnvMetrics {
  std::string env;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::size_t spills = 0;
  std::size_t collisions = 0;
  double sur = 0.0;
  double sfr = 0.0;
  double afs = 0.0;  // mean over AFS runs
};

struct SuiteMetrics {
  std::vector<EnvMetrics> envs;
  double sur = 0.0;  // pooled over all episodes
  double sfr = 0.0;
  double afs = 0.0;  // mean over environments
  std::size_t episodes = 0;
};

inline void validate(const EvalConfig& c) {
  if (c.episodes < 1) throw ConfigError("evaluation needs at least one episode");
  if (!(c.fill_min > 0.0 && c.fill_min <= c.fill_max && c.fill_max <= 1.0))
    throw ConfigError("evaluation fill range must satisfy 0 < min <= max <= 1");
  if (!(c.afs_fill > 0.0 && c.afs_fill <= 1.0)) throw ConfigError("AFS start fill must be in (0, 1]");
  if (c.max_steps < 1) throw ConfigError("max_steps must be positive");
}

/// `make_controller()` returns an object with reset() and Pose operator()(const SimState&).
/// The controller is reset before every attempt.
template <typename MakeController>
SuiteMetrics evaluate_suite(MakeController&& make_controller, const std::vector<EnvSpec>& suite,
                            const EvalConfig& cfg, std::uint64_t seed, const SimParams& params = {}) {
  validate(cfg);
  if (suite.empty()) throw ConfigError("evaluation suite is empty");
  auto controller = make_controller();
  SuiteMetrics out;
  for (const auto& env : suite) out.envs.push_back({env.name});

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const std::size_t e = ep % suite.size();
    Rng rng(derive_seed(derive_seed(seed, "episodes"), ep));
    const double fill = rng.uniform(cfg.fill_min, cfg.fill_max);
    SimState s = make_env(suite[e].bowl, suite[e].food, fill, rng.next(), params);
    controller.reset();
    const StepOutcome o = run_attempt(s, controller, cfg.max_steps);
    EnvMetrics& m = out.envs[e];
    ++m.episodes;
    m.successes += is_success(o, params.success_threshold) ? 1 : 0;
    m.spills += o.spilled ? 1 : 0;
    m.collisions += o.collided_with_bowl ? 1 : 0;
  }

  for (std::size_t e = 0; e < suite.size(); ++e) {
    EnvMetrics& m = out.envs[e];
    double afs = 0.0;
    for (std::size_t r = 0; r < cfg.afs_runs; ++r) {
      const std::uint64_t run_seed = derive_seed(derive_seed(derive_seed(seed, "afs"), e), r);
      SimState s = make_env(suite[e].bowl, suite[e].food, cfg.afs_fill, run_seed, params);
      std::vector<StepOutcome> attempts;
      for (std::size_t a = 0; a < cfg.afs_attempts && s.fill > 0.0; ++a) {
        controller.reset();
        attempts.push_back(run_attempt(s, controller, cfg.max_steps));
      }
      if (!attempts.empty()) afs += episode_metrics(attempts, cfg.afs_attempts, params.success_threshold).afs;
    }
    m.afs = cfg.afs_runs ? afs / static_cast<double>(cfg.afs_runs) : 0.0;
    if (m.episodes) {
      m.sur = static_cast<double>(m.successes) / static_cast<double>(m.episodes);
      m.sfr = 1.0 - m.sur;
    }
    out.episodes += m.episodes;
    out.sur += static_cast<double>(m.successes);
    out.afs += m.afs;
  }
  out.sur /= static_cast<double>(out.episodes);
  out.sfr = 1.0 - out.sur;
  out.afs /= static_cast<double>(suite.size());
  return out;
}

/// The scripted expert as a controller, for reference runs.
struct ExpertController {
  void reset() {}
  Pose operator()(const SimState& s) const { return expert_action(s); }
};

}  // namespace imrl
