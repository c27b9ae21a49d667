#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cfrl/cf_result.hpp"
#include "cfrl/env.hpp"
#include "cfrl/metrics.hpp"
#include "cfrl/td3.hpp"
#include "cfrl/trajectory.hpp"

namespace cfrl {

struct CfConfig {
  /// Weight of the terminal distance penalty.
  double lambda = 1.0;
  /// Outer iterations (observed trajectories sampled).
  std::size_t n_observed = 0;
  /// Exploratory counterfactual rollouts per sampled observed trajectory.
  std::size_t n_cf = 1;
  /// Interaction-step period of learning-curve evaluations; 0 disables them.
  std::size_t eval_every = 400;
  /// Counterfactual rollouts per test trajectory at evaluation.
  std::size_t eval_rollouts = 10;
  DistanceParams distance;
  /// Replay the observed trajectory's noise realisation instead of drawing
  /// fresh environment noise.
  bool replay_noise = false;
  /// Count auto-played constrained actions in the distance.
  bool distance_includes_forced = true;

  void validate() const;
};

/// An environment episode with the full simulator state before every step.
struct RecordedEpisode {
  Trajectory trajectory;
  std::vector<EnvState> states;
};

RecordedEpisode record_episode(const DeterministicPolicy& policy, Environment& env, std::uint64_t reset_seed,
                               std::size_t max_steps);

/// Windows [j*stride, j*stride + window) over the episode; each carries the
/// simulator state at its first step. A window longer than the episode
/// yields an empty list and a warning.
std::vector<Trajectory> sliding_window_dataset(const RecordedEpisode& episode, std::size_t window,
                                               std::size_t stride);

struct RolloutOutput {
  CfResult result;
  /// Surfaced transitions for the replay buffer; the last one carries the
  /// distance-penalised reward.
  std::vector<Transition> transitions;
};

using ActionFn = std::function<Vec(const Vec& obs)>;

/// Restarts `env` from the observed start state and plays `choose` until as
/// many inner steps as the observed trajectory has were taken (auto-played
/// constrained steps included). `noise_seed` installs fresh environment
/// noise; nullopt replays the recorded realisation.
RolloutOutput rollout_counterfactual(const ActionFn& choose, Environment& env, const Trajectory& observed,
                                     const CfConfig& cfg, std::optional<std::uint64_t> noise_seed);
RolloutOutput rollout_counterfactual(Td3Agent& agent, Environment& env, const Trajectory& observed,
                                     const CfConfig& cfg, bool explore,
                                     std::optional<std::uint64_t> noise_seed = std::nullopt);

/// Noise seed used for rollout `k` of test trajectory `i` at evaluation.
std::uint64_t eval_noise_seed(std::uint64_t eval_seed, std::size_t i, std::size_t k);

/// Deterministic rollouts per test trajectory; the best positive is the one
/// with minimal distance (first wins ties).
MethodEval evaluate_cf(const DeterministicPolicy& policy, EnvPool& envs, const std::vector<Trajectory>& test_set,
                       const CfConfig& cfg, std::uint64_t eval_seed);

/// Same protocol with the trajectory-generating policy on unwrapped
/// environments.
MethodEval baseline_counterfactuals(const DeterministicPolicy& baseline, EnvPool& envs,
                                    const std::vector<Trajectory>& test_set, const CfConfig& cfg,
                                    std::uint64_t eval_seed);

struct CfEvalSetup {
  const std::vector<Trajectory>* test_set = nullptr;
  const MethodEval* baseline = nullptr;
  std::uint64_t eval_seed = 0;
};

struct TrainCfResult {
  std::vector<CurveRow> curve;
  std::size_t interactions = 0;
  std::size_t iterations = 0;
  std::size_t updates = 0;
};

using CurveFn = std::function<void(const CurveRow&)>;

/// Outer loop: sample an observed trajectory uniformly, push n_cf
/// exploratory counterfactual rollouts into the buffer, then update the
/// agent. Evaluates every eval_every interaction steps when `eval` is given.
TrainCfResult train_cf(Td3Agent& agent, EnvPool& envs, const std::vector<Trajectory>& dataset,
                       const CfConfig& cfg, std::uint64_t seed, const CfEvalSetup* eval = nullptr,
                       const TrainLogFn& log = {}, const CurveFn& on_curve = {});

}  // namespace cfrl
