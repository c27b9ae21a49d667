#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cfrl/types.hpp"

namespace cfrl {

/// Static description of an environment's spaces.
struct EnvSpec {
  std::string env_id;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  Vec action_low;
  Vec action_high;
  /// Episode step cap.
  std::size_t horizon = 0;
  /// Affine normalisation hints for function approximators:
  /// (observable - obs_center) / obs_scale is roughly O(1).
  Vec obs_center;
  Vec obs_scale;

  void validate() const;
  Vec clip_action(std::span<const double> a) const;
  bool action_in_bounds(std::span<const double> a) const;
};

/// One auto-played step inside a constrained excursion.
struct ForcedStep {
  Vec state;
  Vec action;
  double reward = 0.0;
};

struct StepResult {
  EnvState next_state;
  /// Reward surfaced to the agent. For wrappers that auto-play steps this is
  /// the sum over every inner step taken by the call.
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
  /// Reward of the first inner step (the one driven by the caller's action).
  double inner_reward = 0.0;
  /// Inner steps auto-played after the caller's action, in temporal order.
  std::vector<ForcedStep> forced;

  std::size_t inner_steps() const noexcept { return 1 + forced.size(); }
};

/// Stateful simulator contract.
///
/// Stochastic events are driven by a noise stream whose key is part of the
/// internal state, so reset_to() replays the original realisation unless
/// reseed_noise() is called afterwards.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual EnvState reset(std::uint64_t seed) = 0;
  /// Throws std::domain_error if `state` was not produced by this kind of
  /// environment.
  virtual EnvState reset_to(const EnvState& state) = 0;
  /// reset_to() with a fresh noise stream, installed before anything is
  /// simulated.
  virtual EnvState reset_to(const EnvState& state, std::uint64_t noise_seed);
  virtual void reseed_noise(std::uint64_t seed) = 0;
  /// Throws std::domain_error on NaN or wrongly sized actions. Actions
  /// outside the bounds are clamped.
  virtual StepResult step(std::span<const double> action) = 0;
  virtual EnvState state() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Number of inner simulator steps the caller still intends to take.
  /// Wrappers that auto-play steps never exceed it.
  virtual void set_step_budget(std::size_t /*steps*/) {}
  /// Steps auto-played by the last reset/reset_to (wrappers only).
  virtual std::span<const ForcedStep> reset_excursion() const { return {}; }
};

/// Environments keyed by env_id; observed trajectories are replayed in the
/// variant named by their env_id.
class EnvPool {
 public:
  void add(std::unique_ptr<Environment> env);
  Environment& get(const std::string& env_id);
  const Environment& get(const std::string& env_id) const;
  bool contains(const std::string& env_id) const { return envs_.contains(env_id); }
  std::vector<std::string> ids() const;
  std::size_t size() const noexcept { return envs_.size(); }
  /// Spec of any member; all members share dimensions and bounds.
  const EnvSpec& spec() const;
  EnvPool clone() const;

 private:
  std::map<std::string, std::unique_ptr<Environment>> envs_;
};

/// Round-robin over K environment variants, rotating after `quota` steps.
class MultiEnvScheduler {
 public:
  MultiEnvScheduler(std::vector<std::unique_ptr<Environment>> variants, std::size_t quota);

  /// Variant for the next interaction step; consumes one unit of quota.
  Environment& next();
  /// Index of the variant returned by the most recent next().
  std::size_t current_index() const noexcept { return current_; }
  /// True when the most recent next() switched to a different variant.
  bool switched() const noexcept { return switched_; }
  std::size_t size() const noexcept { return variants_.size(); }
  Environment& variant(std::size_t i) { return *variants_.at(i); }
  const std::vector<std::size_t>& step_counts() const noexcept { return counts_; }
  std::size_t quota() const noexcept { return quota_; }

 private:
  std::vector<std::unique_ptr<Environment>> variants_;
  std::size_t quota_;
  std::size_t current_ = 0;
  std::size_t used_ = 0;
  bool started_ = false;
  bool switched_ = false;
  std::vector<std::size_t> counts_;
};

// Shared helpers for concrete environments.
void check_action(const EnvSpec& spec, std::span<const double> action);
void check_internal(const EnvState& state, double tag, std::size_t length, const char* env_name);

}  // namespace cfrl
