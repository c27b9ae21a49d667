#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrl/env.hpp"
#include "cfrl/nn.hpp"
#include "cfrl/rng.hpp"

namespace cfrl {

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
};

/// Columns are samples. Actions are stored in environment units.
struct Batch {
  nn::Matrix s;
  nn::Matrix a;
  nn::Vector r;
  nn::Matrix s_next;
  nn::Vector done;

  Eigen::Index size() const noexcept { return s.cols(); }
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim);

  /// Throws std::domain_error on wrongly sized or non-finite transitions.
  void push(Transition t);
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t insertions() const noexcept { return insertions_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }

  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  Batch gather(std::span<const std::size_t> indices) const;
  Batch sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  std::vector<Transition> data_;
  std::size_t head_ = 0;
  std::size_t insertions_ = 0;
};

/// Noise magnitudes are expressed in normalised action units, where the
/// action box maps onto [-1, 1]; explore_sigma = 0.2 is 10% of the range.
struct Td3Hyper {
  double gamma = 0.99;
  double eta = 0.005;
  std::size_t policy_delay = 2;
  double explore_sigma = 0.2;
  double target_sigma = 0.2;
  double target_clip = 0.5;
  std::size_t batch_size = 256;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  /// Gradient iterations per update() call.
  std::size_t gradient_steps = 1;
  /// Environment steps between update() calls during online training.
  std::size_t train_freq = 1;
  /// Transitions collected before the first update.
  std::size_t warmup = 1000;
  std::size_t buffer_capacity = 200000;
  std::vector<std::size_t> hidden = {256, 256};
  /// Online training only: uniform random actions during warm-up.
  bool random_warmup_actions = true;

  void validate() const;
};

nlohmann::json to_json(const Td3Hyper& h);
Td3Hyper td3_hyper_from_json(const nlohmann::json& j);

/// Immutable deterministic policy: observation normalisation plus actor.
class DeterministicPolicy {
 public:
  DeterministicPolicy(nn::Mlp actor, Vec obs_center, Vec obs_scale);

  Vec act(std::span<const double> obs) const;
  const nn::Mlp& actor() const noexcept { return actor_; }

 private:
  nn::Mlp actor_;
  Vec obs_center_;
  Vec obs_scale_;
};

struct LossReport {
  std::size_t critic_updates = 0;
  std::size_t actor_updates = 0;
  double critic_loss = 0.0;  // mean over iterations, averaged across both critics
  std::optional<double> actor_loss;
  bool skipped = false;
  std::string warning;
};

/// Twin-critic deterministic actor-critic learner with target smoothing and
/// delayed policy updates.
class Td3Agent {
 public:
  Td3Agent(const EnvSpec& spec, Td3Hyper hyper, std::uint64_t seed);

  /// explore=false returns the actor output exactly; explore=true adds
  /// N(0, explore_sigma) in normalised units and clips to the action box.
  Vec select_action(std::span<const double> obs, bool explore);

  /// y = r + gamma (1 - done) min_j Q'_j(s', clip(pi'(s') + clip(eps, -c, c))).
  nn::Vector compute_target(const Batch& batch);
  /// Same with caller-supplied smoothing noise (normalised units, before
  /// clipping to +-c).
  nn::Vector compute_target(const Batch& batch, const nn::Matrix& noise) const;

  /// gradient_steps critic iterations; every policy_delay-th iteration also
  /// updates the actor and soft-updates all targets.
  /// Throws TrainingError on non-finite losses.
  LossReport update();

  std::shared_ptr<const DeterministicPolicy> policy_snapshot() const;

  const EnvSpec& spec() const noexcept { return spec_; }
  const Td3Hyper& hyper() const noexcept { return hyper_; }
  Td3Hyper& hyper() noexcept { return hyper_; }
  ReplayBuffer& buffer() noexcept { return buffer_; }
  const ReplayBuffer& buffer() const noexcept { return buffer_; }
  Rng& rng() noexcept { return explore_rng_; }

  nn::Mlp& actor() noexcept { return actor_; }
  nn::Mlp& critic1() noexcept { return critic1_; }
  nn::Mlp& critic2() noexcept { return critic2_; }
  nn::Mlp& actor_target() noexcept { return actor_t_; }
  nn::Mlp& critic1_target() noexcept { return critic1_t_; }
  nn::Mlp& critic2_target() noexcept { return critic2_t_; }
  const nn::Mlp& actor() const noexcept { return actor_; }
  const nn::Mlp& critic1() const noexcept { return critic1_; }
  const nn::Mlp& critic2() const noexcept { return critic2_; }
  const nn::Mlp& actor_target() const noexcept { return actor_t_; }
  const nn::Mlp& critic1_target() const noexcept { return critic1_t_; }
  const nn::Mlp& critic2_target() const noexcept { return critic2_t_; }
  std::size_t iterations() const noexcept { return iterations_; }
  std::size_t actor_updates() const noexcept { return actor_updates_; }

  /// One critic-only gradient iteration on a fixed batch; returns the mean
  /// squared TD error of critic 1 before the step.
  double critic_step(const Batch& batch, const nn::Vector& y);

  nn::Matrix normalize_obs(const nn::Matrix& obs) const;
  nn::Matrix normalize_action(const nn::Matrix& a) const;
  nn::Matrix denormalize_action(const nn::Matrix& a) const;

  /// Agent checkpoint: networks, optimiser moments, hyperparameters and the
  /// spec they were trained against. The replay buffer is not stored.
  nlohmann::json checkpoint() const;
  static Td3Agent from_checkpoint(const nlohmann::json& j, const EnvSpec& spec, std::uint64_t seed);

 private:
  nn::Matrix critic_input(const nn::Matrix& s_norm, const nn::Matrix& a_norm) const;
  double actor_step(const Batch& batch);

  EnvSpec spec_;
  Td3Hyper hyper_;
  nn::Mlp actor_, critic1_, critic2_;
  nn::Mlp actor_t_, critic1_t_, critic2_t_;
  nn::AdamState actor_opt_, critic1_opt_, critic2_opt_;
  ReplayBuffer buffer_;
  Rng explore_rng_;
  Rng replay_rng_;
  Rng target_rng_;
  std::size_t iterations_ = 0;
  std::size_t actor_updates_ = 0;
};

struct TrainLogRow {
  std::size_t step = 0;
  double critic_loss = 0.0;
  std::optional<double> actor_loss;
};

struct BaselineResult {
  Td3Agent agent;
  std::vector<double> episode_returns;
  std::vector<std::size_t> steps_per_variant;
};

using TrainLogFn = std::function<void(const TrainLogRow&)>;

/// Online training for `steps` environment interactions, cycling through the
/// scheduler's variants. Episodes restart whenever the variant changes.
BaselineResult train_baseline(MultiEnvScheduler& scheduler, std::size_t steps, const Td3Hyper& hyper,
                              std::uint64_t seed, const TrainLogFn& log = {});
BaselineResult train_baseline(const Environment& env, std::size_t steps, const Td3Hyper& hyper,
                              std::uint64_t seed, const TrainLogFn& log = {});

/// Mean undiscounted return of `policy` over `episodes` episodes started
/// with reset(seed_k), seed_k derived from `seed`.
double evaluate_policy(const DeterministicPolicy& policy, Environment& env, std::size_t episodes,
                       std::uint64_t seed);

}  // namespace cfrl
