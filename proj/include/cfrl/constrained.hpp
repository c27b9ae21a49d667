#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfrl/env.hpp"
#include "cfrl/td3.hpp"
#include "cfrl/trajectory.hpp"

namespace cfrl {

/// Bound on one observable dimension.
struct Interval {
  std::size_t dim = 0;
  double low = -std::numeric_limits<double>::infinity();
  double high = std::numeric_limits<double>::infinity();
  bool low_open = false;
  bool high_open = false;

  bool contains(double x) const noexcept;
};

/// Membership in the constrained set: every listed interval holds.
struct IntervalPredicate {
  std::vector<Interval> intervals;

  bool operator()(const Vec& obs) const;
};

using ForcedPolicy = std::function<Vec(const Vec& obs)>;

enum class PolicyKind { Fixed, Baseline };

struct ConstraintSpec {
  std::function<bool(const Vec&)> contains;
  PolicyKind kind = PolicyKind::Fixed;
  ForcedPolicy policy;
  /// Cap on auto-played steps per excursion; unset means "remaining budget".
  std::optional<std::size_t> max_constrained_steps;

  static ConstraintSpec fixed(std::function<bool(const Vec&)> contains, Vec action);
  static ConstraintSpec baseline(std::function<bool(const Vec&)> contains,
                                 std::shared_ptr<const DeterministicPolicy> policy);
};

/// Wrapper that auto-plays the constrained policy whenever the inner
/// environment enters the constrained set, surfacing only states outside it.
class AugmentedEnv final : public Environment {
 public:
  AugmentedEnv(std::unique_ptr<Environment> inner, ConstraintSpec constraint);
  AugmentedEnv(const AugmentedEnv& other);

  const EnvSpec& spec() const override { return inner_->spec(); }
  EnvState reset(std::uint64_t seed) override;
  EnvState reset_to(const EnvState& state) override;
  EnvState reset_to(const EnvState& state, std::uint64_t noise_seed) override;
  void reseed_noise(std::uint64_t seed) override { inner_->reseed_noise(seed); }
  /// Applies `action` once, then the constrained policy while the successor
  /// stays constrained. Surfaces the sum of all rewards in the excursion.
  StepResult step(std::span<const double> action) override;
  EnvState state() const override { return inner_->state(); }
  std::unique_ptr<Environment> clone() const override;

  void set_step_budget(std::size_t steps) override { budget_ = steps; }
  std::span<const ForcedStep> reset_excursion() const override { return reset_log_; }
  bool reset_truncated() const noexcept { return reset_truncated_; }

  const Environment& inner() const noexcept { return *inner_; }
  const ConstraintSpec& constraint() const noexcept { return constraint_; }

 private:
  /// Plays forced steps from the current state, at most `cap` of them.
  /// Returns true if the cap stopped a still-constrained excursion.
  bool excursion(std::size_t cap, std::vector<ForcedStep>& log, double& reward_sum, bool& done);
  std::size_t forced_cap(std::size_t already_used) const;

  std::unique_ptr<Environment> inner_;
  ConstraintSpec constraint_;
  std::size_t budget_ = std::numeric_limits<std::size_t>::max();
  std::vector<ForcedStep> reset_log_;
  bool reset_truncated_ = false;
};

/// Inner-step record of a (possibly wrapped) rollout.
struct InnerRollout {
  std::vector<Step> steps;
  std::vector<bool> forced;
};

/// Observed and counterfactual action sequences aligned index by index over
/// the inner steps. With include_forced=false only agent-chosen indices are
/// kept. Throws std::domain_error when the inner step count differs from the
/// observed length.
std::pair<ActionSeq, ActionSeq> flatten_for_distance(const Trajectory& observed, const InnerRollout& rollout,
                                                     bool include_forced = true);

nlohmann::json to_json(const IntervalPredicate& p);
IntervalPredicate interval_predicate_from_json(const nlohmann::json& j);

}  // namespace cfrl
