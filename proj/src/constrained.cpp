#include "cfrl/constrained.hpp"

#include <cmath>
#include <stdexcept>

namespace cfrl {

bool Interval::contains(double x) const noexcept {
  const bool above = low_open ? x > low : x >= low;
  const bool below = high_open ? x < high : x <= high;
  return above && below;
}

bool IntervalPredicate::operator()(const Vec& obs) const {
  if (intervals.empty()) return false;
  for (const auto& iv : intervals) {
    if (iv.dim >= obs.size()) throw std::domain_error("constraint predicate refers to a missing dimension");
    if (!iv.contains(obs[iv.dim])) return false;
  }
  return true;
}

ConstraintSpec ConstraintSpec::fixed(std::function<bool(const Vec&)> contains, Vec action) {
  ConstraintSpec c;
  c.contains = std::move(contains);
  c.kind = PolicyKind::Fixed;
  c.policy = [action = std::move(action)](const Vec&) { return action; };
  return c;
}

ConstraintSpec ConstraintSpec::baseline(std::function<bool(const Vec&)> contains,
                                        std::shared_ptr<const DeterministicPolicy> policy) {
  if (!policy) throw std::invalid_argument("constraint: null baseline policy");
  ConstraintSpec c;
  c.contains = std::move(contains);
  c.kind = PolicyKind::Baseline;
  c.policy = [policy = std::move(policy)](const Vec& obs) { return policy->act(obs); };
  return c;
}

AugmentedEnv::AugmentedEnv(std::unique_ptr<Environment> inner, ConstraintSpec constraint)
    : inner_(std::move(inner)), constraint_(std::move(constraint)) {
  if (!inner_) throw std::invalid_argument("AugmentedEnv: null inner environment");
  if (!constraint_.contains || !constraint_.policy) {
    throw std::invalid_argument("AugmentedEnv: constraint needs a predicate and a policy");
  }
  if (constraint_.kind == PolicyKind::Fixed) {
    const auto a = constraint_.policy(inner_->spec().obs_center);
    if (!inner_->spec().action_in_bounds(a)) {
      throw std::domain_error("AugmentedEnv: fixed constrained action lies outside the action bounds");
    }
  }
}

AugmentedEnv::AugmentedEnv(const AugmentedEnv& other)
    : Environment(other),
      inner_(other.inner_->clone()),
      constraint_(other.constraint_),
      budget_(other.budget_),
      reset_log_(other.reset_log_),
      reset_truncated_(other.reset_truncated_) {}

std::unique_ptr<Environment> AugmentedEnv::clone() const { return std::make_unique<AugmentedEnv>(*this); }

std::size_t AugmentedEnv::forced_cap(std::size_t already_used) const {
  const std::size_t remaining = budget_ > already_used ? budget_ - already_used : 0;
  return constraint_.max_constrained_steps ? std::min(*constraint_.max_constrained_steps, remaining) : remaining;
}

bool AugmentedEnv::excursion(std::size_t cap, std::vector<ForcedStep>& log, double& reward_sum, bool& done) {
  auto s = inner_->state();
  while (!done && constraint_.contains(s.observable)) {
    if (log.size() >= cap) return true;
    const Vec a = inner_->spec().clip_action(constraint_.policy(s.observable));
    auto r = inner_->step(a);
    log.push_back({s.observable, a, r.reward});
    reward_sum += r.reward;
    done = r.done;
    s = std::move(r.next_state);
  }
  return false;
}

EnvState AugmentedEnv::reset(std::uint64_t seed) {
  inner_->reset(seed);
  reset_log_.clear();
  double sum = 0.0;
  bool done = false;
  reset_truncated_ = excursion(forced_cap(0), reset_log_, sum, done);
  return inner_->state();
}

EnvState AugmentedEnv::reset_to(const EnvState& state) {
  inner_->reset_to(state);
  reset_log_.clear();
  double sum = 0.0;
  bool done = false;
  reset_truncated_ = excursion(forced_cap(0), reset_log_, sum, done);
  return inner_->state();
}

EnvState AugmentedEnv::reset_to(const EnvState& state, std::uint64_t noise_seed) {
  inner_->reset_to(state, noise_seed);
  reset_log_.clear();
  double sum = 0.0;
  bool done = false;
  reset_truncated_ = excursion(forced_cap(0), reset_log_, sum, done);
  return inner_->state();
}

StepResult AugmentedEnv::step(std::span<const double> action) {
  auto first = inner_->step(action);
  StepResult out;
  out.inner_reward = first.reward;
  double sum = first.reward;
  bool done = first.done;
  out.truncated = excursion(forced_cap(1), out.forced, sum, done);
  out.reward = sum;
  out.done = done || out.truncated;
  out.next_state = inner_->state();
  return out;
}

std::pair<ActionSeq, ActionSeq> flatten_for_distance(const Trajectory& observed, const InnerRollout& rollout,
                                                     bool include_forced) {
  if (rollout.steps.size() != observed.size()) {
    throw std::domain_error("flatten_for_distance: rollout has " + std::to_string(rollout.steps.size()) +
                            " inner steps, observed trajectory has " + std::to_string(observed.size()));
  }
  if (!rollout.forced.empty() && rollout.forced.size() != rollout.steps.size()) {
    throw std::domain_error("flatten_for_distance: forced mask length mismatch");
  }
  ActionSeq obs;
  ActionSeq cf;
  for (std::size_t i = 0; i < rollout.steps.size(); ++i) {
    const bool forced = !rollout.forced.empty() && rollout.forced[i];
    if (forced && !include_forced) continue;
    obs.push_back(observed[i].action);
    cf.push_back(rollout.steps[i].action);
  }
  return {std::move(obs), std::move(cf)};
}

nlohmann::json to_json(const IntervalPredicate& p) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& iv : p.intervals) {
    nlohmann::json j{{"dim", iv.dim}, {"low_open", iv.low_open}, {"high_open", iv.high_open}};
    if (std::isfinite(iv.low)) j["low"] = iv.low;
    if (std::isfinite(iv.high)) j["high"] = iv.high;
    arr.push_back(std::move(j));
  }
  return arr;
}

IntervalPredicate interval_predicate_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("constraint.intervals must be a non-empty array");
  IntervalPredicate p;
  for (const auto& e : j) {
    for (const auto& [key, _] : e.items()) {
      if (key != "dim" && key != "low" && key != "high" && key != "low_open" && key != "high_open") {
        throw std::invalid_argument("constraint interval: unknown key '" + key + "'");
      }
    }
    Interval iv;
    iv.dim = e.at("dim").get<std::size_t>();
    if (e.contains("low")) iv.low = e["low"].get<double>();
    if (e.contains("high")) iv.high = e["high"].get<double>();
    iv.low_open = e.value("low_open", false);
    iv.high_open = e.value("high_open", false);
    if (!(iv.low <= iv.high)) throw std::invalid_argument("constraint interval: low > high");
    p.intervals.push_back(iv);
  }
  return p;
}

}  // namespace cfrl
