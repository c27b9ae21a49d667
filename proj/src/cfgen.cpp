#include "cfrl/cfgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfrl/constrained.hpp"
#include "cfrl/log.hpp"
#include "cfrl/rng.hpp"

namespace cfrl {

void CfConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("cf: lambda must be finite and >= 0");
  if (eval_rollouts < 1) throw std::invalid_argument("cf: eval_rollouts must be >= 1");
  distance.validate();
}

RecordedEpisode record_episode(const DeterministicPolicy& policy, Environment& env, std::uint64_t reset_seed,
                               std::size_t max_steps) {
  RecordedEpisode ep;
  std::vector<Step> steps;
  auto s = env.reset(reset_seed);
  for (std::size_t t = 0; t < max_steps; ++t) {
    ep.states.push_back(s);
    const Vec a = env.spec().clip_action(policy.act(s.observable));
    auto r = env.step(a);
    steps.push_back({s.observable, a, r.reward});
    s = std::move(r.next_state);
    if (r.done) break;
  }
  ep.trajectory = Trajectory(std::move(steps), env.spec().env_id, ep.states.empty() ? std::nullopt
                                                                                      : std::optional(ep.states[0]));
  return ep;
}

std::vector<Trajectory> sliding_window_dataset(const RecordedEpisode& episode, std::size_t window,
                                               std::size_t stride) {
  if (window < 1 || stride < 1) throw std::domain_error("sliding window: window and stride must be >= 1");
  const auto& traj = episode.trajectory;
  if (episode.states.size() != traj.size()) throw std::domain_error("sliding window: state record length mismatch");
  std::vector<Trajectory> out;
  if (window > traj.size()) {
    warn("sliding window of " + std::to_string(window) + " steps exceeds trajectory length " +
         std::to_string(traj.size()));
    return out;
  }
  for (std::size_t start = 0; start + window <= traj.size(); start += stride) {
    std::vector<Step> steps(traj.steps().begin() + static_cast<std::ptrdiff_t>(start),
                            traj.steps().begin() + static_cast<std::ptrdiff_t>(start + window));
    nlohmann::json meta = traj.meta();
    meta["window_start"] = start;
    out.emplace_back(std::move(steps), traj.env_id(), episode.states[start], std::move(meta));
  }
  return out;
}

RolloutOutput rollout_counterfactual(const ActionFn& choose, Environment& env, const Trajectory& observed,
                                     const CfConfig& cfg, std::optional<std::uint64_t> noise_seed) {
  const auto& spec = env.spec();
  if (observed.empty()) throw std::domain_error("rollout: observed trajectory is empty");
  if (observed.state_dim() != spec.state_dim || observed.action_dim() != spec.action_dim) {
    throw std::domain_error("rollout: observed trajectory dimensions do not match environment " + spec.env_id);
  }
  if (!observed.start()) throw std::domain_error("rollout: observed trajectory has no restorable start state");

  const std::size_t length = observed.size();
  env.set_step_budget(length);
  EnvState s = noise_seed ? env.reset_to(*observed.start(), *noise_seed) : env.reset_to(*observed.start());

  InnerRollout inner;
  RolloutOutput out;
  auto& res = out.result;
  double carried = 0.0;  // rewards of steps auto-played before the first decision
  for (const auto& f : env.reset_excursion()) {
    inner.steps.push_back({f.state, f.action, f.reward});
    inner.forced.push_back(true);
    carried += f.reward;
  }
  res.initial_constrained = !inner.steps.empty();

  bool ended = false;
  while (inner.steps.size() < length && !ended) {
    env.set_step_budget(length - inner.steps.size());
    const Vec a = spec.clip_action(choose(s.observable));
    auto r = env.step(a);
    inner.steps.push_back({s.observable, a, r.inner_reward});
    inner.forced.push_back(false);
    for (auto& f : r.forced) {
      inner.steps.push_back({std::move(f.state), std::move(f.action), f.reward});
      inner.forced.push_back(true);
    }
    out.transitions.push_back({s.observable, a, r.reward + carried, r.next_state.observable, r.done});
    carried = 0.0;
    res.truncated = res.truncated || r.truncated;
    s = std::move(r.next_state);
    ended = r.done;
  }
  // An episode that ends early is padded with idle steps so the action
  // sequences stay aligned.
  if (inner.steps.size() < length) {
    const Vec idle = spec.clip_action(Vec(spec.action_dim, 0.0));
    while (inner.steps.size() < length) {
      inner.steps.push_back({s.observable, idle, 0.0});
      inner.forced.push_back(false);
    }
  }

  const auto [obs_actions, cf_actions] = flatten_for_distance(observed, inner, cfg.distance_includes_forced);
  res.distance = action_distance(obs_actions, cf_actions, cfg.distance);
  if (!out.transitions.empty()) {
    out.transitions.back().done = true;
    out.transitions.back().r -= cfg.lambda * res.distance;
  }

  nlohmann::json meta = nlohmann::json::object();
  for (std::size_t i = 0; i < inner.forced.size(); ++i) {
    if (inner.forced[i]) res.forced_steps.push_back(i);
  }
  meta["forced_steps"] = res.forced_steps;
  if (observed.meta().contains("id")) meta["observed_id"] = observed.meta()["id"];
  res.counterfactual = Trajectory(std::move(inner.steps), observed.env_id(), std::nullopt, std::move(meta));
  res.return_cf = cumulative_return(res.counterfactual);
  res.return_observed = cumulative_return(observed);
  res.positive = res.return_cf > res.return_observed;
  return out;
}

RolloutOutput rollout_counterfactual(Td3Agent& agent, Environment& env, const Trajectory& observed,
                                     const CfConfig& cfg, bool explore, std::optional<std::uint64_t> noise_seed) {
  return rollout_counterfactual([&](const Vec& obs) { return agent.select_action(obs, explore); }, env, observed,
                                cfg, noise_seed);
}

std::uint64_t eval_noise_seed(std::uint64_t eval_seed, std::size_t i, std::size_t k) {
  return substream(eval_seed, "eval-noise", (static_cast<std::uint64_t>(i) << 20U) + k);
}

namespace {

MethodEval evaluate_with(const DeterministicPolicy& policy, EnvPool& envs, const std::vector<Trajectory>& test_set,
                         const CfConfig& cfg, std::uint64_t eval_seed) {
  MethodEval out;
  const ActionFn choose = [&](const Vec& obs) { return policy.act(obs); };
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto& tau = test_set[i];
    auto& env = envs.get(tau.env_id());
    std::optional<CfResult> best;
    bool flagged = false;
    for (std::size_t k = 0; k < cfg.eval_rollouts; ++k) {
      auto seed = cfg.replay_noise ? std::nullopt : std::optional(eval_noise_seed(eval_seed, i, k));
      auto r = rollout_counterfactual(choose, env, tau, cfg, seed);
      flagged = flagged || r.result.initial_constrained;
      if (r.result.positive && (!best || r.result.distance < best->distance)) best = std::move(r.result);
    }
    out.ids.push_back(tau.meta().contains("id") ? tau.meta()["id"].get<std::string>() : std::to_string(i));
    out.observed_returns.push_back(cumulative_return(tau));
    out.best.push_back(std::move(best));
    out.flagged.push_back(flagged);
  }
  return out;
}

}  // namespace

MethodEval evaluate_cf(const DeterministicPolicy& policy, EnvPool& envs, const std::vector<Trajectory>& test_set,
                       const CfConfig& cfg, std::uint64_t eval_seed) {
  cfg.validate();
  return evaluate_with(policy, envs, test_set, cfg, eval_seed);
}

MethodEval baseline_counterfactuals(const DeterministicPolicy& baseline, EnvPool& envs,
                                    const std::vector<Trajectory>& test_set, const CfConfig& cfg,
                                    std::uint64_t eval_seed) {
  cfg.validate();
  return evaluate_with(baseline, envs, test_set, cfg, eval_seed);
}

TrainCfResult train_cf(Td3Agent& agent, EnvPool& envs, const std::vector<Trajectory>& dataset,
                       const CfConfig& cfg, std::uint64_t seed, const CfEvalSetup* eval, const TrainLogFn& log,
                       const CurveFn& on_curve) {
  cfg.validate();
  if (dataset.empty()) throw std::domain_error("train_cf: empty dataset");
  if (eval && (!eval->test_set || !eval->baseline)) throw std::invalid_argument("train_cf: incomplete eval setup");
  TrainCfResult out;
  Rng sampler(substream(seed, "cf-sample"));
  const auto noise_key = substream(seed, "cf-noise");
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  const std::size_t ready = std::max(agent.hyper().warmup, agent.hyper().batch_size);
  std::size_t next_eval = cfg.eval_every;
  std::uint64_t rollouts = 0;

  for (std::size_t e = 0; e < cfg.n_observed; ++e) {
    const auto& tau = dataset[pick(sampler)];
    auto& env = envs.get(tau.env_id());
    for (std::size_t k = 0; k < cfg.n_cf; ++k) {
      auto seed_k = cfg.replay_noise ? std::nullopt : std::optional(substream(noise_key, "rollout", rollouts));
      ++rollouts;
      auto r = rollout_counterfactual(agent, env, tau, cfg, true, seed_k);
      for (auto& t : r.transitions) agent.buffer().push(std::move(t));
      out.interactions += r.result.counterfactual.size();
    }
    ++out.iterations;
    if (agent.buffer().size() >= ready) {
      const auto rep = agent.update();
      ++out.updates;
      if (log) log({out.interactions, rep.critic_loss, rep.actor_loss});
    }
    if (eval && cfg.eval_every > 0 && out.interactions >= next_eval) {
      const auto policy = agent.policy_snapshot();
      const auto p = evaluate_cf(*policy, envs, *eval->test_set, cfg, eval->eval_seed);
      const auto row = curve_row(out.interactions, build_report(p, *eval->baseline));
      out.curve.push_back(row);
      if (on_curve) on_curve(row);
      while (next_eval <= out.interactions) next_eval += cfg.eval_every;
    }
  }
  return out;
}

}  // namespace cfrl
