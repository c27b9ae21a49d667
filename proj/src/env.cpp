#include "cfrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfrl {

void EnvSpec::validate() const {
  if (state_dim < 1 || action_dim < 1) throw std::domain_error("env spec: dimensions must be >= 1");
  if (action_low.size() != action_dim || action_high.size() != action_dim) {
    throw std::domain_error("env spec: action bounds do not match action_dim");
  }
  for (std::size_t i = 0; i < action_dim; ++i) {
    if (!(action_low[i] < action_high[i])) throw std::domain_error("env spec: action_low must be < action_high");
  }
  if (obs_center.size() != state_dim || obs_scale.size() != state_dim) {
    throw std::domain_error("env spec: normalisation vectors do not match state_dim");
  }
  for (double s : obs_scale) {
    if (!(s > 0.0)) throw std::domain_error("env spec: obs_scale must be positive");
  }
}

Vec EnvSpec::clip_action(std::span<const double> a) const {
  Vec out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size() && i < action_dim; ++i) {
    out[i] = std::clamp(out[i], action_low[i], action_high[i]);
  }
  return out;
}

bool EnvSpec::action_in_bounds(std::span<const double> a) const {
  if (a.size() != action_dim) return false;
  for (std::size_t i = 0; i < action_dim; ++i) {
    if (!(a[i] >= action_low[i] && a[i] <= action_high[i])) return false;
  }
  return true;
}

void check_action(const EnvSpec& spec, std::span<const double> action) {
  if (action.size() != spec.action_dim) {
    throw std::domain_error(spec.env_id + ": action has dimension " + std::to_string(action.size()) +
                            ", expected " + std::to_string(spec.action_dim));
  }
  for (double a : action) {
    if (std::isnan(a)) throw std::domain_error(spec.env_id + ": NaN action");
  }
}

void check_internal(const EnvState& state, double tag, std::size_t length, const char* env_name) {
  if (state.internal.size() != length || state.internal.front() != tag) {
    throw std::domain_error(std::string(env_name) + ": internal state was not produced by this environment");
  }
  for (double x : state.internal) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(env_name) + ": non-finite internal state");
  }
}

EnvState Environment::reset_to(const EnvState& s, std::uint64_t noise_seed) {
  reset_to(s);
  reseed_noise(noise_seed);
  return state();
}

void EnvPool::add(std::unique_ptr<Environment> env) {
  if (!env) throw std::invalid_argument("EnvPool::add: null environment");
  if (!envs_.empty()) {
    const auto& a = spec();
    const auto& b = env->spec();
    if (a.state_dim != b.state_dim || a.action_dim != b.action_dim || a.action_low != b.action_low ||
        a.action_high != b.action_high) {
      throw std::domain_error("EnvPool: variant " + b.env_id + " has incompatible spaces");
    }
  }
  auto id = env->spec().env_id;
  if (!envs_.emplace(id, std::move(env)).second) {
    throw std::domain_error("EnvPool: duplicate env_id " + id);
  }
}

Environment& EnvPool::get(const std::string& env_id) {
  auto it = envs_.find(env_id);
  if (it == envs_.end()) throw std::domain_error("unknown env_id '" + env_id + "'");
  return *it->second;
}

const Environment& EnvPool::get(const std::string& env_id) const {
  auto it = envs_.find(env_id);
  if (it == envs_.end()) throw std::domain_error("unknown env_id '" + env_id + "'");
  return *it->second;
}

std::vector<std::string> EnvPool::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : envs_) out.push_back(id);
  return out;
}

const EnvSpec& EnvPool::spec() const {
  if (envs_.empty()) throw std::domain_error("EnvPool is empty");
  return envs_.begin()->second->spec();
}

EnvPool EnvPool::clone() const {
  EnvPool out;
  for (const auto& [id, env] : envs_) out.add(env->clone());
  return out;
}

MultiEnvScheduler::MultiEnvScheduler(std::vector<std::unique_ptr<Environment>> variants,
                                     std::size_t quota)
    : variants_(std::move(variants)), quota_(quota), counts_(variants_.size(), 0) {
  if (variants_.empty()) throw std::invalid_argument("scheduler needs at least one variant");
  if (quota_ == 0) throw std::invalid_argument("scheduler quota must be >= 1");
  for (const auto& v : variants_) {
    if (!v) throw std::invalid_argument("scheduler: null variant");
  }
}

Environment& MultiEnvScheduler::next() {
  switched_ = false;
  if (!started_) {
    started_ = true;
    switched_ = true;
  } else if (used_ == quota_) {
    used_ = 0;
    const auto prev = current_;
    current_ = (current_ + 1) % variants_.size();
    switched_ = current_ != prev;
  }
  ++used_;
  ++counts_[current_];
  return *variants_[current_];
}

}  // namespace cfrl
