#include "cfrl/point_mass_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfrl/rng.hpp"

namespace cfrl {

PointMassEnv::PointMassEnv(PointMassParams params) : params_(std::move(params)) {
  if (!(params_.dt > 0.0) || !(params_.start_low <= params_.start_high) || params_.horizon == 0 ||
      params_.velocity_noise < 0.0) {
    throw std::invalid_argument("point mass: invalid parameters");
  }
  const double span = std::max({std::abs(params_.start_low - params_.goal),
                                std::abs(params_.start_high - params_.goal), 1.0});
  spec_ = EnvSpec{params_.env_id, 2, 1, {-1.0}, {1.0}, params_.horizon,
                  {params_.goal, 0.0}, {span, 1.0}};
  spec_.validate();
}

EnvState PointMassEnv::reset(std::uint64_t seed) {
  const double u = hashed_uniform(substream(seed, "point_mass/init"), 0);
  x_ = params_.start_low + u * (params_.start_high - params_.start_low);
  v_ = 0.0;
  step_ = 0;
  noise_key_ = exact_seed(substream(seed, "point_mass/noise"));
  return state();
}

EnvState PointMassEnv::reset_to(const EnvState& s) {
  check_internal(s, kTag, 5, "point_mass");
  x_ = s.internal[1];
  v_ = s.internal[2];
  step_ = static_cast<std::uint64_t>(s.internal[3]);
  noise_key_ = static_cast<std::uint64_t>(s.internal[4]);
  return state();
}

void PointMassEnv::reseed_noise(std::uint64_t seed) { noise_key_ = exact_seed(seed); }

StepResult PointMassEnv::step(std::span<const double> action) {
  check_action(spec_, action);
  const double a = std::clamp(action[0], -1.0, 1.0);
  v_ += a * params_.dt;
  if (params_.velocity_noise > 0.0) {
    v_ += params_.velocity_noise * std::sqrt(params_.dt) * hashed_normal(noise_key_, step_);
  }
  x_ += v_ * params_.dt;
  ++step_;
  StepResult r;
  r.reward = -std::abs(x_ - params_.goal);
  r.inner_reward = r.reward;
  r.done = step_ >= params_.horizon;
  r.next_state = state();
  return r;
}

EnvState PointMassEnv::state() const {
  return {{x_, v_},
          {kTag, x_, v_, static_cast<double>(step_), static_cast<double>(noise_key_)}};
}

std::unique_ptr<Environment> PointMassEnv::clone() const {
  return std::make_unique<PointMassEnv>(*this);
}

}  // namespace cfrl
