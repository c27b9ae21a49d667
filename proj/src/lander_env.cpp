#include "cfrl/lander_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfrl/rng.hpp"

namespace cfrl {

namespace {
constexpr std::size_t kInternalLen = 12;
constexpr double kRestSpeed = 0.05;
}  // namespace

LanderEnv::LanderEnv(LanderParams params) : params_(std::move(params)) {
  const auto& p = params_;
  if (!(p.dt > 0.0) || !(p.gravity < 0.0) || !(p.world_width > 0.0) || !(p.world_height > p.pad_height) ||
      p.horizon == 0 || !(p.fps > 0.0) || p.engine_dispersion < 0.0) {
    throw std::invalid_argument("lander: invalid parameters");
  }
  spec_ = EnvSpec{p.env_id, 8, 2, {0.0, -1.0}, {1.0, 1.0}, p.horizon,
                  Vec(8, 0.0), {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0}};
  spec_.validate();
}

EnvState LanderEnv::reset(std::uint64_t seed) {
  const auto key = substream(seed, "lander/init");
  x_ = params_.world_width / 2.0;
  y_ = params_.world_height;
  vx_ = params_.init_velocity * (2.0 * hashed_uniform(key, 0) - 1.0);
  vy_ = params_.init_velocity * (2.0 * hashed_uniform(key, 1) - 1.0);
  angle_ = 0.0;
  omega_ = 0.0;
  leg_left_ = leg_right_ = false;
  terminated_ = false;
  step_ = 0;
  noise_key_ = exact_seed(substream(seed, "lander/noise"));
  return state();
}

EnvState LanderEnv::reset_to(const EnvState& s) {
  check_internal(s, kTag, kInternalLen, "lander");
  const auto& v = s.internal;
  x_ = v[1];
  y_ = v[2];
  vx_ = v[3];
  vy_ = v[4];
  angle_ = v[5];
  omega_ = v[6];
  leg_left_ = v[7] != 0.0;
  leg_right_ = v[8] != 0.0;
  terminated_ = v[9] != 0.0;
  step_ = static_cast<std::uint64_t>(v[10]);
  noise_key_ = static_cast<std::uint64_t>(v[11]);
  return state();
}

void LanderEnv::reseed_noise(std::uint64_t seed) { noise_key_ = exact_seed(seed); }

Vec LanderEnv::observe() const {
  const auto& p = params_;
  const double half_w = p.world_width / 2.0;
  const double half_h = p.world_height / 2.0;
  return {(x_ - half_w) / half_w,
          (y_ - (p.pad_height - p.leg_dy)) / half_h,
          vx_ * half_w / p.fps,
          vy_ * half_h / p.fps,
          angle_,
          20.0 * omega_ / p.fps,
          leg_left_ ? 1.0 : 0.0,
          leg_right_ ? 1.0 : 0.0};
}

double LanderEnv::shaping(const Vec& o) const {
  return -100.0 * std::hypot(o[0], o[1]) - 100.0 * std::hypot(o[2], o[3]) - 100.0 * std::abs(o[4]) +
         10.0 * o[6] + 10.0 * o[7];
}

StepResult LanderEnv::step(std::span<const double> action) {
  check_action(spec_, action);
  StepResult r;
  if (terminated_) {
    ++step_;
    r.next_state = state();
    r.done = true;
    return r;
  }
  const auto& p = params_;
  const double throttle = std::clamp(action[0], 0.0, 1.0);
  const double lateral = std::clamp(action[1], -1.0, 1.0);
  const double before = shaping(observe());

  const double up_x = -std::sin(angle_), up_y = std::cos(angle_);
  const double side_x = std::cos(angle_), side_y = std::sin(angle_);
  double ax = throttle * p.main_accel * up_x + lateral * p.side_accel * side_x;
  double ay = p.gravity + throttle * p.main_accel * up_y + lateral * p.side_accel * side_y;
  if (throttle > 0.0 && p.engine_dispersion > 0.0) {
    const double n = p.engine_dispersion * throttle * hashed_normal(noise_key_, step_);
    ax += n * side_x;
    ay += n * side_y;
  }
  const double alpha = -lateral * p.side_angular;

  vx_ += ax * p.dt;
  vy_ += ay * p.dt;
  omega_ += alpha * p.dt;
  x_ += vx_ * p.dt;
  y_ += vy_ * p.dt;
  angle_ += omega_ * p.dt;

  // Ground contact against the flat surface at pad_height.
  const double c = std::cos(angle_), s = std::sin(angle_);
  const double left_tip = y_ + (-p.leg_dx) * s + p.leg_dy * c;
  const double right_tip = y_ + p.leg_dx * s + p.leg_dy * c;
  const double lowest = std::min(left_tip, right_tip);
  bool crashed = false;
  leg_left_ = left_tip <= p.pad_height;
  leg_right_ = right_tip <= p.pad_height;
  if (lowest <= p.pad_height) {
    if (vy_ < -p.crash_speed || std::abs(angle_) > p.crash_angle) crashed = true;
    y_ += p.pad_height - lowest;
    if (vy_ < 0.0) vy_ = 0.0;
    vx_ *= p.ground_friction;
    omega_ *= 0.5;
    angle_ *= 0.9;
  }
  if (y_ - p.body_half_height <= p.pad_height) crashed = true;

  ++step_;
  auto obs = observe();
  r.reward = shaping(obs) - before - 0.3 * throttle - 0.03 * std::abs(lateral);
  const bool out_of_bounds = std::abs(obs[0]) >= 1.0;
  const bool at_rest = leg_left_ && leg_right_ && std::abs(vx_) < kRestSpeed && std::abs(vy_) < kRestSpeed &&
                       std::abs(omega_) < kRestSpeed;
  if (crashed || out_of_bounds) {
    r.reward = -100.0;
    terminated_ = true;
  } else if (at_rest) {
    r.reward += 100.0;
    terminated_ = true;
  }
  r.inner_reward = r.reward;
  r.done = terminated_ || step_ >= p.horizon;
  r.next_state = state();
  return r;
}

EnvState LanderEnv::state() const {
  return {observe(),
          {kTag, x_, y_, vx_, vy_, angle_, omega_, leg_left_ ? 1.0 : 0.0, leg_right_ ? 1.0 : 0.0,
           terminated_ ? 1.0 : 0.0, static_cast<double>(step_), static_cast<double>(noise_key_)}};
}

std::unique_ptr<Environment> LanderEnv::clone() const { return std::make_unique<LanderEnv>(*this); }

}  // namespace cfrl
