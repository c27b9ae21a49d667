#pragma once

#include "cfrl/env.hpp"

namespace cfrl {

struct LanderParams {
  std::string env_id = "lander";
  double gravity = -10.0;           // m/s^2, vertical
  double dt = 0.02;
  double world_width = 20.0;
  double world_height = 40.0 / 3.0;
  double pad_height = 10.0 / 3.0;   // flat ground at this height, pad centred
  double main_accel = 15.0;         // at full throttle, along body up axis
  double side_accel = 1.5;          // along body x axis at |lateral| = 1
  double side_angular = 3.0;        // rad/s^2 at |lateral| = 1
  double leg_dx = 0.8;              // leg tip offsets in body frame
  double leg_dy = -1.0;
  double body_half_height = 0.45;
  double crash_speed = 3.0;         // vertical touchdown speed limit, m/s
  double crash_angle = 0.6;         // rad
  double ground_friction = 0.9;     // per-step horizontal velocity factor on contact
  double engine_dispersion = 0.3;   // std-dev of lateral acceleration noise while firing, m/s^2
  double init_velocity = 1.5;       // initial |vx|, |vy| drawn uniformly up to this
  std::size_t horizon = 1000;
  double fps = 50.0;                // observation velocity scaling as in the classic task
};

/// 2D rigid-body lander. Observable (x, y, vx, vy, angle, angular velocity,
/// left leg contact, right leg contact) in normalised units; actions (main
/// throttle in [0, 1], lateral in [-1, 1]). Integrated with semi-implicit
/// Euler.
class LanderEnv final : public Environment {
 public:
  explicit LanderEnv(LanderParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) override;
  using Environment::reset_to;
  EnvState reset_to(const EnvState& state) override;
  void reseed_noise(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  EnvState state() const override;
  std::unique_ptr<Environment> clone() const override;

  const LanderParams& params() const noexcept { return params_; }
  /// World-frame vertical velocity (m/s).
  double vertical_velocity() const noexcept { return vy_; }

  static constexpr double kTag = 3.0;

 private:
  Vec observe() const;
  double shaping(const Vec& obs) const;

  LanderParams params_;
  EnvSpec spec_;
  double x_ = 0, y_ = 0, vx_ = 0, vy_ = 0, angle_ = 0, omega_ = 0;
  bool leg_left_ = false, leg_right_ = false;
  bool terminated_ = false;
  std::uint64_t step_ = 0;
  std::uint64_t noise_key_ = 0;
};

}  // namespace cfrl
