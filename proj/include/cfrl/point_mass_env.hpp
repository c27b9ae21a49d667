#pragma once

#include "cfrl/env.hpp"

namespace cfrl {

struct PointMassParams {
  std::string env_id = "point_mass";
  double goal = 0.0;
  double dt = 0.1;
  double start_low = -2.0;
  double start_high = 2.0;
  std::size_t horizon = 60;
  /// Std-dev of velocity noise added per step; 0 makes the dynamics
  /// deterministic.
  double velocity_noise = 0.0;
};

/// 1D double integrator. Observable (x, v); action is an acceleration in
/// [-1, 1]; reward -|x' - goal| on the post-step position.
class PointMassEnv final : public Environment {
 public:
  explicit PointMassEnv(PointMassParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) override;
  using Environment::reset_to;
  EnvState reset_to(const EnvState& state) override;
  void reseed_noise(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  EnvState state() const override;
  std::unique_ptr<Environment> clone() const override;

  const PointMassParams& params() const noexcept { return params_; }

  static constexpr double kTag = 1.0;

 private:
  PointMassParams params_;
  EnvSpec spec_;
  double x_ = 0.0;
  double v_ = 0.0;
  std::uint64_t step_ = 0;
  std::uint64_t noise_key_ = 0;
};

}  // namespace cfrl
