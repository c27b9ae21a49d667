#pragma once

#include <array>

#include "cfrl/env.hpp"

namespace cfrl {

/// Piecewise reward on the glucose reading (mg/dL).
struct GlucoseRewardTiers {
  double target_low = 90.0;
  double target_high = 140.0;
  double near_low = 70.0;
  double near_high = 180.0;
  double target_reward = 1.0;
  double near_reward = 0.5;
  double hypo_base = -1.5;
  double hypo_slope = 0.01;
  double hyper_base = -1.0;
  double hyper_slope = 0.005;

  double operator()(double glucose) const;
  void validate() const;
};

struct Meal {
  double time_of_day_min = 0.0;
  double carbs_low_g = 0.0;
  double carbs_high_g = 0.0;
};

/// Bergman minimal model with first-order gut absorption:
///   dG/dt = -p1 (G - Gb) - X G + Ra / (V_G * BW)
///   dX/dt = -p2 X + p3 (I - Ib)
///   dI/dt = -k_I (I - Ib) + u / (V_I * BW)
///   dQ/dt = -Q / tau_meal,  Ra = Q / tau_meal
/// G in mg/dL, I in mU/L, Q (gut glucose) in mg, u in mU/min.
struct GlucoseParams {
  std::string env_id = "glucose";
  double p1 = 0.028;
  double p2 = 0.025;
  double p3 = 1.3e-5;
  double gb = 110.0;
  double ib = 10.0;
  double k_i = 0.09;
  double v_g = 1.6;    // dL/kg
  double v_i = 0.12;   // L/kg
  double body_weight = 70.0;
  double dt_min = 3.0;
  int substeps = 3;
  double meal_tau_min = 40.0;
  double bioavailability = 0.8;
  std::vector<Meal> meals = {{7 * 60.0, 30.0, 70.0}, {12 * 60.0, 40.0, 90.0}, {18.5 * 60.0, 50.0, 100.0}};
  /// Initial glucose is drawn uniformly from this band.
  double init_glucose_low = 100.0;
  double init_glucose_high = 160.0;
  /// Start time of day is uniform over the day when true, else start_time_min.
  bool random_start_time = true;
  double start_time_min = 6 * 60.0;
  std::size_t horizon = 480;
  /// Insulin units per step.
  double max_dose = 0.1;
  /// Sensor noise on the reported reading (mg/dL, std-dev); the reward uses
  /// the true glucose.
  double cgm_noise = 0.0;
  /// Additive glucose disturbance per step, std-dev in mg/dL per sqrt(min).
  double process_noise = 0.0;
  GlucoseRewardTiers reward;
};

/// Observable: (glucose mg/dL, glucose rate of change mg/dL/min, carbohydrate
/// on board g). Action: insulin dose (units) delivered over one step. Meal
/// sizes are drawn from the noise stream, keyed by the absolute meal index.
class GlucoseEnv final : public Environment {
 public:
  explicit GlucoseEnv(GlucoseParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) override;
  using Environment::reset_to;
  EnvState reset_to(const EnvState& state) override;
  void reseed_noise(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  EnvState state() const override;
  std::unique_ptr<Environment> clone() const override;

  const GlucoseParams& params() const noexcept { return params_; }
  double glucose() const noexcept { return ode_[0]; }
  /// Reported (possibly noisy) reading of the current state.
  double reading() const noexcept;
  /// Carbohydrate (g) of the meal that would be eaten at absolute meal
  /// occurrence `index` under noise key `key`.
  double meal_carbs(std::uint64_t key, std::size_t meal, std::uint64_t day) const;

  static constexpr double kTag = 2.0;

 private:
  using Ode = std::array<double, 4>;  // G, X, I, Q
  Ode derivative(const Ode& y, double insulin_rate) const;

  GlucoseParams params_;
  EnvSpec spec_;
  Ode ode_{};
  double prev_glucose_ = 0.0;
  double time_min_ = 0.0;
  std::uint64_t step_ = 0;
  std::uint64_t noise_key_ = 0;
};

}  // namespace cfrl
