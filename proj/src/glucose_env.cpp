#include "cfrl/glucose_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfrl/rng.hpp"

namespace cfrl {

namespace {
constexpr double kMinutesPerDay = 1440.0;
constexpr std::size_t kInternalLen = 9;
// Counter offsets keep the noise streams apart (meals use day * 64 + meal).
constexpr std::uint64_t kCgmStream = 1ULL << 48U;
constexpr std::uint64_t kProcessStream = 2ULL << 48U;
}  // namespace

double GlucoseRewardTiers::operator()(double g) const {
  if (g >= target_low && g <= target_high) return target_reward;
  if (g >= near_low && g < target_low) return near_reward;
  if (g > target_high && g <= near_high) return near_reward;
  if (g < near_low) return hypo_base - hypo_slope * (near_low - g);
  return hyper_base - hyper_slope * (g - near_high);
}

void GlucoseRewardTiers::validate() const {
  if (!(near_low <= target_low && target_low <= target_high && target_high <= near_high)) {
    throw std::invalid_argument("glucose reward tiers: band edges out of order");
  }
  if (hypo_slope < 0.0 || hyper_slope < 0.0) {
    throw std::invalid_argument("glucose reward tiers: slopes must be non-negative");
  }
  if (!(target_reward >= near_reward && near_reward >= hypo_base && near_reward >= hyper_base)) {
    throw std::invalid_argument("glucose reward tiers: rewards must not increase away from target");
  }
}

GlucoseEnv::GlucoseEnv(GlucoseParams params) : params_(std::move(params)) {
  const auto& p = params_;
  if (!(p.dt_min > 0.0) || p.substeps < 1 || !(p.meal_tau_min > 0.0) || !(p.body_weight > 0.0) ||
      !(p.v_g > 0.0) || !(p.v_i > 0.0) || !(p.max_dose > 0.0) || p.horizon == 0 ||
      !(p.init_glucose_low <= p.init_glucose_high) || !(p.init_glucose_low > 0.0) || p.cgm_noise < 0.0 || p.process_noise < 0.0) {
    throw std::invalid_argument("glucose: invalid parameters");
  }
  for (const auto& m : p.meals) {
    if (m.time_of_day_min < 0.0 || m.time_of_day_min >= kMinutesPerDay || m.carbs_low_g < 0.0 ||
        m.carbs_high_g < m.carbs_low_g) {
      throw std::invalid_argument("glucose: invalid meal entry");
    }
  }
  p.reward.validate();
  spec_ = EnvSpec{p.env_id, 3, 1, {0.0}, {p.max_dose}, p.horizon, {140.0, 0.0, 20.0}, {60.0, 2.0, 30.0}};
  spec_.validate();
}

double GlucoseEnv::meal_carbs(std::uint64_t key, std::size_t meal, std::uint64_t day) const {
  const auto& m = params_.meals.at(meal);
  const double u = hashed_uniform(key, day * 64 + meal);
  return m.carbs_low_g + u * (m.carbs_high_g - m.carbs_low_g);
}

EnvState GlucoseEnv::reset(std::uint64_t seed) {
  const auto key = substream(seed, "glucose/init");
  const double g0 = params_.init_glucose_low +
                    hashed_uniform(key, 0) * (params_.init_glucose_high - params_.init_glucose_low);
  ode_ = {g0, 0.0, params_.ib, 0.0};
  prev_glucose_ = g0;
  if (params_.random_start_time) {
    const auto slots = static_cast<std::uint64_t>(kMinutesPerDay / params_.dt_min);
    time_min_ = static_cast<double>(mix64(key + 1) % slots) * params_.dt_min;
  } else {
    time_min_ = params_.start_time_min;
  }
  step_ = 0;
  noise_key_ = exact_seed(substream(seed, "glucose/noise"));
  return state();
}

EnvState GlucoseEnv::reset_to(const EnvState& s) {
  check_internal(s, kTag, kInternalLen, "glucose");
  const auto& v = s.internal;
  ode_ = {v[1], v[2], v[3], v[4]};
  prev_glucose_ = v[5];
  time_min_ = v[6];
  step_ = static_cast<std::uint64_t>(v[7]);
  noise_key_ = static_cast<std::uint64_t>(v[8]);
  return state();
}

void GlucoseEnv::reseed_noise(std::uint64_t seed) { noise_key_ = exact_seed(seed); }

GlucoseEnv::Ode GlucoseEnv::derivative(const Ode& y, double insulin_rate) const {
  const auto& p = params_;
  const double ra = y[3] / p.meal_tau_min;
  return {-p.p1 * (y[0] - p.gb) - y[1] * y[0] + ra / (p.v_g * p.body_weight),
          -p.p2 * y[1] + p.p3 * (y[2] - p.ib),
          -p.k_i * (y[2] - p.ib) + insulin_rate / (p.v_i * p.body_weight),
          -y[3] / p.meal_tau_min};
}

StepResult GlucoseEnv::step(std::span<const double> action) {
  check_action(spec_, action);
  const double dose = std::clamp(action[0], 0.0, params_.max_dose);
  const double glucose_before = ode_[0];

  // Meals whose scheduled time falls inside [t, t + dt).
  const double t0 = time_min_;
  const double t1 = time_min_ + params_.dt_min;
  const auto first_day = static_cast<std::uint64_t>(std::floor(t0 / kMinutesPerDay));
  for (std::uint64_t day = first_day; static_cast<double>(day) * kMinutesPerDay < t1; ++day) {
    for (std::size_t m = 0; m < params_.meals.size(); ++m) {
      const double at = static_cast<double>(day) * kMinutesPerDay + params_.meals[m].time_of_day_min;
      if (at >= t0 && at < t1) {
        ode_[3] += 1000.0 * params_.bioavailability * meal_carbs(noise_key_, m, day);
      }
    }
  }

  // Dose spread evenly over the step: units -> mU/min.
  const double rate = 1000.0 * dose / params_.dt_min;
  const double h = params_.dt_min / params_.substeps;
  for (int k = 0; k < params_.substeps; ++k) {
    const Ode k1 = derivative(ode_, rate);
    Ode tmp;
    for (int i = 0; i < 4; ++i) tmp[i] = ode_[i] + 0.5 * h * k1[i];
    const Ode k2 = derivative(tmp, rate);
    for (int i = 0; i < 4; ++i) tmp[i] = ode_[i] + 0.5 * h * k2[i];
    const Ode k3 = derivative(tmp, rate);
    for (int i = 0; i < 4; ++i) tmp[i] = ode_[i] + h * k3[i];
    const Ode k4 = derivative(tmp, rate);
    for (int i = 0; i < 4; ++i) ode_[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  if (params_.process_noise > 0.0) {
    ode_[0] += params_.process_noise * std::sqrt(params_.dt_min) * hashed_normal(noise_key_, kProcessStream + step_);
  }
  ode_[0] = std::max(ode_[0], 1.0);
  ode_[3] = std::max(ode_[3], 0.0);

  prev_glucose_ = glucose_before;
  time_min_ = t1;
  ++step_;

  StepResult r;
  r.next_state = state();
  r.reward = params_.reward(ode_[0]);
  r.inner_reward = r.reward;
  r.done = step_ >= params_.horizon;
  return r;
}

double GlucoseEnv::reading() const noexcept {
  if (params_.cgm_noise <= 0.0) return ode_[0];
  return ode_[0] + params_.cgm_noise * hashed_normal(noise_key_, kCgmStream + step_);
}

EnvState GlucoseEnv::state() const {
  const double rate = (ode_[0] - prev_glucose_) / params_.dt_min;
  const double cob = ode_[3] / (1000.0 * params_.bioavailability);
  return {{reading(), rate, cob},
          {kTag, ode_[0], ode_[1], ode_[2], ode_[3], prev_glucose_, time_min_,
           static_cast<double>(step_), static_cast<double>(noise_key_)}};
}

std::unique_ptr<Environment> GlucoseEnv::clone() const { return std::make_unique<GlucoseEnv>(*this); }

}  // namespace cfrl
