#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "cfrl/glucose_env.hpp"
#include "cfrl/lander_env.hpp"
#include "cfrl/point_mass_env.hpp"
#include "cfrl/rng.hpp"

using namespace cfrl;

namespace {

template <class E>
std::vector<StepResult> run_fixed(E& env, const EnvState& start, const std::vector<Vec>& actions) {
  env.reset_to(start);
  std::vector<StepResult> out;
  for (const auto& a : actions) out.push_back(env.step(a));
  return out;
}

bool same(const std::vector<StepResult>& a, const std::vector<StepResult>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].next_state == b[i].next_state) || a[i].reward != b[i].reward || a[i].done != b[i].done) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("point mass reset lies in the start interval and is seed-deterministic") {
  PointMassEnv env;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto st = env.reset(s);
    CHECK(st.observable[0] >= -2.0);
    CHECK(st.observable[0] <= 2.0);
    CHECK(env.reset(s) == st);
  }
}

TEST_CASE("point mass fixed point at the goal") {
  PointMassEnv env;
  env.reset(1);
  env.reset_to(EnvState{{0.0, 0.0}, {PointMassEnv::kTag, 0.0, 0.0, 0.0, 7.0}});
  const auto r = env.step(Vec{0.0});
  CHECK(r.next_state.observable[0] == 0.0);
  CHECK(r.reward == 0.0);
}

TEST_CASE("step rejects NaN actions and foreign states") {
  PointMassEnv pm;
  pm.reset(0);
  CHECK_THROWS_AS(pm.step(Vec{std::nan("")}), std::domain_error);
  CHECK_THROWS_AS(pm.step(Vec{0.0, 0.0}), std::domain_error);
  GlucoseEnv g;
  const auto gs = g.reset(0);
  CHECK_THROWS_AS(pm.reset_to(gs), std::domain_error);
  CHECK_THROWS_AS(g.reset_to(EnvState{{1.0}, {2.0, 1.0}}), std::domain_error);
}

TEST_CASE("glucose reset lands in the configured band") {
  GlucoseEnv env;
  for (std::uint64_t s = 0; s < 50; ++s) {
    env.reset(s);
    CHECK(env.glucose() >= 100.0);
    CHECK(env.glucose() <= 160.0);
  }
}

TEST_CASE("glucose reward tiers") {
  GlucoseRewardTiers t;
  CHECK(t(120.0) == 1.0);
  CHECK(t(90.0) == 1.0);
  CHECK(t(140.0) == 1.0);
  CHECK(t(80.0) == 0.5);
  CHECK(t(160.0) == 0.5);
  CHECK(t(60.0) < 0.0);
  CHECK(t(60.0) < t(75.0));
  CHECK(t(60.0) == doctest::Approx(-1.5 - 0.01 * 10.0));
  CHECK(t(200.0) == doctest::Approx(-1.0 - 0.005 * 20.0));
  // non-increasing away from the band on both sides
  for (double g = 140.0; g < 400.0; g += 0.5) CHECK(t(g + 0.5) <= t(g));
  for (double g = 90.0; g > 10.0; g -= 0.5) CHECK(t(g - 0.5) <= t(g));
}

TEST_CASE("glucose step reward is the maximum tier inside the band") {
  GlucoseEnv env;
  // steady state at basal: G = Gb stays put without meals or insulin
  env.reset_to(EnvState{{}, {GlucoseEnv::kTag, 120.0, 0.0, 10.0, 0.0, 120.0, 14 * 60.0, 0.0, 5.0}});
  const auto r = env.step(Vec{0.0});
  CHECK(r.reward == 1.0);
}

TEST_CASE("glucose matches a reference integrator during meal absorption") {
  GlucoseParams p;
  GlucoseEnv env(p);
  // mid-afternoon, no meal scheduled for the next hour, low glucose with
  // 10 g still on board
  const double q0 = 10000.0 * p.bioavailability;
  env.reset_to(EnvState{{}, {GlucoseEnv::kTag, 60.0, 0.0, p.ib, q0, 60.0, 14 * 60.0, 100.0, 3.0}});
  // forward Euler at a much finer step
  std::array<double, 4> y = {60.0, 0.0, p.ib, q0};
  const double h = 1e-3;
  double prev = env.glucose();
  for (int k = 0; k < 20; ++k) {
    env.step(Vec{0.0});
    for (int i = 0; i < static_cast<int>(p.dt_min / h + 0.5); ++i) {
      const double ra = y[3] / p.meal_tau_min;
      const std::array<double, 4> d = {-p.p1 * (y[0] - p.gb) - y[1] * y[0] + ra / (p.v_g * p.body_weight),
                                       -p.p2 * y[1] + p.p3 * (y[2] - p.ib), -p.k_i * (y[2] - p.ib),
                                       -y[3] / p.meal_tau_min};
      for (int j = 0; j < 4; ++j) y[j] += h * d[j];
    }
    CHECK(env.glucose() == doctest::Approx(y[0]).epsilon(1e-4));
    CHECK(env.glucose() > prev);
    prev = env.glucose();
  }
}

TEST_CASE("glucose insulin lowers glucose relative to no insulin") {
  GlucoseEnv a, b;
  const auto s = a.reset(4);
  b.reset_to(s);
  for (int k = 0; k < 20; ++k) {
    a.step(Vec{0.0});
    b.step(Vec{0.1});
  }
  CHECK(b.glucose() < a.glucose());
}

TEST_CASE("reset_to replays the recorded noise, reseeding changes it") {
  GlucoseParams p;
  p.cgm_noise = 5.0;
  p.process_noise = 1.0;
  GlucoseEnv env(p);
  const auto s0 = env.reset(9);
  std::vector<Vec> actions(40, Vec{0.02});
  const auto r1 = run_fixed(env, s0, actions);
  const auto r2 = run_fixed(env, s0, actions);
  CHECK(same(r1, r2));
  env.reset_to(s0, 12345);
  std::vector<StepResult> r3;
  for (const auto& a : actions) r3.push_back(env.step(a));
  CHECK(!same(r1, r3));
  CHECK(env.reset_to(s0) == env.reset_to(s0));
}

TEST_CASE("meal sizes come from the noise key") {
  GlucoseEnv env;
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& meal = env.params().meals[m];
    const double c = env.meal_carbs(77, m, 0);
    CHECK(c >= meal.carbs_low_g);
    CHECK(c <= meal.carbs_high_g);
    CHECK(env.meal_carbs(77, m, 0) == c);
  }
  CHECK(env.meal_carbs(77, 0, 0) != env.meal_carbs(78, 0, 0));
}

TEST_CASE("lander zero thrust free fall changes vy by g*dt") {
  for (double g : {-10.0, -8.0, -12.0}) {
    LanderParams p;
    p.gravity = g;
    LanderEnv env(p);
    env.reset(3);
    for (int k = 0; k < 10; ++k) {
      const double before = env.vertical_velocity();
      env.step(Vec{0.0, 0.0});
      CHECK(std::abs(env.vertical_velocity() - before - g * p.dt) < 1e-9);
    }
  }
}

TEST_CASE("lander observables stay finite and episodes are deterministic") {
  LanderEnv env;
  Rng rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec> actions;
  for (int k = 0; k < 1000; ++k) actions.push_back({0.5 * (u(rng) + 1.0), u(rng)});
  const auto s0 = env.reset(21);
  const auto r1 = run_fixed(env, s0, actions);
  for (const auto& r : r1) {
    for (double x : r.next_state.observable) CHECK(std::isfinite(x));
    CHECK(std::isfinite(r.reward));
  }
  CHECK(same(r1, run_fixed(env, s0, actions)));
}

TEST_CASE("bounded random actions keep every environment finite over the horizon") {
  Rng rng(8);
  std::vector<std::unique_ptr<Environment>> envs;
  envs.push_back(std::make_unique<PointMassEnv>());
  envs.push_back(std::make_unique<GlucoseEnv>());
  for (auto& env : envs) {
    env->reset(2);
    const auto& spec = env->spec();
    for (std::size_t t = 0; t < spec.horizon; ++t) {
      Vec a(spec.action_dim);
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = std::uniform_real_distribution<double>(spec.action_low[i], spec.action_high[i])(rng);
      }
      const auto r = env->step(a);
      for (double x : r.next_state.observable) REQUIRE(std::isfinite(x));
      if (r.done) break;
    }
  }
}

TEST_CASE("multi-env scheduler rotation") {
  auto make = [](std::size_t k) {
    std::vector<std::unique_ptr<Environment>> v;
    for (std::size_t i = 0; i < k; ++i) {
      PointMassParams p;
      p.env_id = "pm" + std::to_string(i);
      v.push_back(std::make_unique<PointMassEnv>(p));
    }
    return v;
  };
  MultiEnvScheduler one(make(1), 2);
  for (int i = 0; i < 5; ++i) CHECK(one.next().spec().env_id == "pm0");

  MultiEnvScheduler three(make(3), 2);
  std::string pattern;
  for (int i = 0; i < 6; ++i) pattern += static_cast<char>('A' + three.next().spec().env_id.back() - '0');
  CHECK(pattern == "AABBCC");
  CHECK(three.next().spec().env_id == "pm0");
  CHECK(three.step_counts() == std::vector<std::size_t>{3, 2, 2});
}

TEST_CASE("env pool rejects incompatible variants") {
  EnvPool pool;
  pool.add(std::make_unique<PointMassEnv>());
  CHECK_THROWS(pool.add(std::make_unique<GlucoseEnv>()));
  CHECK_THROWS(pool.add(std::make_unique<PointMassEnv>()));
  CHECK(pool.get("point_mass").spec().state_dim == 2);
  CHECK_THROWS_AS(pool.get("nope"), std::domain_error);
}
