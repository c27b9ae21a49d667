#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "cfrl/trajectory.hpp"

using namespace cfrl;

namespace {

Trajectory make_traj(const std::vector<double>& rewards) {
  std::vector<Step> steps;
  for (double r : rewards) steps.push_back({{0.0, 1.0}, {0.5}, r});
  return Trajectory(steps, "t");
}

ActionSeq seq(std::initializer_list<double> xs) {
  ActionSeq s;
  for (double x : xs) s.push_back({x});
  return s;
}

}  // namespace

TEST_CASE("cumulative return sums rewards") {
  CHECK(cumulative_return(make_traj({1.0, 2.0, 3.0})) == doctest::Approx(6.0));
  CHECK_THROWS_AS(cumulative_return(Trajectory{}), std::domain_error);
}

TEST_CASE("trajectory rejects mixed dimensions") {
  std::vector<Step> steps = {{{0.0, 1.0}, {0.5}, 0.0}, {{0.0}, {0.5}, 0.0}};
  CHECK_THROWS(Trajectory(steps, "t"));
  std::vector<Step> acts = {{{0.0}, {0.5}, 0.0}, {{0.0}, {0.5, 1.0}, 0.0}};
  CHECK_THROWS(Trajectory(acts, "t"));
}

TEST_CASE("trajectory start state must match step 0") {
  std::vector<Step> steps = {{{1.0}, {0.0}, 0.0}};
  CHECK_NOTHROW(Trajectory(steps, "t", EnvState{{1.0}, {9.0}}));
  CHECK_THROWS(Trajectory(steps, "t", EnvState{{2.0}, {9.0}}));
}

TEST_CASE("action distance examples") {
  DistanceParams p{0.01, 1};
  CHECK(action_distance(seq({1.0, 2.0}), seq({1.0, 2.0}), p) == 0.0);
  CHECK(action_distance(seq({1.0, 2.0}), seq({1.5, 1.0}), p) == doctest::Approx(0.5 / 1.01 + 1.0 / 2.01));
  CHECK(action_distance(seq({1.0, 2.0}), seq({1.5, 1.0}), p) == doctest::Approx(0.992561).epsilon(1e-6));
  CHECK(action_distance(seq({0.0}), seq({0.3}), DistanceParams{0.1, 1}) == doctest::Approx(3.0));
}

TEST_CASE("action distance errors") {
  CHECK_THROWS_AS(action_distance(seq({1.0}), seq({1.0, 2.0})), std::domain_error);
  CHECK_THROWS_AS(action_distance({{1.0}}, {{1.0, 2.0}}), std::domain_error);
  CHECK_THROWS(action_distance(seq({1.0}), seq({1.0}), DistanceParams{0.0, 1}));
  CHECK_THROWS(action_distance(seq({1.0}), seq({1.0}), DistanceParams{0.1, 0}));
}

TEST_CASE("action distance is directed") {
  DistanceParams p{0.01, 1};
  const auto a = seq({1.0});
  const auto b = seq({3.0});
  CHECK(action_distance(a, b, p) == doctest::Approx(2.0 / 1.01));
  CHECK(action_distance(b, a, p) == doctest::Approx(2.0 / 3.01));
}

TEST_CASE("action distance uses the lp norm for vector actions") {
  const ActionSeq a = {{3.0, 4.0}};
  const ActionSeq b = {{0.0, 0.0}};
  CHECK(action_distance(a, b, {0.5, 2}) == doctest::Approx(5.0 / 5.5));
  CHECK(action_distance(a, b, {0.5, 1}) == doctest::Approx(7.0 / 7.5));
}

TEST_CASE("action distance properties on random inputs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    const std::size_t d = 1 + rng() % 3;
    ActionSeq a(n, Vec(d)), b(n, Vec(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        a[i][k] = u(rng);
        b[i][k] = u(rng);
      }
    }
    const DistanceParams p{0.05, static_cast<int>(1 + rng() % 3)};
    const double base = action_distance(a, b, p);
    CHECK(base >= 0.0);
    CHECK(action_distance(a, a, p) == 0.0);
    // pushing one coordinate further away strictly increases the distance
    auto b2 = b;
    const std::size_t i = rng() % n;
    b2[i][0] = a[i][0] + (b[i][0] >= a[i][0] ? 1.0 : -1.0) * (std::abs(b[i][0] - a[i][0]) + 0.5);
    CHECK(action_distance(a, b2, p) > base);
    // a larger delta never increases it
    CHECK(action_distance(a, b, {p.delta * 2.0, p.p_norm}) <= base);
  }
}

TEST_CASE("jsonl round trip keeps start state and meta") {
  std::vector<Step> steps = {{{1.0, 2.0}, {0.1}, -0.5}, {{1.5, 2.5}, {0.2}, 0.25}};
  nlohmann::json meta = {{"id", "w0"}};
  Trajectory t(steps, "glucose", EnvState{{1.0, 2.0}, {2.0, 1.0, 0.125}}, meta);
  const auto path = std::filesystem::temp_directory_path() / "cfrl_traj_test.jsonl";
  write_jsonl(path, std::vector<Trajectory>{t, t});
  const auto back = read_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].steps()[1].state == steps[1].state);
  CHECK(back[0].steps()[1].reward == steps[1].reward);
  REQUIRE(back[0].start().has_value());
  CHECK(*back[0].start() == *t.start());
  CHECK(back[0].meta()["id"] == "w0");
  CHECK(back[0].env_id() == "glucose");
  std::filesystem::remove(path);
}

TEST_CASE("trajectory json validation") {
  nlohmann::json j = {{"states", {{1.0}, {2.0}}}, {"actions", {{0.0}}}, {"rewards", {0.0, 1.0}},
                      {"env_id", "x"}, {"meta", nlohmann::json::object()}};
  CHECK_THROWS(trajectory_from_json(j));
  j["actions"] = {{0.0}, {0.0}};
  CHECK_NOTHROW(trajectory_from_json(j));
  j["states"] = nlohmann::json::array();
  j["actions"] = nlohmann::json::array();
  j["rewards"] = nlohmann::json::array();
  CHECK_THROWS(trajectory_from_json(j));
}
