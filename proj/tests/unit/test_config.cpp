#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfrl/pipeline.hpp"

using namespace cfrl;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny() {
  return nlohmann::json::parse(R"({
    "env": {"kind": "point_mass", "params": {"horizon": 40, "velocity_noise": 0.05}},
    "baseline": {"steps": 300, "eval_episodes": 2,
                 "td3": {"hidden": [16, 16], "batch_size": 16, "warmup": 100, "gamma": 0.95}},
    "dataset": {"episodes_per_variant": 2, "window": 10, "stride": 10, "n_train": 4, "n_test": 4},
    "cf": {"lambda": 1.0, "n_observed": 20, "n_cf": 1, "eval_every": 100, "eval_rollouts": 2,
           "td3": {"hidden": [16, 16], "batch_size": 16, "warmup": 50, "gamma": 0.95}},
    "seeds": [3]
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("cfrl-unit-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("run config round trip") {
  const auto cfg = run_config_from_json(tiny());
  CHECK(cfg.baseline.steps == 300);
  CHECK(cfg.cf.eval_every == 100);
  CHECK(cfg.cf_td3.hidden == std::vector<std::size_t>{16, 16});
  CHECK(cfg.env.params["horizon"] == 40);
  CHECK(cfg.env.params.contains("dt"));  // defaults filled in
  const auto j = to_json(cfg);
  CHECK(to_json(run_config_from_json(j)) == j);
}

TEST_CASE("run config rejects unknown keys and bad values") {
  auto j = tiny();
  j["cf"]["lamda"] = 1.0;
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
  j = tiny();
  j["env"]["params"]["gravity"] = -10;
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
  j = tiny();
  j["env"]["kind"] = "cartpole";
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
  j = tiny();
  j["dataset"]["window"] = 0;
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
  j = tiny();
  j["seeds"] = nlohmann::json::array();
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
}

TEST_CASE("constraint block parses") {
  auto j = tiny();
  j["env"] = nlohmann::json::parse(R"({"kind": "glucose"})");
  j["constraint"] = nlohmann::json::parse(
      R"({"intervals": [{"dim": 0, "high": 100, "high_open": true}], "policy_kind": "fixed", "action": [0.03]})");
  const auto cfg = run_config_from_json(j);
  REQUIRE(cfg.constraint.has_value());
  CHECK(cfg.constraint->action == Vec{0.03});
  CHECK(cfg.constraint->predicate(Vec{99.0, 0, 0}));
  j["constraint"]["action"] = {5.0};
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
}

TEST_CASE("multi-env variants") {
  auto j = tiny();
  j["env"] = nlohmann::json::parse(R"({"kind": "lander", "steps_per_round": 500,
    "variants": [{"env_id": "g10", "gravity": -10}, {"env_id": "g8", "gravity": -8}]})");
  const auto cfg = run_config_from_json(j);
  CHECK(cfg.env.num_variants() == 2);
  const auto envs = make_variants(cfg.env);
  CHECK(envs[1]->spec().env_id == "g8");
  j["env"]["variants"][1]["env_id"] = "g10";
  CHECK_THROWS(run_config_from_json(j));
}

TEST_CASE("dataset is reproducible and split disjointly") {
  const auto cfg = run_config_from_json(tiny());
  Td3Agent agent(config_spec(cfg), cfg.baseline.td3, 1);
  const auto policy = agent.policy_snapshot();
  const auto d1 = stage_gen_dataset(cfg, *policy, 3);
  const auto d2 = stage_gen_dataset(cfg, *policy, 3);
  REQUIRE(d1.train.size() == 4);
  REQUIRE(d1.test.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(trajectory_to_json(d1.train[i]).dump() == trajectory_to_json(d2.train[i]).dump());
    CHECK(trajectory_to_json(d1.test[i]).dump() == trajectory_to_json(d2.test[i]).dump());
    for (const auto& t : d1.train) CHECK(t.meta()["id"] != d1.test[i].meta()["id"]);
  }

  auto big = tiny();
  big["dataset"]["n_train"] = 6;
  big["dataset"]["n_test"] = 6;
  try {
    stage_gen_dataset(run_config_from_json(big), *policy, 3);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("8") != std::string::npos);
  }
}

TEST_CASE("mean and standard error") {
  auto m = mean_stderr({0.5});
  CHECK(m.mean == 0.5);
  CHECK(m.stderr_ == 0.0);
  m = mean_stderr({1.0, 2.0, 3.0, 4.0});
  CHECK(m.mean == 2.5);
  CHECK(m.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("trials pipeline writes outputs reproducibly") {
  const auto cfg = run_config_from_json(tiny());
  const auto a = scratch("trials-a");
  const auto b = scratch("trials-b");
  const auto ra = run_trials(cfg, a);
  const auto rb = run_trials(cfg, b);
  CHECK(!ra.partial());
  for (const char* f : {"metrics.json", "metrics.csv", "learning_curve.csv", "best_counterfactuals.csv",
                        "counterfactuals.jsonl", "train.jsonl", "test.jsonl", "baseline.ckpt.json",
                        "cf.ckpt.json"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / "seed-3" / f));
    CHECK(slurp(a / "seed-3" / f) == slurp(b / "seed-3" / f));
  }
  CHECK(slurp(a / "aggregate.json") == slurp(b / "aggregate.json"));
  const auto agg = read_json(a / "aggregate.json");
  CHECK(agg.dump().find("stderr") != std::string::npos);
  // 20 iterations of 10 steps: eval points at 100 and 200
  std::ifstream curve(a / "seed-3" / "learning_curve.csv");
  std::string line;
  std::getline(curve, line);
  CHECK(line == curve_csv_header());
  std::size_t rows = 0;
  while (std::getline(curve, line)) {
    ++rows;
    CHECK(line.rfind(std::to_string(rows * 100) + ",", 0) == 0);
  }
  CHECK(rows == 2);
  fs::remove_all(a);
  fs::remove_all(b);
}

#ifdef CFRL_CLI_PATH
TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli");
  const auto good = dir / "good.json";
  auto j = tiny();
  j["output_dir"] = (dir / "out").string();
  write_json(good, j);
  j["bogus"] = 1;
  const auto bad = dir / "bad.json";
  write_json(bad, j);
  const std::string cli = CFRL_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int rc = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
  };
  CHECK(run("--help") == 0);
  CHECK(run("nonsense") == 1);
  CHECK(run("train-baseline --config " + bad.string()) == 1);
  CHECK(run("eval --config " + good.string()) == 2);  // no checkpoints yet
  CHECK(run("train-baseline --config " + good.string()) == 0);
  CHECK(fs::exists(dir / "out" / "seed-3" / "baseline.ckpt.json"));
  CHECK(run("gen-dataset --config " + good.string()) == 0);
  CHECK(fs::exists(dir / "out" / "seed-3" / "test.jsonl"));
  fs::remove_all(dir);
}
#endif

#ifdef CFRL_CONFIG_DIR
TEST_CASE("shipped configs load") {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(CFRL_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    const auto cfg = load_run_config(e.path());
    CHECK(!cfg.seeds.empty());
    CHECK(make_variants(cfg.env).size() == cfg.env.num_variants());
    if (cfg.constraint && cfg.constraint->kind == PolicyKind::Fixed) CHECK_NOTHROW(make_cf_pool(cfg, nullptr));
    ++n;
  }
  CHECK(n >= 9);
}
#endif
