// Command-line front end: each subcommand runs one pipeline stage, `trials`
// runs all of them for every configured seed.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfrl/config.hpp"
#include "cfrl/pipeline.hpp"
#include "cfrl/trajectory.hpp"

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t pick_seed(const cfrl::RunConfig& cfg, const std::optional<std::uint64_t>& seed) {
  return seed ? *seed : cfg.seeds.front();
}

cfrl::fs::path default_path(const cfrl::RunConfig& cfg, std::uint64_t seed, const char* file) {
  return cfrl::fs::path(cfg.output_dir) / ("seed-" + std::to_string(seed)) / file;
}

cfrl::RunConfig load(const std::string& path) {
  try {
    return cfrl::load_run_config(path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::shared_ptr<const cfrl::DeterministicPolicy> load_policy(const cfrl::RunConfig& cfg, const std::string& path) {
  return cfrl::load_agent(path, cfrl::config_spec(cfg), 0).policy_snapshot();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations for continuous-action RL trajectories"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string baseline_ckpt, cf_ckpt, train_path, test_path, out_path, curve_path, log_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (default: first seed in the config)");
  };

  auto* tb = app.add_subcommand("train-baseline", "train the trajectory-generating policy");
  add_common(tb);
  tb->add_option("--out", out_path, "checkpoint to write");
  tb->add_option("--log", log_path, "training log CSV");

  auto* gd = app.add_subcommand("gen-dataset", "roll out the baseline and cut train/test windows");
  add_common(gd);
  gd->add_option("--baseline", baseline_ckpt, "baseline checkpoint");
  gd->add_option("--train", train_path, "train JSONL to write");
  gd->add_option("--test", test_path, "test JSONL to write");

  auto* tc = app.add_subcommand("train-cf", "train the counterfactual policy");
  add_common(tc);
  tc->add_option("--baseline", baseline_ckpt, "baseline checkpoint");
  tc->add_option("--train", train_path, "train JSONL");
  tc->add_option("--test", test_path, "test JSONL (learning-curve evaluation)");
  tc->add_option("--out", out_path, "counterfactual checkpoint to write");
  tc->add_option("--curve", curve_path, "learning-curve CSV to write");
  tc->add_option("--log", log_path, "training log CSV");

  auto* ev = app.add_subcommand("eval", "evaluate both methods on the test set");
  add_common(ev);
  ev->add_option("--cf", cf_ckpt, "counterfactual checkpoint");
  ev->add_option("--baseline", baseline_ckpt, "baseline checkpoint");
  ev->add_option("--test", test_path, "test JSONL");
  ev->add_option("--out", out_path, "output directory");

  auto* tr = app.add_subcommand("trials", "full pipeline for every configured seed");
  add_common(tr);
  tr->add_option("--out", out_path, "output directory (default: output_dir from the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const auto cfg = load(config);
    const auto s = pick_seed(cfg, seed);
    auto or_default = [&](const std::string& given, const char* file) {
      return given.empty() ? default_path(cfg, s, file) : cfrl::fs::path(given);
    };

    if (*tb) {
      const auto ckpt = or_default(out_path, "baseline.ckpt.json");
      const auto log = or_default(log_path, "baseline_log.csv");
      auto res = cfrl::stage_train_baseline(cfg, s, ckpt, log);
      std::cout << "baseline checkpoint: " << ckpt.string() << "\nmean evaluation return: "
                << cfrl::format_number(res.eval_return) << "\n";
    } else if (*gd) {
      const auto policy = load_policy(cfg, or_default(baseline_ckpt, "baseline.ckpt.json"));
      const auto ds = cfrl::stage_gen_dataset(cfg, *policy, s);
      const auto tr_path = or_default(train_path, "train.jsonl");
      const auto te_path = or_default(test_path, "test.jsonl");
      cfrl::write_jsonl(tr_path, ds.train);
      cfrl::write_jsonl(te_path, ds.test);
      std::cout << ds.train.size() << " train -> " << tr_path.string() << "\n"
                << ds.test.size() << " test -> " << te_path.string() << "\n";
    } else if (*tc) {
      const auto policy = load_policy(cfg, or_default(baseline_ckpt, "baseline.ckpt.json"));
      const auto train = cfrl::read_jsonl(or_default(train_path, "train.jsonl"));
      const auto test = cfrl::read_jsonl(or_default(test_path, "test.jsonl"));
      const auto ckpt = or_default(out_path, "cf.ckpt.json");
      auto res = cfrl::stage_train_cf(cfg, policy, train, test, s, or_default(curve_path, "learning_curve.csv"),
                                      or_default(log_path, "cf_log.csv"));
      cfrl::write_json(ckpt, res.agent.checkpoint());
      std::cout << "counterfactual checkpoint: " << ckpt.string() << " (" << res.result.interactions
                << " interactions)\n";
    } else if (*ev) {
      const auto policy = load_policy(cfg, or_default(baseline_ckpt, "baseline.ckpt.json"));
      const auto cf = load_policy(cfg, or_default(cf_ckpt, "cf.ckpt.json"));
      const auto test = cfrl::read_jsonl(or_default(test_path, "test.jsonl"));
      const auto dir = out_path.empty() ? default_path(cfg, s, "") : cfrl::fs::path(out_path);
      const auto res = cfrl::stage_eval(cfg, *cf, policy, test, s);
      cfrl::write_eval_outputs(dir, test, res);
      std::cout << res.report.to_json().dump(2) << "\n";
    } else if (*tr) {
      const auto dir = out_path.empty() ? cfrl::fs::path(cfg.output_dir) : cfrl::fs::path(out_path);
      const auto t = cfrl::run_trials(cfg, dir);
      std::cout << cfrl::aggregate_table(t);
      return t.partial() ? 2 : 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
