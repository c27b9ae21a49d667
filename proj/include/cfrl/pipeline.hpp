#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrl/cfgen.hpp"
#include "cfrl/config.hpp"
#include "cfrl/metrics.hpp"
#include "cfrl/td3.hpp"

namespace cfrl {

namespace fs = std::filesystem;

/// Spec shared by every variant of the configured environment.
EnvSpec config_spec(const RunConfig& cfg);

struct BaselineStage {
  Td3Agent agent;
  std::vector<double> episode_returns;
  std::vector<std::size_t> steps_per_variant;
  double eval_return = 0.0;
};

/// Online training of the trajectory-generating policy. Writes the agent
/// checkpoint and a (step, critic_loss, actor_loss) CSV when paths are given.
BaselineStage stage_train_baseline(const RunConfig& cfg, std::uint64_t seed, const fs::path& checkpoint = {},
                                   const fs::path& log_csv = {});

Td3Agent load_agent(const fs::path& checkpoint, const EnvSpec& spec, std::uint64_t seed);

struct Dataset {
  std::vector<Trajectory> train;
  std::vector<Trajectory> test;
};

/// Records baseline episodes in every variant, cuts sliding windows, shuffles
/// them and splits disjointly. Throws std::runtime_error naming the
/// achievable count when there are not enough windows.
Dataset stage_gen_dataset(const RunConfig& cfg, const DeterministicPolicy& baseline, std::uint64_t seed);

/// Unwrapped environments, one per variant.
EnvPool make_plain_pool(const RunConfig& cfg);
/// Environments for the proposed method: wrapped in the constraint when the
/// config has one. `baseline` backs the baseline policy kind.
EnvPool make_cf_pool(const RunConfig& cfg, std::shared_ptr<const DeterministicPolicy> baseline);

struct CfStage {
  Td3Agent agent;
  TrainCfResult result;
};

/// Counterfactual policy training with periodic evaluation on `test`.
/// Streams the learning curve to `curve_csv` when given.
CfStage stage_train_cf(const RunConfig& cfg, std::shared_ptr<const DeterministicPolicy> baseline,
                       const std::vector<Trajectory>& train, const std::vector<Trajectory>& test,
                       std::uint64_t seed, const fs::path& curve_csv = {}, const fs::path& log_csv = {});

struct EvalStage {
  MethodEval proposed;
  MethodEval baseline;
  MetricsReport report;
};

EvalStage stage_eval(const RunConfig& cfg, const DeterministicPolicy& cf_policy,
                     std::shared_ptr<const DeterministicPolicy> baseline, const std::vector<Trajectory>& test,
                     std::uint64_t seed);

/// metrics.json, metrics.csv, best_counterfactuals.csv, counterfactuals.jsonl.
void write_eval_outputs(const fs::path& dir, const std::vector<Trajectory>& test, const EvalStage& eval);

/// Full pipeline for one seed into `dir`.
MetricsReport run_trial(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir);

struct TrialsOutcome {
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<MetricsReport>> reports;
  std::vector<std::string> errors;
  bool partial() const;
};

/// Runs every configured seed into <out>/seed-<s>/ and writes aggregate.json
/// and aggregate.txt to `out`.
TrialsOutcome run_trials(const RunConfig& cfg, const fs::path& out);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

/// Sample mean and standard error of the mean; one value gives stderr 0.
MeanStderr mean_stderr(const std::vector<double>& xs);

nlohmann::json aggregate_json(const TrialsOutcome& t);
std::string aggregate_table(const TrialsOutcome& t);

void write_text(const fs::path& path, const std::string& text);
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

}  // namespace cfrl
