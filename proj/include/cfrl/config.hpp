#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrl/cfgen.hpp"
#include "cfrl/constrained.hpp"
#include "cfrl/env.hpp"
#include "cfrl/td3.hpp"

namespace cfrl {

/// Environment block. `params` holds the effective parameters of the chosen
/// kind (defaults filled in); each variant is a partial override that must
/// at least name its env_id. No variants means a single environment.
struct EnvConfig {
  std::string kind = "point_mass";
  nlohmann::json params = nlohmann::json::object();
  std::vector<nlohmann::json> variants;
  /// Interaction steps per variant per round during baseline training;
  /// 0 means the whole budget goes to one variant before rotating.
  std::size_t steps_per_round = 0;

  std::size_t num_variants() const noexcept { return variants.empty() ? 1 : variants.size(); }
  nlohmann::json variant_params(std::size_t i) const;
};

struct BaselineConfig {
  std::size_t steps = 20000;
  Td3Hyper td3;
  /// Episodes for the reported mean return of the trained baseline.
  std::size_t eval_episodes = 10;
};

struct DatasetConfig {
  std::size_t episodes_per_variant = 1;
  /// Length of each recorded episode; 0 means the environment horizon.
  std::size_t episode_steps = 0;
  std::size_t window = 20;
  std::size_t stride = 20;
  std::size_t n_train = 18;
  std::size_t n_test = 18;
};

struct ConstraintConfig {
  IntervalPredicate predicate;
  PolicyKind kind = PolicyKind::Fixed;
  /// Constant action for the fixed kind.
  Vec action;
  /// Baseline checkpoint for the baseline kind; empty means the baseline
  /// trained by the same run.
  std::string checkpoint;
  std::optional<std::size_t> max_constrained_steps;
};

struct RunConfig {
  EnvConfig env;
  BaselineConfig baseline;
  DatasetConfig dataset;
  CfConfig cf;
  Td3Hyper cf_td3;
  std::optional<ConstraintConfig> constraint;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "runs";
};

/// Throws std::invalid_argument (with the offending key) on unknown keys,
/// wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

/// Effective parameters for `kind`, with unknown keys rejected.
nlohmann::json env_params_effective(const std::string& kind, const nlohmann::json& params);
std::unique_ptr<Environment> make_env(const std::string& kind, const nlohmann::json& params);
std::vector<std::unique_ptr<Environment>> make_variants(const EnvConfig& env);

}  // namespace cfrl
