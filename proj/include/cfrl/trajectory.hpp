#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrl/types.hpp"

namespace cfrl {

struct Step {
  Vec state;
  Vec action;
  double reward = 0.0;
};

using ActionSeq = std::vector<Vec>;

/// An observed or generated rollout: (state, action, reward) triples over
/// time steps 0..n. The cumulative return is always recomputed from the
/// stored rewards.
///
/// `start` holds the simulator state at step 0 when the trajectory can be
/// replayed from its beginning (dataset windows carry one; imported data may
/// not).
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<Step> steps, std::string env_id = {},
                      std::optional<EnvState> start = std::nullopt,
                      nlohmann::json meta = nlohmann::json::object());

  const std::vector<Step>& steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_.size(); }
  bool empty() const noexcept { return steps_.empty(); }
  const Step& operator[](std::size_t i) const { return steps_.at(i); }

  std::size_t state_dim() const noexcept;
  std::size_t action_dim() const noexcept;

  /// State of step 0. Throws std::domain_error on an empty trajectory.
  const Vec& initial_state() const;

  ActionSeq actions() const;
  Vec rewards() const;

  const std::string& env_id() const noexcept { return env_id_; }
  const std::optional<EnvState>& start() const noexcept { return start_; }
  const nlohmann::json& meta() const noexcept { return meta_; }
  nlohmann::json& meta() noexcept { return meta_; }

 private:
  std::vector<Step> steps_;
  std::string env_id_;
  std::optional<EnvState> start_;
  nlohmann::json meta_ = nlohmann::json::object();
};

/// G(traj): sum of per-step rewards. Throws std::domain_error when empty.
double cumulative_return(const Trajectory& traj);

struct DistanceParams {
  double delta = 1e-3;
  int p_norm = 1;

  void validate() const;
};

double lp_norm(std::span<const double> v, int p);

/// Directed action-sequence distance
///   sum_i ||observed_i - other_i||_p / (||observed_i||_p + delta).
/// The observed sequence always goes first; the measure is not symmetric.
double action_distance(const ActionSeq& observed, const ActionSeq& other,
                       const DistanceParams& params = {});

// JSON-lines persistence. One trajectory per line with fields `states`,
// `actions`, `rewards`, `env_id`, `meta`. A replayable start state is stored
// under meta.start = {observable, internal}.
nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);
void write_jsonl(const std::filesystem::path& path, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_jsonl(const std::filesystem::path& path);

}  // namespace cfrl
