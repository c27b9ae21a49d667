#include "cfrl/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cfrl {

Trajectory::Trajectory(std::vector<Step> steps, std::string env_id,
                       std::optional<EnvState> start, nlohmann::json meta)
    : steps_(std::move(steps)),
      env_id_(std::move(env_id)),
      start_(std::move(start)),
      meta_(std::move(meta)) {
  if (!meta_.is_object()) throw std::domain_error("trajectory meta must be an object");
  if (steps_.empty()) return;
  const auto sd = steps_.front().state.size();
  const auto ad = steps_.front().action.size();
  for (const auto& s : steps_) {
    if (s.state.size() != sd) throw std::domain_error("trajectory: inconsistent state dimension");
    if (s.action.size() != ad) throw std::domain_error("trajectory: inconsistent action dimension");
  }
  if (start_ && start_->observable != steps_.front().state) {
    throw std::domain_error("trajectory: start observable differs from state of step 0");
  }
}

std::size_t Trajectory::state_dim() const noexcept {
  return steps_.empty() ? 0 : steps_.front().state.size();
}

std::size_t Trajectory::action_dim() const noexcept {
  return steps_.empty() ? 0 : steps_.front().action.size();
}

const Vec& Trajectory::initial_state() const {
  if (steps_.empty()) throw std::domain_error("trajectory is empty");
  return steps_.front().state;
}

ActionSeq Trajectory::actions() const {
  ActionSeq out;
  out.reserve(steps_.size());
  for (const auto& s : steps_) out.push_back(s.action);
  return out;
}

Vec Trajectory::rewards() const {
  Vec out;
  out.reserve(steps_.size());
  for (const auto& s : steps_) out.push_back(s.reward);
  return out;
}

double cumulative_return(const Trajectory& traj) {
  if (traj.empty()) throw std::domain_error("cumulative_return: empty trajectory");
  double g = 0.0;
  for (const auto& s : traj.steps()) g += s.reward;
  return g;
}

void DistanceParams::validate() const {
  if (!(delta > 0.0)) throw std::domain_error("distance delta must be > 0");
  if (p_norm < 1) throw std::domain_error("distance p_norm must be >= 1");
}

double lp_norm(std::span<const double> v, int p) {
  if (p == 1) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  }
  if (p == 2) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

double action_distance(const ActionSeq& observed, const ActionSeq& other,
                       const DistanceParams& params) {
  params.validate();
  if (observed.size() != other.size()) {
    throw std::domain_error("action_distance: sequence lengths differ (" +
                            std::to_string(observed.size()) + " vs " +
                            std::to_string(other.size()) + ")");
  }
  double total = 0.0;
  Vec diff;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const auto& a = observed[i];
    const auto& b = other[i];
    if (a.size() != b.size()) throw std::domain_error("action_distance: action dimensions differ");
    diff.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) diff[k] = a[k] - b[k];
    total += lp_norm(diff, params.p_norm) / (lp_norm(a, params.p_norm) + params.delta);
  }
  return total;
}

namespace {

bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

nlohmann::json trajectory_to_json(const Trajectory& traj) {
  nlohmann::json states = nlohmann::json::array();
  nlohmann::json actions = nlohmann::json::array();
  nlohmann::json rewards = nlohmann::json::array();
  for (const auto& s : traj.steps()) {
    states.push_back(s.state);
    actions.push_back(s.action);
    rewards.push_back(s.reward);
  }
  nlohmann::json meta = traj.meta();
  if (traj.start()) {
    meta["start"] = {{"observable", traj.start()->observable},
                     {"internal", traj.start()->internal}};
  }
  return {{"states", std::move(states)},
          {"actions", std::move(actions)},
          {"rewards", std::move(rewards)},
          {"env_id", traj.env_id()},
          {"meta", std::move(meta)}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  for (const char* key : {"states", "actions", "rewards", "env_id", "meta"}) {
    if (!j.contains(key)) throw std::domain_error(std::string("trajectory json: missing field ") + key);
  }
  const auto states = j.at("states").get<std::vector<Vec>>();
  const auto actions = j.at("actions").get<std::vector<Vec>>();
  const auto rewards = j.at("rewards").get<Vec>();
  if (states.empty()) throw std::domain_error("trajectory json: no steps");
  if (states.size() != actions.size() || states.size() != rewards.size()) {
    throw std::domain_error("trajectory json: states/actions/rewards lengths differ");
  }
  std::vector<Step> steps;
  steps.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!all_finite(states[i]) || !all_finite(actions[i]) || !std::isfinite(rewards[i])) {
      throw std::domain_error("trajectory json: non-finite value at step " + std::to_string(i));
    }
    steps.push_back({states[i], actions[i], rewards[i]});
  }
  nlohmann::json meta = j.at("meta");
  std::optional<EnvState> start;
  if (meta.is_object() && meta.contains("start")) {
    start = EnvState{meta["start"].at("observable").get<Vec>(),
                     meta["start"].at("internal").get<Vec>()};
    meta.erase("start");
  }
  return Trajectory(std::move(steps), j.at("env_id").get<std::string>(), std::move(start),
                    std::move(meta));
}

void write_jsonl(const std::filesystem::path& path, std::span<const Trajectory> trajs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& t : trajs) out << trajectory_to_json(t).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Trajectory> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Trajectory> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(trajectory_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::domain_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cfrl
