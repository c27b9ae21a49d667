#include "cfrl/td3.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfrl {

using nn::Matrix;
using nn::Vector;

namespace {

constexpr int kCheckpointVersion = 1;

bool finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<std::size_t> critic_dims(const EnvSpec& spec, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> d{spec.state_dim + spec.action_dim};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(1);
  return d;
}

std::vector<std::size_t> actor_dims(const EnvSpec& spec, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> d{spec.state_dim};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(spec.action_dim);
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity_ == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
  data_.reserve(std::min<std::size_t>(capacity_, 1U << 16U));
}

void ReplayBuffer::push(Transition t) {
  if (t.s.size() != state_dim_ || t.s_next.size() != state_dim_ || t.a.size() != action_dim_) {
    throw std::domain_error("replay buffer: transition has wrong dimensions");
  }
  if (!finite(t.s) || !finite(t.s_next) || !finite(t.a) || !std::isfinite(t.r)) {
    throw std::domain_error("replay buffer: non-finite transition");
  }
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
  }
  head_ = (head_ + 1) % capacity_;
  ++insertions_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw std::domain_error("replay buffer is empty");
  std::uniform_int_distribution<std::size_t> dist(0, data_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = dist(rng);
  return idx;
}

Batch ReplayBuffer::gather(std::span<const std::size_t> indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b{Matrix(static_cast<Eigen::Index>(state_dim_), n), Matrix(static_cast<Eigen::Index>(action_dim_), n),
          Vector(n), Matrix(static_cast<Eigen::Index>(state_dim_), n), Vector(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = data_.at(indices[static_cast<std::size_t>(j)]);
    for (std::size_t i = 0; i < state_dim_; ++i) {
      b.s(static_cast<Eigen::Index>(i), j) = t.s[i];
      b.s_next(static_cast<Eigen::Index>(i), j) = t.s_next[i];
    }
    for (std::size_t i = 0; i < action_dim_; ++i) b.a(static_cast<Eigen::Index>(i), j) = t.a[i];
    b.r(j) = t.r;
    b.done(j) = t.done ? 1.0 : 0.0;
  }
  return b;
}

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  const auto idx = sample_indices(n, rng);
  return gather(idx);
}

// ---------------------------------------------------------------------------
// Hyperparameters

void Td3Hyper::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("td3: gamma must lie in [0, 1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("td3: eta must lie in [0, 1]");
  if (policy_delay < 1) throw std::invalid_argument("td3: policy_delay must be >= 1");
  if (explore_sigma < 0.0 || target_sigma < 0.0 || target_clip < 0.0) {
    throw std::invalid_argument("td3: noise parameters must be non-negative");
  }
  if (batch_size < 1 || gradient_steps < 1 || train_freq < 1 || buffer_capacity < 1) {
    throw std::invalid_argument("td3: batch_size, gradient_steps, train_freq, buffer_capacity must be >= 1");
  }
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw std::invalid_argument("td3: learning rates must be > 0");
  for (auto h : hidden) {
    if (h == 0) throw std::invalid_argument("td3: hidden layer sizes must be >= 1");
  }
}

nlohmann::json to_json(const Td3Hyper& h) {
  return {{"gamma", h.gamma},
          {"eta", h.eta},
          {"policy_delay", h.policy_delay},
          {"explore_sigma", h.explore_sigma},
          {"target_sigma", h.target_sigma},
          {"target_clip", h.target_clip},
          {"batch_size", h.batch_size},
          {"actor_lr", h.actor_lr},
          {"critic_lr", h.critic_lr},
          {"gradient_steps", h.gradient_steps},
          {"train_freq", h.train_freq},
          {"warmup", h.warmup},
          {"buffer_capacity", h.buffer_capacity},
          {"hidden", h.hidden},
          {"random_warmup_actions", h.random_warmup_actions}};
}

Td3Hyper td3_hyper_from_json(const nlohmann::json& j) {
  Td3Hyper h;
  static const std::vector<std::string> known = {
      "gamma", "eta", "policy_delay", "explore_sigma", "target_sigma", "target_clip",
      "batch_size", "actor_lr", "critic_lr", "gradient_steps", "train_freq", "warmup",
      "buffer_capacity", "hidden", "random_warmup_actions"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("td3: unknown key '" + key + "'");
    }
  }
  h.gamma = j.value("gamma", h.gamma);
  h.eta = j.value("eta", h.eta);
  h.policy_delay = j.value("policy_delay", h.policy_delay);
  h.explore_sigma = j.value("explore_sigma", h.explore_sigma);
  h.target_sigma = j.value("target_sigma", h.target_sigma);
  h.target_clip = j.value("target_clip", h.target_clip);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.actor_lr = j.value("actor_lr", h.actor_lr);
  h.critic_lr = j.value("critic_lr", h.critic_lr);
  h.gradient_steps = j.value("gradient_steps", h.gradient_steps);
  h.train_freq = j.value("train_freq", h.train_freq);
  h.warmup = j.value("warmup", h.warmup);
  h.buffer_capacity = j.value("buffer_capacity", h.buffer_capacity);
  h.hidden = j.value("hidden", h.hidden);
  h.random_warmup_actions = j.value("random_warmup_actions", h.random_warmup_actions);
  h.validate();
  return h;
}

// ---------------------------------------------------------------------------
// DeterministicPolicy

DeterministicPolicy::DeterministicPolicy(nn::Mlp actor, Vec obs_center, Vec obs_scale)
    : actor_(std::move(actor)), obs_center_(std::move(obs_center)), obs_scale_(std::move(obs_scale)) {
  if (obs_center_.size() != actor_.input_dim() || obs_scale_.size() != actor_.input_dim()) {
    throw std::domain_error("policy: normalisation does not match actor input");
  }
}

Vec DeterministicPolicy::act(std::span<const double> obs) const {
  if (obs.size() != obs_center_.size()) throw std::domain_error("policy: observation has wrong dimension");
  Vec x(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) x[i] = (obs[i] - obs_center_[i]) / obs_scale_[i];
  return actor_.forward(x);
}

// ---------------------------------------------------------------------------
// Td3Agent

Td3Agent::Td3Agent(const EnvSpec& spec, Td3Hyper hyper, std::uint64_t seed)
    : spec_(spec),
      hyper_(std::move(hyper)),
      buffer_(hyper_.buffer_capacity, spec.state_dim, spec.action_dim),
      explore_rng_(substream(seed, "exploration")),
      replay_rng_(substream(seed, "replay")),
      target_rng_(substream(seed, "target-noise")) {
  spec_.validate();
  hyper_.validate();
  Rng init(substream(seed, "agent-init"));
  actor_ = nn::Mlp(actor_dims(spec_, hyper_.hidden), nn::Head::ScaledTanh, spec_.action_low, spec_.action_high);
  critic1_ = nn::Mlp(critic_dims(spec_, hyper_.hidden), nn::Head::Identity);
  critic2_ = nn::Mlp(critic_dims(spec_, hyper_.hidden), nn::Head::Identity);
  actor_.init_uniform(init);
  critic1_.init_uniform(init);
  critic2_.init_uniform(init);
  actor_t_ = actor_;
  critic1_t_ = critic1_;
  critic2_t_ = critic2_;
  actor_opt_ = nn::AdamState(actor_, {hyper_.actor_lr});
  critic1_opt_ = nn::AdamState(critic1_, {hyper_.critic_lr});
  critic2_opt_ = nn::AdamState(critic2_, {hyper_.critic_lr});
}

Matrix Td3Agent::normalize_obs(const Matrix& obs) const {
  Matrix out = obs;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    out.row(r) = ((out.row(r).array() - spec_.obs_center[i]) / spec_.obs_scale[i]).matrix();
  }
  return out;
}

Matrix Td3Agent::normalize_action(const Matrix& a) const {
  Matrix out = a;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    const double lo = spec_.action_low[i];
    const double span = spec_.action_high[i] - lo;
    out.row(r) = ((out.row(r).array() - lo) * (2.0 / span) - 1.0).matrix();
  }
  return out;
}

Matrix Td3Agent::denormalize_action(const Matrix& a) const {
  Matrix out = a;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    const double lo = spec_.action_low[i];
    const double span = spec_.action_high[i] - lo;
    out.row(r) = ((out.row(r).array() + 1.0) * (0.5 * span) + lo).matrix();
  }
  return out;
}

Matrix Td3Agent::critic_input(const Matrix& s_norm, const Matrix& a_norm) const {
  Matrix x(s_norm.rows() + a_norm.rows(), s_norm.cols());
  x.topRows(s_norm.rows()) = s_norm;
  x.bottomRows(a_norm.rows()) = a_norm;
  return x;
}

Vec Td3Agent::select_action(std::span<const double> obs, bool explore) {
  if (obs.size() != spec_.state_dim) throw std::domain_error("select_action: observation has wrong dimension");
  Matrix x(static_cast<Eigen::Index>(obs.size()), 1);
  for (std::size_t i = 0; i < obs.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = obs[i];
  const Matrix a = actor_.forward(normalize_obs(x));
  Vec out(a.data(), a.data() + a.size());
  if (explore && hyper_.explore_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, hyper_.explore_sigma);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double half_span = 0.5 * (spec_.action_high[i] - spec_.action_low[i]);
      out[i] += noise(explore_rng_) * half_span;
    }
    out = spec_.clip_action(out);
  }
  return out;
}

Vector Td3Agent::compute_target(const Batch& batch) {
  Matrix noise(static_cast<Eigen::Index>(spec_.action_dim), batch.size());
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index j = 0; j < noise.cols(); ++j) {
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = hyper_.target_sigma * dist(target_rng_);
  }
  return compute_target(batch, noise);
}

Vector Td3Agent::compute_target(const Batch& batch, const Matrix& noise) const {
  if (batch.size() == 0) throw std::domain_error("compute_target: empty batch");
  const Matrix s2 = normalize_obs(batch.s_next);
  Matrix a2 = normalize_action(actor_t_.forward(s2));
  const double c = hyper_.target_clip;
  a2 = (a2.array() + noise.array().max(-c).min(c)).max(-1.0).min(1.0).matrix();
  const Matrix x = critic_input(s2, a2);
  const Matrix q1 = critic1_t_.forward(x);
  const Matrix q2 = critic2_t_.forward(x);
  Vector y(batch.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    y(j) = batch.r(j) + hyper_.gamma * (1.0 - batch.done(j)) * std::min(q1(0, j), q2(0, j));
  }
  return y;
}

double Td3Agent::critic_step(const Batch& batch, const Vector& y) {
  const Matrix x = critic_input(normalize_obs(batch.s), normalize_action(batch.a));
  const double n = static_cast<double>(batch.size());
  double loss1 = 0.0;
  auto step_one = [&](nn::Mlp& critic, nn::AdamState& opt) {
    nn::Tape tape;
    const Matrix q = critic.forward(x, tape);
    const Matrix err = q - y.transpose();
    const double loss = err.squaredNorm() / n;
    if (!std::isfinite(loss)) throw TrainingError("critic loss is not finite");
    nn::adam_step(critic, opt, critic.backward(tape, (2.0 / n) * err));
    return loss;
  };
  loss1 = step_one(critic1_, critic1_opt_);
  const double loss2 = step_one(critic2_, critic2_opt_);
  return 0.5 * (loss1 + loss2);
}

double Td3Agent::actor_step(const Batch& batch) {
  const Matrix s = normalize_obs(batch.s);
  const double n = static_cast<double>(batch.size());
  nn::Tape actor_tape;
  const Matrix a = actor_.forward(s, actor_tape);
  nn::Tape critic_tape;
  const Matrix q = critic1_.forward(critic_input(s, normalize_action(a)), critic_tape);
  const double loss = -q.sum() / n;
  if (!std::isfinite(loss)) throw TrainingError("actor loss is not finite");
  // Maximise mean Q: upstream dLoss/dQ = -1/N.
  const Matrix up = Matrix::Constant(1, batch.size(), -1.0 / n);
  const auto cg = critic1_.backward(critic_tape, up);
  Matrix da = cg.input.bottomRows(static_cast<Eigen::Index>(spec_.action_dim));
  for (Eigen::Index r = 0; r < da.rows(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    da.row(r) *= 2.0 / (spec_.action_high[i] - spec_.action_low[i]);
  }
  nn::adam_step(actor_, actor_opt_, actor_.backward(actor_tape, da));
  return loss;
}

LossReport Td3Agent::update() {
  LossReport rep;
  if (buffer_.size() < hyper_.batch_size) {
    rep.skipped = true;
    rep.warning = "replay buffer holds " + std::to_string(buffer_.size()) + " transitions, batch needs " +
                  std::to_string(hyper_.batch_size);
    return rep;
  }
  double critic_sum = 0.0;
  double actor_sum = 0.0;
  for (std::size_t k = 0; k < hyper_.gradient_steps; ++k) {
    const Batch batch = buffer_.sample(hyper_.batch_size, replay_rng_);
    const Vector y = compute_target(batch);
    critic_sum += critic_step(batch, y);
    ++rep.critic_updates;
    ++iterations_;
    if (iterations_ % hyper_.policy_delay == 0) {
      actor_sum += actor_step(batch);
      ++rep.actor_updates;
      ++actor_updates_;
      nn::soft_update(critic1_t_, critic1_, hyper_.eta);
      nn::soft_update(critic2_t_, critic2_, hyper_.eta);
      nn::soft_update(actor_t_, actor_, hyper_.eta);
    }
  }
  rep.critic_loss = critic_sum / static_cast<double>(rep.critic_updates);
  if (rep.actor_updates > 0) rep.actor_loss = actor_sum / static_cast<double>(rep.actor_updates);
  return rep;
}

std::shared_ptr<const DeterministicPolicy> Td3Agent::policy_snapshot() const {
  return std::make_shared<const DeterministicPolicy>(actor_, spec_.obs_center, spec_.obs_scale);
}

nlohmann::json Td3Agent::checkpoint() const {
  return {{"format", "cfrl.td3"},
          {"version", kCheckpointVersion},
          {"env",
           {{"env_id", spec_.env_id},
            {"state_dim", spec_.state_dim},
            {"action_dim", spec_.action_dim},
            {"action_low", spec_.action_low},
            {"action_high", spec_.action_high},
            {"obs_center", spec_.obs_center},
            {"obs_scale", spec_.obs_scale}}},
          {"hyper", to_json(hyper_)},
          {"iterations", iterations_},
          {"actor_updates", actor_updates_},
          {"actor", nn::to_json(actor_)},
          {"critic1", nn::to_json(critic1_)},
          {"critic2", nn::to_json(critic2_)},
          {"actor_target", nn::to_json(actor_t_)},
          {"critic1_target", nn::to_json(critic1_t_)},
          {"critic2_target", nn::to_json(critic2_t_)},
          {"actor_opt", nn::to_json(actor_opt_)},
          {"critic1_opt", nn::to_json(critic1_opt_)},
          {"critic2_opt", nn::to_json(critic2_opt_)}};
}

Td3Agent Td3Agent::from_checkpoint(const nlohmann::json& j, const EnvSpec& spec, std::uint64_t seed) {
  if (j.value("format", "") != "cfrl.td3") throw std::domain_error("checkpoint: not a cfrl.td3 container");
  if (j.at("version").get<int>() != kCheckpointVersion) throw std::domain_error("checkpoint: unsupported version");
  const auto& e = j.at("env");
  if (e.at("state_dim").get<std::size_t>() != spec.state_dim ||
      e.at("action_dim").get<std::size_t>() != spec.action_dim ||
      e.at("action_low").get<Vec>() != spec.action_low || e.at("action_high").get<Vec>() != spec.action_high ||
      e.at("obs_center").get<Vec>() != spec.obs_center || e.at("obs_scale").get<Vec>() != spec.obs_scale) {
    throw std::domain_error("checkpoint was trained on '" + e.at("env_id").get<std::string>() +
                            "', whose spaces do not match environment '" + spec.env_id + "'");
  }
  Td3Agent agent(spec, td3_hyper_from_json(j.at("hyper")), seed);
  agent.actor_ = nn::mlp_from_json(j.at("actor"));
  agent.critic1_ = nn::mlp_from_json(j.at("critic1"));
  agent.critic2_ = nn::mlp_from_json(j.at("critic2"));
  agent.actor_t_ = nn::mlp_from_json(j.at("actor_target"));
  agent.critic1_t_ = nn::mlp_from_json(j.at("critic1_target"));
  agent.critic2_t_ = nn::mlp_from_json(j.at("critic2_target"));
  agent.actor_opt_ = nn::adam_from_json(j.at("actor_opt"), agent.actor_);
  agent.critic1_opt_ = nn::adam_from_json(j.at("critic1_opt"), agent.critic1_);
  agent.critic2_opt_ = nn::adam_from_json(j.at("critic2_opt"), agent.critic2_);
  agent.iterations_ = j.at("iterations").get<std::size_t>();
  agent.actor_updates_ = j.at("actor_updates").get<std::size_t>();
  return agent;
}

// ---------------------------------------------------------------------------
// Online training

BaselineResult train_baseline(MultiEnvScheduler& scheduler, std::size_t steps, const Td3Hyper& hyper,
                              std::uint64_t seed, const TrainLogFn& log) {
  const EnvSpec spec = scheduler.variant(0).spec();
  BaselineResult out{Td3Agent(spec, hyper, seed), {}, {}};
  auto& agent = out.agent;
  const auto env_seed = substream(seed, "env");
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Vec obs;
  bool need_reset = true;
  std::uint64_t episode = 0;
  double ep_return = 0.0;
  const std::size_t ready = std::max(hyper.warmup, hyper.batch_size);

  for (std::size_t t = 0; t < steps; ++t) {
    Environment& env = scheduler.next();
    if (scheduler.switched() || need_reset) {
      if (!need_reset && t > 0) out.episode_returns.push_back(ep_return);
      obs = env.reset(substream(env_seed, "episode", episode++)).observable;
      ep_return = 0.0;
      need_reset = false;
    }
    Vec action;
    if (t < hyper.warmup && hyper.random_warmup_actions) {
      action.resize(spec.action_dim);
      for (std::size_t i = 0; i < spec.action_dim; ++i) {
        action[i] = spec.action_low[i] + unit(agent.rng()) * (spec.action_high[i] - spec.action_low[i]);
      }
    } else {
      action = agent.select_action(obs, true);
    }
    auto res = env.step(action);
    if (!std::isfinite(res.reward)) throw TrainingError("environment produced a non-finite reward");
    agent.buffer().push({obs, action, res.reward, res.next_state.observable, res.done});
    ep_return += res.reward;
    obs = std::move(res.next_state.observable);
    if (res.done) {
      out.episode_returns.push_back(ep_return);
      need_reset = true;
    }
    if ((t + 1) % hyper.train_freq == 0 && agent.buffer().size() >= ready) {
      const auto rep = agent.update();
      if (log && !rep.skipped) log({t + 1, rep.critic_loss, rep.actor_loss});
    }
  }
  out.steps_per_variant = scheduler.step_counts();
  return out;
}

BaselineResult train_baseline(const Environment& env, std::size_t steps, const Td3Hyper& hyper,
                              std::uint64_t seed, const TrainLogFn& log) {
  std::vector<std::unique_ptr<Environment>> v;
  v.push_back(env.clone());
  MultiEnvScheduler sched(std::move(v), std::numeric_limits<std::size_t>::max());
  return train_baseline(sched, steps, hyper, seed, log);
}

double evaluate_policy(const DeterministicPolicy& policy, Environment& env, std::size_t episodes,
                       std::uint64_t seed) {
  if (episodes == 0) throw std::domain_error("evaluate_policy: episodes must be >= 1");
  double total = 0.0;
  for (std::size_t k = 0; k < episodes; ++k) {
    auto s = env.reset(substream(seed, "eval-episode", k));
    for (std::size_t t = 0; t < env.spec().horizon; ++t) {
      auto res = env.step(policy.act(s.observable));
      total += res.reward;
      s = std::move(res.next_state);
      if (res.done) break;
    }
  }
  return total / static_cast<double>(episodes);
}

}  // namespace cfrl
