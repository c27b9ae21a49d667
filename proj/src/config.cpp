#include "cfrl/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "cfrl/glucose_env.hpp"
#include "cfrl/lander_env.hpp"
#include "cfrl/point_mass_env.hpp"

namespace cfrl {

using nlohmann::json;

namespace {

// Reads fields out of a JSON object, remembering which keys were consumed so
// leftovers can be reported.
class Reader {
 public:
  Reader(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw std::invalid_argument(ctx_ + ": expected an object");
  }

  template <class T>
  void operator()(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(ctx_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& ctx() const { return ctx_; }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.contains(k)) throw std::invalid_argument(ctx_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <class T>
  void operator()(const char* key, const T& v) {
    j[key] = v;
  }
  json j = json::object();
};

template <class V>
void visit(PointMassParams& p, V& v) {
  v("env_id", p.env_id);
  v("goal", p.goal);
  v("dt", p.dt);
  v("start_low", p.start_low);
  v("start_high", p.start_high);
  v("horizon", p.horizon);
  v("velocity_noise", p.velocity_noise);
}

template <class V>
void visit(GlucoseRewardTiers& t, V& v) {
  v("target_low", t.target_low);
  v("target_high", t.target_high);
  v("near_low", t.near_low);
  v("near_high", t.near_high);
  v("target_reward", t.target_reward);
  v("near_reward", t.near_reward);
  v("hypo_base", t.hypo_base);
  v("hypo_slope", t.hypo_slope);
  v("hyper_base", t.hyper_base);
  v("hyper_slope", t.hyper_slope);
}

template <class V>
void visit(Meal& m, V& v) {
  v("time_of_day_min", m.time_of_day_min);
  v("carbs_low_g", m.carbs_low_g);
  v("carbs_high_g", m.carbs_high_g);
}

template <class V>
void visit(GlucoseParams& p, V& v) {
  v("env_id", p.env_id);
  v("p1", p.p1);
  v("p2", p.p2);
  v("p3", p.p3);
  v("gb", p.gb);
  v("ib", p.ib);
  v("k_i", p.k_i);
  v("v_g", p.v_g);
  v("v_i", p.v_i);
  v("body_weight", p.body_weight);
  v("dt_min", p.dt_min);
  v("substeps", p.substeps);
  v("meal_tau_min", p.meal_tau_min);
  v("bioavailability", p.bioavailability);
  v("init_glucose_low", p.init_glucose_low);
  v("init_glucose_high", p.init_glucose_high);
  v("random_start_time", p.random_start_time);
  v("start_time_min", p.start_time_min);
  v("horizon", p.horizon);
  v("max_dose", p.max_dose);
  v("cgm_noise", p.cgm_noise);
  v("process_noise", p.process_noise);
}

template <class V>
void visit(LanderParams& p, V& v) {
  v("env_id", p.env_id);
  v("gravity", p.gravity);
  v("dt", p.dt);
  v("world_width", p.world_width);
  v("world_height", p.world_height);
  v("pad_height", p.pad_height);
  v("main_accel", p.main_accel);
  v("side_accel", p.side_accel);
  v("side_angular", p.side_angular);
  v("leg_dx", p.leg_dx);
  v("leg_dy", p.leg_dy);
  v("body_half_height", p.body_half_height);
  v("crash_speed", p.crash_speed);
  v("crash_angle", p.crash_angle);
  v("ground_friction", p.ground_friction);
  v("engine_dispersion", p.engine_dispersion);
  v("init_velocity", p.init_velocity);
  v("horizon", p.horizon);
  v("fps", p.fps);
}

template <class P>
P read_struct(const json& j, const std::string& ctx) {
  P p;
  Reader r(j, ctx);
  visit(p, r);
  r.finish();
  return p;
}

template <class P>
json write_struct(P p) {
  Writer w;
  visit(p, w);
  return w.j;
}

GlucoseParams read_glucose(const json& j) {
  json flat = j;
  flat.erase("meals");
  flat.erase("reward");
  auto p = read_struct<GlucoseParams>(flat, "env.params");
  if (j.contains("meals")) {
    const auto& m = j.at("meals");
    if (!m.is_array()) throw std::invalid_argument("env.params.meals: expected an array");
    p.meals.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      p.meals.push_back(read_struct<Meal>(m[i], "env.params.meals[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("reward")) p.reward = read_struct<GlucoseRewardTiers>(j.at("reward"), "env.params.reward");
  return p;
}

json write_glucose(const GlucoseParams& p) {
  json j = write_struct(p);
  j["meals"] = json::array();
  for (const auto& m : p.meals) j["meals"].push_back(write_struct(m));
  j["reward"] = write_struct(p.reward);
  return j;
}

std::string policy_kind_name(PolicyKind k) { return k == PolicyKind::Fixed ? "fixed" : "baseline"; }

Td3Hyper read_td3(const json& j, const std::string& ctx) {
  try {
    return td3_hyper_from_json(j);
  } catch (const std::exception& e) {
    throw std::invalid_argument(ctx + ": " + e.what());
  }
}

}  // namespace

json EnvConfig::variant_params(std::size_t i) const {
  if (variants.empty()) {
    if (i != 0) throw std::out_of_range("env: variant index out of range");
    return params;
  }
  json merged = params;
  merged.merge_patch(variants.at(i));
  return merged;
}

json env_params_effective(const std::string& kind, const json& params) {
  if (kind == "point_mass") return write_struct(read_struct<PointMassParams>(params, "env.params"));
  if (kind == "glucose") return write_glucose(read_glucose(params));
  if (kind == "lander") return write_struct(read_struct<LanderParams>(params, "env.params"));
  throw std::invalid_argument("env.kind: unknown environment kind '" + kind + "'");
}

std::unique_ptr<Environment> make_env(const std::string& kind, const json& params) {
  if (kind == "point_mass") return std::make_unique<PointMassEnv>(read_struct<PointMassParams>(params, "env.params"));
  if (kind == "glucose") return std::make_unique<GlucoseEnv>(read_glucose(params));
  if (kind == "lander") return std::make_unique<LanderEnv>(read_struct<LanderParams>(params, "env.params"));
  throw std::invalid_argument("env.kind: unknown environment kind '" + kind + "'");
}

std::vector<std::unique_ptr<Environment>> make_variants(const EnvConfig& env) {
  std::vector<std::unique_ptr<Environment>> out;
  for (std::size_t i = 0; i < env.num_variants(); ++i) out.push_back(make_env(env.kind, env.variant_params(i)));
  return out;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader top(j, "config");

  if (top.has("env")) {
    Reader r(top.at("env"), "env");
    r("kind", c.env.kind);
    json params = json::object();
    r("params", params);
    c.env.params = env_params_effective(c.env.kind, params);
    r("variants", c.env.variants);
    r("steps_per_round", c.env.steps_per_round);
    r.finish();
    std::set<std::string> ids;
    for (std::size_t i = 0; i < c.env.variants.size(); ++i) {
      const auto& v = c.env.variants[i];
      const auto ctx = "env.variants[" + std::to_string(i) + "]";
      if (!v.is_object() || !v.contains("env_id")) throw std::invalid_argument(ctx + ": must be an object with env_id");
      env_params_effective(c.env.kind, c.env.variant_params(i));
      if (!ids.insert(v.at("env_id").get<std::string>()).second) {
        throw std::invalid_argument(ctx + ": duplicate env_id");
      }
    }
  } else {
    c.env.params = env_params_effective(c.env.kind, json::object());
  }

  if (top.has("baseline")) {
    Reader r(top.at("baseline"), "baseline");
    r("steps", c.baseline.steps);
    r("eval_episodes", c.baseline.eval_episodes);
    if (r.has("td3")) c.baseline.td3 = read_td3(r.at("td3"), "baseline.td3");
    r.finish();
  }

  if (top.has("dataset")) {
    Reader r(top.at("dataset"), "dataset");
    auto& d = c.dataset;
    r("episodes_per_variant", d.episodes_per_variant);
    r("episode_steps", d.episode_steps);
    r("window", d.window);
    r("stride", d.stride);
    r("n_train", d.n_train);
    r("n_test", d.n_test);
    r.finish();
    if (d.window < 1 || d.stride < 1) throw std::invalid_argument("dataset: window and stride must be >= 1");
    if (d.episodes_per_variant < 1) throw std::invalid_argument("dataset: episodes_per_variant must be >= 1");
  }

  if (top.has("cf")) {
    Reader r(top.at("cf"), "cf");
    auto& f = c.cf;
    r("lambda", f.lambda);
    r("n_observed", f.n_observed);
    r("n_cf", f.n_cf);
    r("eval_every", f.eval_every);
    r("eval_rollouts", f.eval_rollouts);
    r("delta", f.distance.delta);
    r("p_norm", f.distance.p_norm);
    r("replay_noise", f.replay_noise);
    r("distance_includes_forced", f.distance_includes_forced);
    if (r.has("td3")) c.cf_td3 = read_td3(r.at("td3"), "cf.td3");
    r.finish();
    try {
      f.validate();
    } catch (const std::exception& e) {
      throw std::invalid_argument(e.what());
    }
  }

  if (top.has("constraint") && !j.at("constraint").is_null()) {
    Reader r(top.at("constraint"), "constraint");
    ConstraintConfig k;
    if (!r.has("intervals")) throw std::invalid_argument("constraint: intervals are required");
    try {
      k.predicate = interval_predicate_from_json(r.at("intervals"));
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("constraint.intervals: ") + e.what());
    }
    std::string kind = "fixed";
    r("policy_kind", kind);
    if (kind == "fixed") {
      k.kind = PolicyKind::Fixed;
    } else if (kind == "baseline") {
      k.kind = PolicyKind::Baseline;
    } else {
      throw std::invalid_argument("constraint.policy_kind: expected 'fixed' or 'baseline'");
    }
    r("action", k.action);
    r("checkpoint", k.checkpoint);
    if (r.has("max_constrained_steps")) {
      const auto& m = r.at("max_constrained_steps");
      if (!m.is_null()) k.max_constrained_steps = m.get<std::size_t>();
    }
    r.finish();
    if (k.kind == PolicyKind::Fixed) {
      const auto spec = make_env(c.env.kind, c.env.variant_params(0))->spec();
      if (k.action.size() != spec.action_dim || !spec.action_in_bounds(k.action)) {
        throw std::invalid_argument("constraint.action: must lie within the action bounds");
      }
    }
    for (const auto& iv : k.predicate.intervals) {
      const auto spec = make_env(c.env.kind, c.env.variant_params(0))->spec();
      if (iv.dim >= spec.state_dim) throw std::invalid_argument("constraint.intervals: dim out of range");
    }
    c.constraint = std::move(k);
  }

  if (top.has("seeds")) {
    top("seeds", c.seeds);
    if (c.seeds.empty()) throw std::invalid_argument("seeds: at least one seed is required");
  }
  top("output_dir", c.output_dir);
  top.finish();
  return c;
}

json to_json(const RunConfig& c) {
  json env = {{"kind", c.env.kind}, {"params", c.env.params}, {"steps_per_round", c.env.steps_per_round}};
  env["variants"] = c.env.variants;
  json out = {
      {"env", env},
      {"baseline", {{"steps", c.baseline.steps}, {"eval_episodes", c.baseline.eval_episodes}, {"td3", to_json(c.baseline.td3)}}},
      {"dataset",
       {{"episodes_per_variant", c.dataset.episodes_per_variant},
        {"episode_steps", c.dataset.episode_steps},
        {"window", c.dataset.window},
        {"stride", c.dataset.stride},
        {"n_train", c.dataset.n_train},
        {"n_test", c.dataset.n_test}}},
      {"cf",
       {{"lambda", c.cf.lambda},
        {"n_observed", c.cf.n_observed},
        {"n_cf", c.cf.n_cf},
        {"eval_every", c.cf.eval_every},
        {"eval_rollouts", c.cf.eval_rollouts},
        {"delta", c.cf.distance.delta},
        {"p_norm", c.cf.distance.p_norm},
        {"replay_noise", c.cf.replay_noise},
        {"distance_includes_forced", c.cf.distance_includes_forced},
        {"td3", to_json(c.cf_td3)}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir}};
  if (c.constraint) {
    const auto& k = *c.constraint;
    out["constraint"] = {{"intervals", to_json(k.predicate)},
                         {"policy_kind", policy_kind_name(k.kind)},
                         {"action", k.action},
                         {"checkpoint", k.checkpoint},
                         {"max_constrained_steps", k.max_constrained_steps ? json(*k.max_constrained_steps) : json(nullptr)}};
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace cfrl
