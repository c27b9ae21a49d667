#include "cfrl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cfrl/constrained.hpp"
#include "cfrl/log.hpp"
#include "cfrl/rng.hpp"

namespace cfrl {

using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void append_vec(std::string& line, const Vec& v) {
  for (double x : v) line += "," + format_number(x);
}

std::string join_header(const std::string& prefix, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "," + prefix + std::to_string(i);
  return s;
}

// Sidecar log: the only place wall-clock time appears.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(open_out(path)) {}
  void operator()(const std::string& msg) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " " << msg << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::function<void(const TrainLogRow&)> csv_logger(std::ofstream* out) {
  if (!out) return {};
  return [out](const TrainLogRow& row) {
    *out << row.step << "," << format_number(row.critic_loss) << "," << format_optional(row.actor_loss) << "\n";
  };
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

EnvSpec config_spec(const RunConfig& cfg) { return make_env(cfg.env.kind, cfg.env.variant_params(0))->spec(); }

BaselineStage stage_train_baseline(const RunConfig& cfg, std::uint64_t seed, const fs::path& checkpoint,
                                   const fs::path& log_csv) {
  auto variants = make_variants(cfg.env);
  const std::size_t quota = cfg.env.steps_per_round > 0 ? cfg.env.steps_per_round
                                                         : std::max<std::size_t>(cfg.baseline.steps, 1);
  MultiEnvScheduler sched(std::move(variants), quota);
  std::optional<std::ofstream> log;
  if (!log_csv.empty()) {
    log = open_out(log_csv);
    *log << "step,critic_loss,actor_loss\n";
  }
  auto res = train_baseline(sched, cfg.baseline.steps, cfg.baseline.td3, substream(seed, "baseline"),
                            csv_logger(log ? &*log : nullptr));
  BaselineStage out{std::move(res.agent), std::move(res.episode_returns), std::move(res.steps_per_variant), 0.0};
  if (cfg.baseline.eval_episodes > 0) {
    const auto policy = out.agent.policy_snapshot();
    double sum = 0.0;
    for (std::size_t i = 0; i < sched.size(); ++i) {
      sum += evaluate_policy(*policy, sched.variant(i), cfg.baseline.eval_episodes,
                             substream(seed, "baseline-eval", i));
    }
    out.eval_return = sum / static_cast<double>(sched.size());
  }
  if (!checkpoint.empty()) write_json(checkpoint, out.agent.checkpoint());
  return out;
}

Td3Agent load_agent(const fs::path& checkpoint, const EnvSpec& spec, std::uint64_t seed) {
  return Td3Agent::from_checkpoint(read_json(checkpoint), spec, seed);
}

Dataset stage_gen_dataset(const RunConfig& cfg, const DeterministicPolicy& baseline, std::uint64_t seed) {
  const auto& d = cfg.dataset;
  auto variants = make_variants(cfg.env);
  std::vector<Trajectory> windows;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    auto& env = *variants[v];
    const std::size_t len = d.episode_steps > 0 ? d.episode_steps : env.spec().horizon;
    for (std::size_t e = 0; e < d.episodes_per_variant; ++e) {
      const auto reset_seed = substream(seed, "dataset-env", (static_cast<std::uint64_t>(v) << 32U) + e);
      auto ep = record_episode(baseline, env, reset_seed, len);
      ep.trajectory.meta()["episode"] = e;
      for (auto& w : sliding_window_dataset(ep, d.window, d.stride)) {
        w.meta()["id"] = env.spec().env_id + "/e" + std::to_string(e) + "/t" +
                         std::to_string(w.meta().at("window_start").get<std::size_t>());
        windows.push_back(std::move(w));
      }
    }
  }
  const std::size_t need = d.n_train + d.n_test;
  if (windows.size() < need) {
    throw std::runtime_error("dataset: " + std::to_string(windows.size()) + " windows achievable, " +
                             std::to_string(need) + " requested (n_train " + std::to_string(d.n_train) +
                             " + n_test " + std::to_string(d.n_test) + ")");
  }
  Rng rng(substream(seed, "dataset-split"));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = windows.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(windows[i - 1], windows[j]);
  }
  Dataset out;
  for (std::size_t i = 0; i < need; ++i) {
    auto& w = windows[i];
    w.meta()["split"] = i < d.n_train ? "train" : "test";
    (i < d.n_train ? out.train : out.test).push_back(std::move(w));
  }
  return out;
}

EnvPool make_plain_pool(const RunConfig& cfg) {
  EnvPool pool;
  for (auto& env : make_variants(cfg.env)) pool.add(std::move(env));
  return pool;
}

EnvPool make_cf_pool(const RunConfig& cfg, std::shared_ptr<const DeterministicPolicy> baseline) {
  if (!cfg.constraint) return make_plain_pool(cfg);
  const auto& k = *cfg.constraint;
  ConstraintSpec spec;
  if (k.kind == PolicyKind::Fixed) {
    spec = ConstraintSpec::fixed(k.predicate, k.action);
  } else {
    auto policy = baseline;
    if (!k.checkpoint.empty()) policy = load_agent(k.checkpoint, config_spec(cfg), 0).policy_snapshot();
    if (!policy) throw std::invalid_argument("constraint: baseline policy kind needs a baseline checkpoint");
    spec = ConstraintSpec::baseline(k.predicate, std::move(policy));
  }
  spec.max_constrained_steps = k.max_constrained_steps;
  EnvPool pool;
  for (auto& env : make_variants(cfg.env)) pool.add(std::make_unique<AugmentedEnv>(std::move(env), spec));
  return pool;
}

CfStage stage_train_cf(const RunConfig& cfg, std::shared_ptr<const DeterministicPolicy> baseline,
                       const std::vector<Trajectory>& train, const std::vector<Trajectory>& test,
                       std::uint64_t seed, const fs::path& curve_csv, const fs::path& log_csv) {
  auto pool = make_cf_pool(cfg, baseline);
  auto plain = make_plain_pool(cfg);
  CfStage out{Td3Agent(pool.spec(), cfg.cf_td3, substream(seed, "cf-agent")), {}};
  const auto eval_seed = substream(seed, "eval");

  std::optional<MethodEval> base_eval;
  CfEvalSetup setup;
  if (cfg.cf.eval_every > 0 && !test.empty()) {
    if (!baseline) throw std::invalid_argument("train_cf: evaluation needs the baseline policy");
    base_eval = baseline_counterfactuals(*baseline, plain, test, cfg.cf, eval_seed);
    setup = {&test, &*base_eval, eval_seed};
  }
  std::optional<std::ofstream> curve;
  if (!curve_csv.empty()) {
    curve = open_out(curve_csv);
    *curve << curve_csv_header() << "\n";
  }
  std::optional<std::ofstream> log;
  if (!log_csv.empty()) {
    log = open_out(log_csv);
    *log << "step,critic_loss,actor_loss\n";
  }
  const CurveFn on_curve = [&](const CurveRow& row) {
    if (curve) {
      *curve << curve_csv_line(row) << "\n";
      curve->flush();
    }
  };
  out.result = train_cf(out.agent, pool, train, cfg.cf, substream(seed, "cf-train"), base_eval ? &setup : nullptr,
                        csv_logger(log ? &*log : nullptr), on_curve);
  return out;
}

EvalStage stage_eval(const RunConfig& cfg, const DeterministicPolicy& cf_policy,
                     std::shared_ptr<const DeterministicPolicy> baseline, const std::vector<Trajectory>& test,
                     std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("eval: empty test set");
  auto pool = make_cf_pool(cfg, baseline);
  auto plain = make_plain_pool(cfg);
  const auto eval_seed = substream(seed, "eval");
  EvalStage out;
  out.proposed = evaluate_cf(cf_policy, pool, test, cfg.cf, eval_seed);
  out.baseline = baseline_counterfactuals(*baseline, plain, test, cfg.cf, eval_seed);
  out.report = build_report(out.proposed, out.baseline);
  return out;
}

void write_eval_outputs(const fs::path& dir, const std::vector<Trajectory>& test, const EvalStage& eval) {
  fs::create_directories(dir);
  const auto& r = eval.report;
  write_json(dir / "metrics.json", r.to_json());

  const auto& c = r.advantage.counts;
  std::string csv =
      "n_test,positives_proposed,positives_baseline,rho_plus_proposed,rho_plus_baseline,rho_adv,"
      "adv_numerator,adv_denominator,both_positive,both_positive_advantageous,proposed_only,baseline_only,"
      "neither,mean_distance,mean_return_gain\n";
  csv += std::to_string(r.n_test) + "," + std::to_string(r.positives_proposed) + "," +
         std::to_string(r.positives_baseline) + "," + format_number(r.rho_plus_proposed) + "," +
         format_number(r.rho_plus_baseline) + "," + format_optional(r.advantage.rho_adv) + "," +
         std::to_string(c.numerator()) + "," + std::to_string(c.denominator()) + "," + std::to_string(c.both) +
         "," + std::to_string(c.both_advantageous) + "," + std::to_string(c.proposed_only) + "," +
         std::to_string(c.baseline_only) + "," + std::to_string(c.neither) + "," +
         format_optional(r.mean_distance) + "," + format_optional(r.mean_return_gain) + "\n";
  write_text(dir / "metrics.csv", csv);

  // Plot-ready rows: one per time step of each best counterfactual.
  const std::size_t sd = test.empty() ? 0 : test[0].state_dim();
  const std::size_t ad = test.empty() ? 0 : test[0].action_dim();
  std::string best = "id,method,t" + join_header("observed_state_", sd) + join_header("cf_state_", sd) +
                     join_header("observed_action_", ad) + join_header("cf_action_", ad) +
                     ",observed_reward,cf_reward,forced\n";
  std::string jsonl;
  const std::pair<const char*, const MethodEval*> methods[] = {{"proposed", &eval.proposed},
                                                               {"baseline", &eval.baseline}};
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (const auto& [name, m] : methods) {
      const auto& b = m->best.at(i);
      if (!b) continue;
      const auto& cf = b->counterfactual;
      std::vector<bool> forced(cf.size(), false);
      for (auto k : b->forced_steps) forced.at(k) = true;
      for (std::size_t t = 0; t < cf.size(); ++t) {
        std::string line = m->ids[i] + "," + name + "," + std::to_string(t);
        append_vec(line, test[i][t].state);
        append_vec(line, cf[t].state);
        append_vec(line, test[i][t].action);
        append_vec(line, cf[t].action);
        line += "," + format_number(test[i][t].reward) + "," + format_number(cf[t].reward) + "," +
                (forced[t] ? "1" : "0") + "\n";
        best += line;
      }
      json j = trajectory_to_json(cf);
      j["id"] = m->ids[i];
      j["method"] = name;
      j["distance"] = b->distance;
      j["return_cf"] = b->return_cf;
      j["return_observed"] = b->return_observed;
      j["positive"] = b->positive;
      j["truncated"] = b->truncated;
      j["initial_state_constrained"] = b->initial_constrained;
      jsonl += j.dump() + "\n";
    }
  }
  write_text(dir / "best_counterfactuals.csv", best);
  write_text(dir / "counterfactuals.jsonl", jsonl);
}

MetricsReport run_trial(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  RunLog log(dir / "run_log.txt");
  log("trial seed " + std::to_string(seed) + " started");
  write_json(dir / "config.json", to_json(cfg));

  auto base = stage_train_baseline(cfg, seed, dir / "baseline.ckpt.json", dir / "baseline_log.csv");
  log("baseline trained, mean eval return " + format_number(base.eval_return));
  auto policy = base.agent.policy_snapshot();

  auto ds = stage_gen_dataset(cfg, *policy, seed);
  write_jsonl(dir / "train.jsonl", ds.train);
  write_jsonl(dir / "test.jsonl", ds.test);
  log("dataset: " + std::to_string(ds.train.size()) + " train, " + std::to_string(ds.test.size()) + " test");

  auto cf = stage_train_cf(cfg, policy, ds.train, ds.test, seed, dir / "learning_curve.csv", dir / "cf_log.csv");
  write_json(dir / "cf.ckpt.json", cf.agent.checkpoint());
  log("counterfactual policy trained: " + std::to_string(cf.result.interactions) + " interactions, " +
      std::to_string(cf.result.updates) + " updates");

  auto ev = stage_eval(cfg, *cf.agent.policy_snapshot(), policy, ds.test, seed);
  write_eval_outputs(dir, ds.test, ev);
  log("evaluation written");
  return ev.report;
}

bool TrialsOutcome::partial() const {
  return std::any_of(reports.begin(), reports.end(), [](const auto& r) { return !r.has_value(); });
}

TrialsOutcome run_trials(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  write_json(out / "config.json", to_json(cfg));
  TrialsOutcome t;
  for (auto seed : cfg.seeds) {
    t.seeds.push_back(seed);
    try {
      t.reports.push_back(run_trial(cfg, seed, out / ("seed-" + std::to_string(seed))));
      t.errors.emplace_back();
    } catch (const std::exception& e) {
      warn("trial seed " + std::to_string(seed) + " failed: " + e.what());
      t.reports.push_back(std::nullopt);
      t.errors.emplace_back(e.what());
    }
  }
  write_json(out / "aggregate.json", aggregate_json(t));
  write_text(out / "aggregate.txt", aggregate_table(t));
  return t;
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stderr_ = std::sqrt(ss / static_cast<double>(m.n - 1)) / std::sqrt(static_cast<double>(m.n));
  }
  return m;
}

namespace {

struct Column {
  const char* name;
  std::vector<double> values;
};

std::vector<Column> collect(const TrialsOutcome& t) {
  std::vector<Column> cols = {{"rho_plus_proposed", {}}, {"rho_plus_baseline", {}}, {"rho_adv", {}},
                              {"mean_distance", {}}, {"mean_return_gain", {}}};
  for (const auto& r : t.reports) {
    if (!r) continue;
    cols[0].values.push_back(r->rho_plus_proposed);
    cols[1].values.push_back(r->rho_plus_baseline);
    if (r->advantage.rho_adv) cols[2].values.push_back(*r->advantage.rho_adv);
    if (r->mean_distance) cols[3].values.push_back(*r->mean_distance);
    if (r->mean_return_gain) cols[4].values.push_back(*r->mean_return_gain);
  }
  return cols;
}

}  // namespace

json aggregate_json(const TrialsOutcome& t) {
  json metrics = json::object();
  for (const auto& c : collect(t)) {
    const auto m = mean_stderr(c.values);
    metrics[c.name] = {{"n", m.n},
                       {"mean", m.n ? json(m.mean) : json(nullptr)},
                       {"stderr", m.n ? json(m.stderr_) : json(nullptr)},
                       {"values", c.values}};
  }
  json trials = json::array();
  for (std::size_t i = 0; i < t.seeds.size(); ++i) {
    json row = {{"seed", t.seeds[i]}, {"ok", t.reports[i].has_value()}};
    if (!t.errors[i].empty()) row["error"] = t.errors[i];
    trials.push_back(row);
  }
  return {{"partial", t.partial()}, {"trials", trials}, {"metrics", metrics}};
}

std::string aggregate_table(const TrialsOutcome& t) {
  std::ostringstream os;
  std::size_t ok = 0;
  for (const auto& r : t.reports) ok += r.has_value();
  os << "trials: " << ok << " of " << t.seeds.size() << " completed" << (t.partial() ? " (partial)" : "") << "\n";
  os << std::left << std::setw(20) << "metric" << "mean +- stderr\n";
  for (const auto& c : collect(t)) {
    const auto m = mean_stderr(c.values);
    os << std::left << std::setw(20) << c.name;
    if (m.n == 0) {
      os << "undefined\n";
    } else {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.2f +- %.2f (n=%zu)\n", m.mean, m.stderr_, m.n);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace cfrl
