// One PASS/FAIL line per acceptance criterion. Usage: cfrl_acceptance AC<n> [--configs DIR] [--work DIR]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cfrl/glucose_env.hpp"
#include "cfrl/lander_env.hpp"
#include "cfrl/pipeline.hpp"
#include "cfrl/point_mass_env.hpp"
#include "cfrl/rng.hpp"

using namespace cfrl;
namespace fs = std::filesystem;

namespace {

fs::path g_configs;
fs::path g_work;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

RunConfig load(const std::string& name) { return load_run_config(g_configs / name); }

fs::path workdir(const std::string& name) {
  const auto p = g_work / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Policy that records episodes with some action variety. A negative
// `bias` shifts the output head towards the low end of the action box.
std::shared_ptr<const DeterministicPolicy> random_policy(const EnvSpec& spec, std::uint64_t seed,
                                                         double bias = 0.0) {
  Td3Hyper h;
  h.hidden = {32, 32};
  h.buffer_capacity = 1;
  Td3Agent agent(spec, h, seed);
  agent.actor().layers().back().bias.array() += bias;
  return agent.policy_snapshot();
}

// ---------------------------------------------------------------------------

// Term-by-term oracle written without the library's helpers.
double oracle_distance(const ActionSeq& a, const ActionSeq& b, double delta, int p) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      num += std::pow(std::fabs(a[i][k] - b[i][k]), p);
      den += std::pow(std::fabs(a[i][k]), p);
    }
    total += std::pow(num, 1.0 / p) / (std::pow(den, 1.0 / p) + delta);
  }
  return total;
}

Verdict ac1() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> len(1, 20), dim(1, 3), pn(1, 3);
  std::uniform_real_distribution<double> val(-5.0, 5.0), dl(1e-4, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int n = len(rng), d = dim(rng);
    ActionSeq a(n, Vec(d)), b(n, Vec(d));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        a[i][j] = val(rng);
        b[i][j] = val(rng);
      }
    if (k % 10 == 0) b = a;  // some exact zeros
    DistanceParams dp;
    dp.delta = dl(rng);
    dp.p_norm = pn(rng);
    const double got = action_distance(a, b, dp);
    const double want = oracle_distance(a, b, dp.delta, dp.p_norm);
    const double rel = want == 0.0 ? std::fabs(got) : std::fabs(got - want) / std::fabs(want);
    worst = std::max(worst, rel);
  }
  return {worst <= 1e-12, "1000 pairs, max relative error " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------

double weighted(const nn::Mlp& net, const nn::Matrix& x, const nn::Matrix& w) {
  return (net.forward(x).array() * w.array()).sum();
}

double rel_err(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-7}); }

// Max relative error of all parameter and input gradients of one net.
double fd_check(nn::Mlp net, const nn::Matrix& x, const nn::Matrix& w) {
  const double eps = 1e-5;
  nn::Tape tape;
  net.forward(x, tape);
  const auto g = net.backward(tape, w);
  Vec analytic;
  for (const auto& l : g.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) analytic.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) analytic.push_back(l.bias(r));
  }
  Vec p = net.flat_params();
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + eps;
    net.set_flat_params(p);
    const double up = weighted(net, x, w);
    p[i] = keep - eps;
    net.set_flat_params(p);
    const double down = weighted(net, x, w);
    p[i] = keep;
    worst = std::max(worst, rel_err((up - down) / (2 * eps), analytic[i]));
  }
  net.set_flat_params(p);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      nn::Matrix xp = x, xm = x;
      xp(r, c) += eps;
      xm(r, c) -= eps;
      worst = std::max(worst, rel_err((weighted(net, xp, w) - weighted(net, xm, w)) / (2 * eps), g.input(r, c)));
    }
  }
  return worst;
}

Verdict ac2() {
  // the networks the shipped configs train
  std::vector<std::pair<std::string, Td3Agent>> agents;
  for (const char* name : {"diabetes_desk.json", "lunar_single.json"}) {
    const auto cfg = load(name);
    auto h = cfg.cf_td3;
    h.buffer_capacity = 1;
    agents.emplace_back(name, Td3Agent(config_spec(cfg), h, 0));
  }
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  std::string arch;
  for (int draw = 0; draw < 100; ++draw) {
    auto& [name, agent] = agents[draw % agents.size()];
    Rng init(1000 + draw);
    for (nn::Mlp* net : {&agent.actor(), &agent.critic1()}) {
      net->init_uniform(init);
      nn::Matrix x(net->input_dim(), 2), w(net->output_dim(), 2);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);
      worst = std::max(worst, fd_check(*net, x, w));
    }
  }
  for (auto& [name, agent] : agents) {
    std::string dims;
    for (auto d : agent.critic1().dims()) dims += (dims.empty() ? "" : "x") + std::to_string(d);
    arch += " " + name + " critic " + dims;
  }
  return {worst < 1e-3, "100 draws, max relative error " + fmt("%.3g", worst) + ";" + arch};
}

// ---------------------------------------------------------------------------

Verdict ac3() {
  const auto cfg = load("point_mass.json");
  auto h = cfg.baseline.td3;
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 7; ++seed) {
    auto env = make_env(cfg.env.kind, cfg.env.params);
    const auto eval_seed = substream(seed, "ac3-eval");
    const auto untrained = Td3Agent(env->spec(), h, seed).policy_snapshot();
    const double before = evaluate_policy(*untrained, *env, 20, eval_seed);
    auto res = train_baseline(*env, 10000, h, seed);
    const double after = evaluate_policy(*res.agent.policy_snapshot(), *env, 20, eval_seed);
    // returns are costs (-|x|): improving by 2x halves their magnitude
    const bool pass = before < 0 ? after >= 0.5 * before : after >= 2.0 * before;
    ok += pass;
    detail += " " + fmt("%.1f", before) + "->" + fmt("%.1f", after);
  }
  return {ok >= 6, std::to_string(ok) + "/7 seeds at 2x; returns" + detail};
}

// ---------------------------------------------------------------------------

struct Scenario {
  std::string name;
  double policy_bias;
  std::function<std::unique_ptr<Environment>()> make;
  std::function<std::unique_ptr<Environment>()> make_plain;
};

std::vector<Scenario> scenarios() {
  GlucoseParams gp;
  gp.max_dose = 0.3;
  gp.cgm_noise = 5.0;
  gp.process_noise = 1.0;
  IntervalPredicate low;
  low.intervals.push_back({0, -INFINITY, 100.0, false, true});
  IntervalPredicate drift;
  drift.intervals.push_back({2, -0.18, 0.18, false, false});
  return {
      {"point_mass", 0.0, [] { return std::make_unique<PointMassEnv>(PointMassParams{.velocity_noise = 0.05}); },
       [] { return std::make_unique<PointMassEnv>(PointMassParams{.velocity_noise = 0.05}); }},
      // unbiased random dosing drives every window into hypoglycaemia
      {"glucose-constrained", -1.5,
       [=] { return std::make_unique<AugmentedEnv>(std::make_unique<GlucoseEnv>(gp), ConstraintSpec::fixed(low, {0.03})); },
       [=] { return std::make_unique<GlucoseEnv>(gp); }},
      {"lander-constrained", 0.0,
       [=] {
         // without thrust the x-velocity never leaves the band; the cap
         // keeps some agent decisions in every window
         auto spec = ConstraintSpec::fixed(drift, {0.0, 0.0});
         spec.max_constrained_steps = 5;
         return std::make_unique<AugmentedEnv>(std::make_unique<LanderEnv>(), spec);
       },
       [] { return std::make_unique<LanderEnv>(); }},
  };
}

std::vector<Trajectory> windows_for(Environment& plain, const DeterministicPolicy& policy, std::uint64_t seed,
                                    std::size_t episodes) {
  std::vector<Trajectory> out;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto ep = record_episode(policy, plain, substream(seed, "ep", e), plain.spec().horizon);
    if (ep.trajectory.size() < 20) continue;
    for (auto& w : sliding_window_dataset(ep, 20, 10)) out.push_back(std::move(w));
  }
  if (out.empty()) throw std::runtime_error("no 20-step windows recorded in " + plain.spec().env_id);
  return out;
}

Verdict ac4() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lam(0.0, 10.0);
  double worst = 0.0;
  std::size_t rollouts = 0, without_decisions = 0;
  const auto sc = scenarios();
  for (std::size_t s = 0; s < sc.size(); ++s) {
    auto plain = sc[s].make_plain();
    auto env = sc[s].make();
    Td3Hyper h;
    h.hidden = {32, 32};
    h.buffer_capacity = 1;
    Td3Agent agent(plain->spec(), h, s);
    const auto data = windows_for(*plain, *random_policy(plain->spec(), 100 + s, sc[s].policy_bias), s, 12);
    for (std::size_t k = 0; rollouts < 500 * (s + 1) / sc.size(); ++k) {
      const auto& tau = data[k % data.size()];
      CfConfig cfg;
      cfg.lambda = lam(rng);
      cfg.distance.delta = 0.01;
      auto r = rollout_counterfactual(agent, *env, tau, cfg, true, substream(s, "ac4", k));
      if (r.transitions.empty()) {
        ++without_decisions;  // whole window auto-played: nothing is stored
        continue;
      }
      ++rollouts;
      double stored = 0.0;
      for (const auto& t : r.transitions) stored += t.r;
      const double want = r.result.return_cf - cfg.lambda * r.result.distance;
      worst = std::max(worst, std::fabs(stored - want) / std::max(1.0, std::fabs(want)));
    }
  }
  return {worst <= 1e-9, std::to_string(rollouts) + " rollouts with stored transitions (" +
                             std::to_string(without_decisions) + " fully auto-played skipped), max error " +
                             fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------

Verdict ac5() {
  // transparency
  std::size_t mismatches = 0, compared = 0;
  const auto sc = scenarios();
  for (std::size_t s = 0; s < sc.size(); ++s) {
    auto plain = sc[s].make_plain();
    AugmentedEnv wrapped(sc[s].make_plain(), ConstraintSpec::fixed([](const Vec&) { return false; },
                                                                    Vec(plain->spec().action_dim, 0.0)));
    Td3Hyper h;
    h.hidden = {32, 32};
    h.buffer_capacity = 1;
    Td3Agent a1(plain->spec(), h, 3), a2(plain->spec(), h, 3);
    const auto data = windows_for(*plain, *random_policy(plain->spec(), 200 + s, sc[s].policy_bias), s, 6);
    const std::size_t n = s + 1 == sc.size() ? 100 - 2 * (100 / sc.size()) : 100 / sc.size();
    for (std::size_t k = 0; k < n; ++k) {
      const auto& tau = data[k % data.size()];
      const auto seed = substream(s, "ac5", k);
      auto r1 = rollout_counterfactual(a1, *plain, tau, CfConfig{}, true, seed);
      auto r2 = rollout_counterfactual(a2, wrapped, tau, CfConfig{}, true, seed);
      ++compared;
      bool same = r1.transitions.size() == r2.transitions.size() && r1.result.distance == r2.result.distance;
      for (std::size_t i = 0; same && i < r1.transitions.size(); ++i) {
        const auto &x = r1.transitions[i], &y = r2.transitions[i];
        same = x.s == y.s && x.a == y.a && x.r == y.r && x.s_next == y.s_next && x.done == y.done;
      }
      mismatches += !same;
    }
  }
  // constraint satisfaction on the shipped constrained config
  const auto cfg = load("diabetes_constrained.json");
  auto plain = make_env(cfg.env.kind, cfg.env.params);
  auto pool = make_cf_pool(cfg, nullptr);
  auto& env = pool.get(pool.ids().front());
  const auto& pred = cfg.constraint->predicate;
  const auto pi_c = cfg.constraint->action;
  auto h = cfg.cf_td3;
  h.buffer_capacity = 1;
  Td3Agent agent(plain->spec(), h, 5);
  const auto data = windows_for(*plain, *random_policy(plain->spec(), 17, -1.5), 9, 6);
  std::size_t constrained_steps = 0, violations = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    auto r = rollout_counterfactual(agent, env, data[k % data.size()], cfg.cf, true, substream(9, "ac5c", k));
    for (const auto& st : r.result.counterfactual.steps()) {
      if (!pred(st.state)) continue;
      ++constrained_steps;
      violations += st.action != pi_c;
    }
  }
  const bool pass = mismatches == 0 && violations == 0 && constrained_steps > 0;
  return {pass, std::to_string(compared) + " transparency rollouts, " + std::to_string(mismatches) +
                    " differ; " + std::to_string(constrained_steps) + " constrained inner steps, " +
                    std::to_string(violations) + " with another action"};
}

// ---------------------------------------------------------------------------

Verdict ac6() {
  const auto cfg = load("diabetes_desk.json");
  const auto out = workdir("AC6");
  const auto t = run_trials(cfg, out);
  std::vector<double> gap, adv;
  for (const auto& r : t.reports) {
    if (!r) continue;
    gap.push_back(r->rho_plus_proposed - r->rho_plus_baseline);
    adv.push_back(r->advantage.rho_adv.value_or(0.0));
  }
  if (t.partial() || gap.size() != 7) return {false, "trials incomplete"};
  const auto g = mean_stderr(gap), a = mean_stderr(adv);
  double pp = 0, pb = 0;
  for (const auto& r : t.reports) {
    pp += r->rho_plus_proposed / 7;
    pb += r->rho_plus_baseline / 7;
  }
  return {g.mean >= 0.03 && a.mean > 0.5, "rho_plus " + fmt("%.3f", pp) + " vs " + fmt("%.3f", pb) + " (gap " +
                                              fmt("%.3f", g.mean) + " +- " + fmt("%.3f", g.stderr_) +
                                              "), rho_adv " + fmt("%.3f", a.mean) + " +- " + fmt("%.3f", a.stderr_)};
}

// ---------------------------------------------------------------------------

Verdict ac7() {
  const auto base_cfg = load("point_mass.json");
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 7; ++seed) {
    const auto baseline = stage_train_baseline(base_cfg, seed);
    const auto policy = baseline.agent.policy_snapshot();
    const auto data = stage_gen_dataset(base_cfg, *policy, seed);
    std::map<double, std::optional<double>> med;
    for (double lambda : {0.1, 10.0}) {
      auto cfg = base_cfg;
      cfg.cf.lambda = lambda;
      cfg.cf.eval_every = 0;
      const auto cf = stage_train_cf(cfg, policy, data.train, data.test, seed);
      const auto ev = stage_eval(cfg, *cf.agent.policy_snapshot(), policy, data.test, seed);
      std::vector<double> d;
      for (const auto& b : ev.proposed.best)
        if (b) d.push_back(b->distance);
      if (!d.empty()) med[lambda] = median(d);
    }
    const bool pass = med[10.0] && med[0.1] && *med[10.0] < *med[0.1];
    ok += pass;
    detail += " " + (med[0.1] ? fmt("%.3g", *med[0.1]) : "none") + "/" + (med[10.0] ? fmt("%.3g", *med[10.0]) : "none");
  }
  return {ok >= 6, std::to_string(ok) + "/7 seeds; median distance lambda 0.1/10:" + detail};
}

// ---------------------------------------------------------------------------

Verdict ac8() {
  auto cf = [](double g_obs, double g, double d) {
    CfResult r;
    r.return_observed = g_obs;
    r.return_cf = g;
    r.distance = d;
    r.positive = g > g_obs;
    return r;
  };
  std::vector<std::string> failed;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) failed.push_back(what);
  };
  const auto ex = advantage_ratios(10, cf(10, 14, 1.0), cf(10, 12, 0.8));
  expect(ex.phi_g == 2.0 && ex.phi_d == 1.25 && ex.advantageous, "worked example");
  expect(!advantage_test(10, cf(10, 12, 0.8), cf(10, 12, 0.8)), "identical results");
  auto r = advantage_ratios(10, cf(10, 14, 1.0), cf(10, 12, 0.0));
  expect(std::isinf(r.phi_d) && !r.advantageous, "zero baseline distance");
  r = advantage_ratios(10, cf(10, 14, 1.0), cf(10, 10 + 1e-10, 0.8));
  expect(std::isinf(r.phi_g) && std::isfinite(r.phi_d) && r.advantageous, "zero baseline gain");
  r = advantage_ratios(10, cf(10, 14, 1.0), cf(10, 10 + 1e-10, 1e-12));
  expect(std::isinf(r.phi_g) && std::isinf(r.phi_d) && !r.advantageous, "both guarded");
  r = advantage_ratios(10, cf(10, 14, 1.0), cf(10, 12, 9.9e-10));
  expect(std::isinf(r.phi_d), "distance just below the guard");
  r = advantage_ratios(10, cf(10, 14, 1.0), cf(10, 12, 1.1e-9));
  expect(std::isfinite(r.phi_d), "distance just above the guard");
  bool threw = false;
  try {
    advantage_test(10, cf(10, 9, 1.0), cf(10, 12, 1.0));
  } catch (const std::domain_error&) {
    threw = true;
  }
  expect(threw, "non-positive input rejected");
  std::string detail = "hand example phi_G 2.0 vs phi_D 1.25 and 7 guard cases";
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------------------

Verdict ac9() {
  auto cfg = load("diabetes_desk.json");
  const std::size_t period = cfg.cf.eval_every;
  // shortened run: the row schedule does not depend on the budget
  cfg.baseline.steps = 2000;
  cfg.cf.n_observed = 120;
  const auto dir = workdir("AC9");
  const auto baseline = stage_train_baseline(cfg, 0);
  const auto policy = baseline.agent.policy_snapshot();
  const auto data = stage_gen_dataset(cfg, *policy, 0);
  const auto cf = stage_train_cf(cfg, policy, data.train, data.test, 0, dir / "learning_curve.csv");
  std::ifstream in(dir / "learning_curve.csv");
  std::string line;
  std::getline(in, line);
  bool ok = line == curve_csv_header() && period == 400;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    ok = ok && cells.size() == 5 && std::stoul(cells[0]) == rows * period;
    const double rp = std::stod(cells[1]);
    ok = ok && rp >= 0.0 && rp <= 1.0;
    ok = ok && (cells[2] == "null" || (std::stod(cells[2]) >= 0.0 && std::stod(cells[2]) <= 1.0));
  }
  const std::size_t expected = cf.result.interactions / period;
  ok = ok && rows == expected && rows == cf.result.curve.size() && rows > 0;
  return {ok, std::to_string(rows) + " rows every " + std::to_string(period) + " interaction steps over " +
                  std::to_string(cf.result.interactions)};
}

// ---------------------------------------------------------------------------

Verdict ac10() {
  auto cfg = load("point_mass.json");
  cfg.seeds = {0, 1};
  const auto a = workdir("AC10/run-a");
  const auto b = workdir("AC10/run-b");
  run_trials(cfg, a);
  run_trials(cfg, b);
  std::vector<fs::path> files = {"aggregate.json", "aggregate.txt"};
  for (const char* s : {"seed-0", "seed-1"})
    for (const char* f : {"metrics.json", "metrics.csv", "best_counterfactuals.csv", "counterfactuals.jsonl",
                          "learning_curve.csv"})
      files.push_back(fs::path(s) / f);
  std::size_t differ = 0;
  for (const auto& f : files) {
    if (!fs::exists(a / f) || slurp(a / f) != slurp(b / f)) {
      ++differ;
      std::fprintf(stderr, "differs: %s\n", f.c_str());
    }
  }
  return {differ == 0, std::to_string(files.size()) + " report files compared, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string which;
  std::string configs = CFRL_CONFIG_DIR;
  std::string work = "acceptance-out";
  app.add_option("criterion", which, "AC1 .. AC10")->required();
  app.add_option("--configs", configs, "directory with the shipped configs");
  app.add_option("--work", work, "scratch directory for run outputs");
  CLI11_PARSE(app, argc, argv);
  g_configs = configs;
  g_work = work;

  const std::map<std::string, std::function<Verdict()>> checks = {
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}};
  const auto it = checks.find(which);
  if (it == checks.end()) {
    std::fprintf(stderr, "unknown criterion %s\n", which.c_str());
    return 2;
  }
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = it->second();
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s %s %s [%.1fs]\n", which.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
  return v.pass ? 0 : 1;
}
