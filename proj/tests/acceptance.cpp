// Acceptance report: one PASS/FAIL line per criterion.
//
//   crowdnav_acceptance [--smoke-dir DIR] [--threads N] [--report FILE] [--skip-smoke] [--strict]
//
// The training smoke run is expensive. Its checkpoint is kept in --smoke-dir
// and reused on the next run if the stored setup matches configs/smoke.json
// (training is deterministic, so retraining would give the same bytes).
// Without --strict the exit code only reports crashes; with it, any FAIL
// exits 3.

#include "crowdnav/checkpoint.hpp"
#include "crowdnav/env.hpp"
#include "crowdnav/eval.hpp"
#include "crowdnav/orca.hpp"
#include "crowdnav/ppo.hpp"
#include "crowdnav/run_config.hpp"
#include "support/setups.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef CROWDNAV_SMOKE_CONFIG
#error "CROWDNAV_SMOKE_CONFIG must point at configs/smoke.json"
#endif

using namespace crowdnav;
using Clock = std::chrono::steady_clock;
using Mat = nn::Matrix<double>;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// 1 --------------------------------------------------------------------------

Verdict reward_oracle_check() {
  const RewardConfig cfg;
  const double rho = 0.3;
  double worst = 0.0;
  int cases = 0;
  for (int i = 0; i < 100; ++i) {
    const double d_min = -0.5 + 1.5 * i / 99.0;
    for (int j = 0; j < 100; ++j) {
      // d_goal sweeps through the goal radius; the delta sweeps both signs.
      const double d_goal = 0.05 + 0.1 * (j % 50);
      const double delta = -0.25 + 0.5 * (j / 50) + 0.01 * (j % 7);
      const double prev = d_goal + delta;
      const double got = compute_reward(prev, d_min, d_goal, rho, cfg);
      worst = std::max(worst, std::abs(got - oracle::reward_oracle(prev, d_min, d_goal)));
      ++cases;
    }
  }
  const bool examples = compute_reward(3.0, -0.05, 2.0, rho, cfg) == -20.0 &&
                        std::abs(compute_reward(3.0, 0.10, 2.0, rho, cfg) + 0.30) <= 1e-12 &&
                        std::abs(compute_reward(3.0, 0.5, 2.8, rho, cfg) - 0.40) <= 1e-12;
  return {worst <= 1e-12 && examples && cases == 10000,
          fmt("%.0f cases, max error %.1e", cases, worst) + (examples ? ", examples ok" : ", examples WRONG")};
}

// 2 --------------------------------------------------------------------------

Verdict ray_cast_check() {
  const auto t0 = Clock::now();
  ScanSpec spec;
  spec.num_beams = 180;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto scene = oracle::random_scene(seed);
    const RayScan a = ray_cast(scene.origin, scene.heading, scene.map, spec);
    const RayScan b = oracle::ray_cast_oracle(scene.origin, scene.heading, scene.map, spec);
    for (std::size_t k = 0; k < a.ranges.size(); ++k) worst = std::max(worst, std::abs(a.ranges[k] - b.ranges[k]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 60.0, fmt("1000 scenes x 180 beams, max error %.1e, %.2f s", worst, secs)};
}

// 3 --------------------------------------------------------------------------

double stage_errors(const Policy<double>& policy, std::mt19937_64& rng) {
  const PolicyConfig& c = policy.config();
  const auto in = oracle::random_policy_input<double>(c, 1 + static_cast<int>(rng() % c.n_max), rng);
  nn::ParamStore<double> store = policy.params();
  store.add("in.humans", in.humans);
  store.add("in.scan", in.scan);
  store.add("in.robot", in.robot);
  store.add("in.hh", oracle::random_matrix(c.n_max, c.d_hh, rng));
  store.add("in.oh", oracle::random_matrix(c.n_max, c.d_oh, rng));
  const Mat w_hh = oracle::random_matrix(c.n_max, c.d_hh, rng);
  const Mat w_oh = oracle::random_matrix(c.n_max, c.d_oh, rng);
  const Mat w_rh = oracle::random_matrix(1, c.d_rh, rng);
  const Mat w_obst = oracle::random_matrix(1, c.d_oh, rng);
  const Mat w_logits = oracle::random_matrix(1, c.action_count, rng);
  const Mat h0 = oracle::random_matrix(1, c.gru_hidden, rng, 0.5);
  using nn::Tape;
  using nn::Var;
  const auto probe = [](Tape<double>& t, Var v, const Mat& w) { return t.sum(t.mul(t.tanh(v), t.constant(w))); };

  std::vector<oracle::Builder> builders;
  if (c.stages == AttentionStages::Full) {
    builders.push_back([&](Tape<double>& t) {
      const auto p = policy.bind(t);
      return probe(t, policy.hh_attention(t, p, t.param("in.humans"), in.mask).features, w_hh);
    });
  }
  if (c.stages != AttentionStages::RH) {
    builders.push_back([&](Tape<double>& t) {
      const auto p = policy.bind(t);
      return probe(t, policy.obstacle_embedding(t, p, t.param("in.scan")), w_obst);
    });
    builders.push_back([&](Tape<double>& t) {
      const auto p = policy.bind(t);
      const Var key = policy.obstacle_embedding(t, p, t.param("in.scan"));
      const Var feats = c.stages == AttentionStages::Full ? t.param("in.hh") : t.param("in.humans");
      return probe(t, policy.oh_attention(t, p, feats, key, in.mask).features, w_oh);
    });
  }
  builders.push_back([&](Tape<double>& t) {
    const auto p = policy.bind(t);
    const Var key = policy.robot_embedding(t, p, t.param("in.robot"));
    const Var feats = c.stages == AttentionStages::RH ? t.param("in.humans") : t.param("in.oh");
    return probe(t, policy.rh_attention(t, p, feats, key, in.mask).features, w_rh);
  });
  builders.push_back([&](Tape<double>& t) {
    const auto p = policy.bind(t);
    const PolicyNodes first = policy.forward(t, p, in, t.constant(h0));
    const PolicyNodes second = policy.forward(t, p, in, first.hidden);
    return t.add(t.sum(t.mul(second.logits, t.constant(w_logits))), t.mul(second.value, second.value));
  });

  double worst = 0.0;
  for (const auto& b : builders) worst = std::max(worst, oracle::gradient_error(store, b));
  return worst;
}

Verdict gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  const AttentionStages stages[] = {AttentionStages::RH, AttentionStages::RH_OH, AttentionStages::Full};
  for (int k = 0; k < 20; ++k) {
    PolicyConfig c = oracle::small_policy_config(stages[k % 3], 2 + k % 4);
    c.heads_hh = (k % 2 == 0) ? 2 : 4;
    nn::ParamStore<double> params = Policy<double>(c, 100 + k).params();
    oracle::randomize_biases(params, rng);
    const Policy<double> policy(c, std::move(params));
    worst = std::max(worst, stage_errors(policy, rng));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 300.0, fmt("20 configs, max relative error %.1e, %.1f s", worst, secs)};
}

// 4 --------------------------------------------------------------------------

Verdict invariance_check() {
  const PolicyConfig c;
  const Policy<float> policy(c, 77);
  std::mt19937_64 rng(77);
  std::normal_distribution<float> noise(0.0f, 50.0f);
  float mask_err = 0.0f, perm_err = 0.0f;
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = oracle::random_policy_input<float>(c, trial % (c.n_max + 1), rng);
    const auto ref = policy.forward(in, policy.zero_hidden());

    auto dirty = in;
    for (int i = 0; i < c.n_max; ++i) {
      if (in.mask[i] != 0.0f) continue;
      for (int k = 0; k < c.human_features; ++k) dirty.humans(i, k) = noise(rng);
    }
    const auto d = policy.forward(dirty, policy.zero_hidden());
    mask_err = std::max({mask_err, std::abs(d.value - ref.value), (d.logits - ref.logits).cwiseAbs().maxCoeff()});

    std::vector<int> perm(c.n_max);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = in;
    for (int i = 0; i < c.n_max; ++i) {
      shuffled.humans.row(perm[i]) = in.humans.row(i);
      shuffled.mask[perm[i]] = in.mask[i];
    }
    const auto p = policy.forward(shuffled, policy.zero_hidden());
    perm_err = std::max({perm_err, std::abs(p.value - ref.value), (p.logits - ref.logits).cwiseAbs().maxCoeff()});
  }
  return {mask_err <= 1e-6f && perm_err <= 1e-5f,
          fmt("100 observations, mask %.1e, permutation %.1e", mask_err, perm_err)};
}

// 5 --------------------------------------------------------------------------

Verdict parameter_count_check() {
  std::vector<std::size_t> counts;
  for (int n : {2, 6, 12}) {
    PolicyConfig c;
    c.n_max = n;
    counts.push_back(Policy<float>(c, 1).params().parameter_count());
  }
  return {counts[0] == counts[1] && counts[1] == counts[2],
          fmt("n_max 2/6/12 -> %.0f/%.0f/%.0f", counts[0], counts[1], counts[2])};
}

// 6 --------------------------------------------------------------------------

Verdict orca_check() {
  const OrcaParams params;
  int collisions = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    std::vector<HumanAgent> humans(4);
    for (int i = 0; i < 4; ++i) {
      const double a = 2.0 * std::numbers::pi * i / 4 + jitter(rng);
      humans[i].position = 4.0 * Vec2(std::cos(a), std::sin(a));
      humans[i].goal = -humans[i].position;
    }
    for (int t = 0; t < 100; ++t) {
      const auto before = humans;
      step_humans(humans, std::nullopt, MapModel{}, params, rng);
      for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
          const double d = oracle::min_distance_over_step(before[i].position, humans[i].position,
                                                           before[j].position, humans[j].position, 10);
          if (d < humans[i].radius + humans[j].radius) ++collisions;
        }
      }
    }
  }

  std::vector<HumanAgent> pair(2);
  pair[0].position = Vec2(-2, 0);
  pair[0].goal = Vec2(2, 0);
  pair[1].position = Vec2(2, 0);
  pair[1].goal = Vec2(-2, 0);
  std::mt19937_64 rng(1);
  double clearance = 1e9;
  for (int t = 0; t < 60; ++t) {
    const auto before = pair;
    step_humans(pair, std::nullopt, MapModel{}, params, rng);
    clearance = std::min(clearance, oracle::min_distance_over_step(before[0].position, pair[0].position,
                                                                   before[1].position, pair[1].position, 10) -
                                        pair[0].radius - pair[1].radius);
  }
  return {collisions == 0 && clearance >= 0.0,
          fmt("100 crossing episodes, %.0f collisions; head-on clearance %.3f", collisions, clearance)};
}

// 7 --------------------------------------------------------------------------

Verdict smoke_check(const fs::path& dir, int threads) {
  const auto t0 = Clock::now();
  RunConfig rc = load_run_config(CROWDNAV_SMOKE_CONFIG);
  rc.finalize();
  const std::string wanted = rc.setup.to_json().dump();
  const fs::path ckpt_path = dir / "final.ckpt";

  std::shared_ptr<const Policy<float>> policy;
  FeatureConfig features = rc.setup.features;
  bool reused = false;
  if (fs::exists(ckpt_path)) {
    try {
      const Checkpoint ck = load_checkpoint(ckpt_path);
      LoadedPolicy loaded = policy_from_checkpoint(ck);
      const bool complete = ck.metadata.value("/trainer/env_steps"_json_pointer, std::int64_t{0}) >=
                            rc.setup.ppo.total_steps;
      if (loaded.setup.to_json().dump() == wanted && complete) {
        policy = loaded.policy;
        reused = true;
      }
    } catch (const CheckpointError&) {
    }
  }
  if (!policy) {
    fs::create_directories(dir);
    Trainer trainer(rc.setup, threads);
    while (!trainer.finished()) {
      const TrainStats s = trainer.iterate();
      if (s.iteration % 10 == 0) {
        std::fprintf(stderr, "  smoke: %lld steps, training success %.2f\n", static_cast<long long>(s.env_steps),
                     s.success_rate);
      }
    }
    save_checkpoint(trainer.checkpoint(), ckpt_path);
    policy = std::make_shared<const Policy<float>>(trainer.policy().config(), trainer.policy().params());
  }

  const auto seeds = parse_seed_list(rc.suite);
  SuiteOptions opt;
  opt.threads = threads;
  const MetricsReport learned = run_suite(rc.setup.env, seeds, [policy, features] {
    return std::make_unique<PolicyAgent>(policy, features);
  }, opt);
  const MetricsReport straight = run_suite(rc.setup.env, seeds, baseline_factory("straight_to_goal", rc.setup.env), opt);
  const MetricsReport random = run_suite(rc.setup.env, seeds, baseline_factory("random", rc.setup.env), opt);
  const bool pass = learned.success_rate >= 0.5 && learned.success_rate > straight.success_rate &&
                    learned.success_rate > random.success_rate;
  return {pass, fmt("success %.2f vs straight_to_goal %.2f, random %.2f", learned.success_rate,
                    straight.success_rate, random.success_rate) +
                    fmt(" on %.0f seeds; %.0f s", static_cast<double>(seeds.size()), seconds_since(t0)) +
                    (reused ? " (cached checkpoint)" : "")};
}

// 8 --------------------------------------------------------------------------

Verdict ablation_check() {
  TrainerSetup setup = oracle::tiny_setup(8);
  setup.ppo.total_steps = 128;
  AblationOptions opt;
  opt.suite = seed_range(0, 10);
  const auto entries = ablation_matrix(setup, opt);
  bool ok = entries.size() == 3 && entries[0].stages == AttentionStages::RH &&
            entries[1].stages == AttentionStages::RH_OH && entries[2].stages == AttentionStages::Full;
  for (const auto& e : entries) ok = ok && e.seeds == opt.suite && e.metrics.completed + e.metrics.failed == 10;
  ok = ok && entries[0].parameter_count < entries[1].parameter_count &&
       entries[1].parameter_count < entries[2].parameter_count;
  const std::string table = ablation_table(entries);
  ok = ok && table.find("RH+HH+OH") != std::string::npos;
  std::ostringstream d;
  d << "3 variants, identical seeds and budget; success";
  for (const auto& e : entries) d << " " << to_string(e.stages) << "=" << fmt("%.2f", e.metrics.success_rate);
  d << " (ordering not gated)";
  return {ok, d.str()};
}

// 9 --------------------------------------------------------------------------

std::string trainer_fingerprint(int threads) {
  Trainer t(oracle::tiny_setup(9), threads);
  std::string out;
  for (int i = 0; i < 3; ++i) out += t.iterate().to_json().dump();
  return out + serialize_checkpoint(t.checkpoint());
}

std::string eval_fingerprint(const Policy<float>& trained, const FeatureConfig& features, const EnvConfig& env,
                             int threads) {
  auto policy = std::make_shared<const Policy<float>>(trained.config(), trained.params());
  SuiteOptions opt;
  opt.threads = threads;
  return run_suite(env, seed_range(0, 16), [policy, features] {
    return std::make_unique<PolicyAgent>(policy, features);
  }, opt).to_json().dump();
}

std::string simulate_fingerprint(const EnvConfig& env) {
  CrowdEnv e(env);
  auto agent = baseline_factory("random", env)();
  std::ostringstream log;
  run_episode(e, *agent, 123, &log);
  return log.str();
}

Verdict determinism_check() {
  const bool train = trainer_fingerprint(1) == trainer_fingerprint(1) && trainer_fingerprint(2) == trainer_fingerprint(2);
  const TrainerSetup setup = oracle::tiny_setup(9);
  Trainer t(setup, 1);
  t.iterate();
  const bool eval = eval_fingerprint(t.policy(), setup.features, setup.env, 1) ==
                        eval_fingerprint(t.policy(), setup.features, setup.env, 1) &&
                    eval_fingerprint(t.policy(), setup.features, setup.env, 3) ==
                        eval_fingerprint(t.policy(), setup.features, setup.env, 3);
  const EnvConfig env;
  const bool sim = simulate_fingerprint(env) == simulate_fingerprint(env);
  return {train && eval && sim, std::string("train ") + (train ? "ok" : "DIFFERS") + ", eval " +
                                    (eval ? "ok" : "DIFFERS") + ", simulate " + (sim ? "ok" : "DIFFERS")};
}

// 10 -------------------------------------------------------------------------

Verdict checkpoint_check(const fs::path& dir) {
  fs::create_directories(dir);
  Trainer first(oracle::tiny_setup(10), 1);
  first.iterate();
  const Checkpoint ck = first.checkpoint();
  const fs::path path = dir / "roundtrip.ckpt";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  bool exact = serialize_checkpoint(back) == serialize_checkpoint(ck);
  const auto& p = first.policy().params();
  for (std::size_t i = 0; i < p.size(); ++i) exact = exact && back.tensor(p.name(i)) == p.value(i);
  fs::remove(path);

  Trainer straight(oracle::tiny_setup(10), 1);
  straight.iterate();
  auto resumed = Trainer::from_checkpoint(back, 1);
  const bool stats = straight.iterate().to_json() == resumed->iterate().to_json();
  const bool state = serialize_checkpoint(straight.checkpoint()) == serialize_checkpoint(resumed->checkpoint());
  return {exact && stats && state, std::string("save/load ") + (exact ? "bit-exact" : "DIFFERS") +
                                       ", resumed iteration " + (stats && state ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance report"};
  std::string smoke_dir = "acceptance_smoke";
  int threads = 1;
  std::string report_path;
  bool skip_smoke = false, strict = false;
  app.add_option("--smoke-dir", smoke_dir, "Directory for the smoke-test checkpoint");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--skip-smoke", skip_smoke, "Skip the training smoke test");
  app.add_option("--report", report_path, "Also write the report lines to this file");
  app.add_flag("--strict", strict, "Exit 3 if any criterion fails");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const fs::path scratch = fs::path(smoke_dir) / "scratch";
  const std::vector<Criterion> criteria = {
      {"reward-oracle", reward_oracle_check},
      {"ray-cast-oracle", ray_cast_check},
      {"gradient-fd", gradient_check},
      {"mask-permutation", invariance_check},
      {"parameter-count", parameter_count_check},
      {"orca-safety", orca_check},
      {"training-smoke", [&] {
         return skip_smoke ? Verdict{false, "skipped (--skip-smoke)"} : smoke_check(smoke_dir, threads);
       }},
      {"ablation-protocol", ablation_check},
      {"determinism", determinism_check},
      {"checkpoint-roundtrip", [&] { return checkpoint_check(scratch); }},
  };

  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  const auto emit = [&](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (report.is_open()) report << line << '\n' << std::flush;
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    char head[64];
    std::snprintf(head, sizeof head, "%s %-22s ", v.pass ? "PASS" : "FAIL", c.name);
    emit(head + v.detail);
    if (!v.pass) ++failed;
  }
  emit(std::to_string(static_cast<int>(criteria.size()) - failed) + "/" + std::to_string(criteria.size()) +
       " criteria passed");
  return strict && failed > 0 ? 3 : 0;
}
