#include "crowdnav/eval.hpp"

#include "crowdnav/config_io.hpp"
#include "crowdnav/seeding.hpp"
#include "crowdnav/thread_pool.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace crowdnav {

using nlohmann::json;

PolicyAgent::PolicyAgent(std::shared_ptr<const Policy<float>> policy, FeatureConfig features, std::string label)
    : policy_(std::move(policy)), features_(features), label_(std::move(label)) {
  if (!policy_) throw std::invalid_argument("PolicyAgent: null policy");
  hidden_ = policy_->zero_hidden();
}

void PolicyAgent::begin_episode(std::uint64_t) { hidden_ = policy_->zero_hidden(); }

int PolicyAgent::act(const Observation& obs) {
  last_ = policy_->forward(make_policy_input<float>(obs, features_), hidden_);
  hidden_ = last_.hidden;
  Eigen::Index best = 0;
  last_.logits.maxCoeff(&best);
  return static_cast<int>(best);
}

int StraightToGoalAgent::act(const Observation& obs) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  double best_heading = std::numeric_limits<double>::infinity();
  for (int a = 0; a < kActionCount; ++a) {
    const RobotState next = step_unicycle(obs.robot, decode_action(a, robot_), robot_, dt_);
    const Vec2 to_goal = next.goal - next.position;
    const double d = to_goal.norm();
    const double heading_err = std::abs(normalize_angle(std::atan2(to_goal.y(), to_goal.x()) - next.heading));
    if (d < best_dist - 1e-12 || (std::abs(d - best_dist) <= 1e-12 && heading_err < best_heading)) {
      best = a;
      best_dist = d;
      best_heading = heading_err;
    }
  }
  return best;
}

void RandomAgent::begin_episode(std::uint64_t seed) { rng_.seed(mix_seed(seed, 0x72616e646f6dULL)); }

int RandomAgent::act(const Observation&) { return std::uniform_int_distribution<int>(0, kActionCount - 1)(rng_); }

AgentFactory baseline_factory(const std::string& id, const EnvConfig& env) {
  if (id == "straight_to_goal") {
    const RobotSpec robot = env.robot;
    const double dt = env.dt;
    return [robot, dt] { return std::make_unique<StraightToGoalAgent>(robot, dt); };
  }
  if (id == "random") return [] { return std::make_unique<RandomAgent>(); };
  throw std::invalid_argument("unknown baseline '" + id + "' (expected straight_to_goal or random)");
}

MetricsReport aggregate(std::string agent, std::vector<EpisodeResult> episodes, double dt) {
  MetricsReport r;
  r.agent = std::move(agent);
  std::sort(episodes.begin(), episodes.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  int success = 0, collision = 0, timeout = 0;
  double time = 0.0;
  for (const EpisodeResult& e : episodes) {
    if (!e.error.empty()) {
      ++r.failed;
      continue;
    }
    switch (e.outcome) {
      case Outcome::Success:
        ++success;
        time += e.steps * dt;
        break;
      case Outcome::CollisionHuman:
      case Outcome::CollisionObstacle:
        ++collision;
        break;
      case Outcome::Timeout:
        ++timeout;
        break;
      case Outcome::Running:
        ++r.failed;
        continue;
    }
    ++r.completed;
  }
  if (r.completed > 0) {
    const double n = r.completed;
    r.success_rate = success / n;
    r.collision_rate = collision / n;
    r.timeout_rate = timeout / n;
  }
  r.avg_nav_time = success > 0 ? time / success : 0.0;
  r.episodes = std::move(episodes);
  return r;
}

json MetricsReport::to_json() const {
  json rows = json::array();
  for (const EpisodeResult& e : episodes) {
    json row = {{"seed", e.seed},
                {"outcome", to_string(e.outcome)},
                {"steps", e.steps},
                {"nav_time", e.nav_time},
                {"total_reward", e.total_reward},
                {"min_clearance", e.min_clearance}};
    if (!e.error.empty()) row["error"] = e.error;
    rows.push_back(std::move(row));
  }
  return {{"agent", agent},
          {"summary",
           {{"success_rate", success_rate},
            {"collision_rate", collision_rate},
            {"timeout_rate", timeout_rate},
            {"avg_nav_time", avg_nav_time},
            {"completed", completed},
            {"failed", failed}}},
          {"episodes", std::move(rows)}};
}

EpisodeResult run_episode(CrowdEnv& env, Agent& agent, std::uint64_t seed, std::ostream* log) {
  EpisodeResult res;
  res.seed = seed;
  Observation obs = env.reset(seed);
  agent.begin_episode(seed);
  if (log) *log << episode_header(env).dump() << '\n';
  res.min_clearance = std::numeric_limits<double>::infinity();
  for (;;) {
    const int action = agent.act(obs);
    StepResult r = env.step(action);
    res.total_reward += r.reward;
    res.min_clearance = std::min(res.min_clearance, r.info.d_min);
    ++res.steps;
    if (log) *log << step_record(env, action, r).dump() << '\n';
    if (r.done) {
      res.outcome = r.outcome;
      break;
    }
    obs = std::move(r.observation);
  }
  res.nav_time = res.steps * env.config().dt;
  return res;
}

MetricsReport run_suite(const EnvConfig& env, const std::vector<std::uint64_t>& seeds, const AgentFactory& factory,
                        const SuiteOptions& options) {
  std::vector<EpisodeResult> results(seeds.size());
  std::string agent_name = factory()->name();
  if (options.trajectory_dir) std::filesystem::create_directories(*options.trajectory_dir);
  ThreadPool pool(std::max(1, std::min<int>(options.threads, static_cast<int>(seeds.size()))));
  pool.parallel_for(static_cast<int>(seeds.size()), [&](int i) {
    EpisodeResult& res = results[i];
    res.seed = seeds[i];
    try {
      CrowdEnv e(env);
      auto agent = factory();
      if (options.trajectory_dir) {
        std::ofstream log(*options.trajectory_dir / (std::to_string(seeds[i]) + ".jsonl"), std::ios::trunc);
        if (!log) throw std::runtime_error("cannot write trajectory log");
        res = run_episode(e, *agent, seeds[i], &log);
      } else {
        res = run_episode(e, *agent, seeds[i]);
      }
    } catch (const std::exception& ex) {
      res.error = ex.what();
    }
  });
  return aggregate(agent_name, std::move(results), env.dt);
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
  return out;
}

namespace {

std::uint64_t parse_u64(const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad seed '" + s + "'");
  }
  if (used != s.size() || s.empty() || s[0] == '-') throw std::invalid_argument("bad seed '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (text.empty()) throw std::invalid_argument("empty seed list");
  if (text[0] == '@') {
    std::ifstream in(text.substr(1));
    if (!in) throw std::invalid_argument("cannot read seed file " + text.substr(1));
    std::string line;
    while (std::getline(in, line)) {
      line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }), line.end());
      if (!line.empty() && line[0] != '#') seeds.push_back(parse_u64(line));
    }
  } else if (auto dash = text.find('-'); dash != std::string::npos && text.find(',') == std::string::npos) {
    const std::uint64_t a = parse_u64(text.substr(0, dash));
    const std::uint64_t b = parse_u64(text.substr(dash + 1));
    if (b < a) throw std::invalid_argument("seed range '" + text + "' is empty");
    if (b - a >= 10'000'000) throw std::invalid_argument("seed range '" + text + "' is too large");
    seeds = seed_range(a, static_cast<std::size_t>(b - a + 1));
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(parse_u64(item));
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  std::set<std::uint64_t> unique;
  for (std::uint64_t s : seeds) {
    if (is_training_seed(s)) throw std::invalid_argument("test seeds must be below 2^63 (training seeds live above)");
    if (!unique.insert(s).second) throw std::invalid_argument("duplicate seed " + std::to_string(s));
  }
  return seeds;
}

json eval_report(const MetricsReport& report, const json& config, const std::vector<std::uint64_t>& seeds) {
  json out = report.to_json();
  out["config"] = config;
  out["config_hash"] = fnv1a_hex(config.dump());
  out["seeds"] = seeds;
  return out;
}

std::vector<AblationEntry> ablation_matrix(const TrainerSetup& setup, const AblationOptions& options) {
  if (options.suite.empty()) throw std::invalid_argument("ablation needs a non-empty test suite");
  std::vector<AblationEntry> out;
  for (AttentionStages stages : {AttentionStages::RH, AttentionStages::RH_OH, AttentionStages::Full}) {
    TrainerSetup s = setup;
    s.policy.stages = stages;
    Trainer trainer(s, options.threads);
    while (!trainer.finished()) {
      const TrainStats st = trainer.iterate();
      if (options.on_iteration) options.on_iteration(stages, st);
    }
    if (options.out_dir) {
      std::filesystem::create_directories(*options.out_dir);
      save_checkpoint(trainer.checkpoint(), *options.out_dir / (to_string(stages) + ".ckpt"));
    }
    auto policy = std::make_shared<const Policy<float>>(trainer.policy());
    const FeatureConfig features = s.features;
    AblationEntry entry;
    entry.stages = stages;
    entry.parameter_count = policy->params().parameter_count();
    entry.seeds = options.suite;
    entry.metrics = run_suite(
        s.env, options.suite,
        [&] { return std::make_unique<PolicyAgent>(policy, features, "Ours, " + to_string(stages)); },
        {options.threads, std::nullopt});
    out.push_back(std::move(entry));
  }
  return out;
}

std::string ablation_table(const std::vector<AblationEntry>& entries) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %8s %9s %8s %8s %10s\n", "Method", "Success", "Collision", "Timeout",
                "Time(s)", "Params");
  out << line;
  for (const AblationEntry& e : entries) {
    std::snprintf(line, sizeof line, "%-18s %8.2f %9.2f %8.2f %8.2f %10zu\n", ("Ours, " + to_string(e.stages)).c_str(),
                  e.metrics.success_rate, e.metrics.collision_rate, e.metrics.timeout_rate, e.metrics.avg_nav_time,
                  e.parameter_count);
    out << line;
  }
  return out.str();
}

json ablation_report(const std::vector<AblationEntry>& entries, const json& config) {
  json rows = json::array();
  for (const AblationEntry& e : entries) {
    json m = e.metrics.to_json();
    rows.push_back({{"stages", to_string(e.stages)},
                    {"parameter_count", e.parameter_count},
                    {"seeds", e.seeds},
                    {"summary", m["summary"]},
                    {"episodes", m["episodes"]}});
  }
  return {{"config", config}, {"config_hash", fnv1a_hex(config.dump())}, {"configs", std::move(rows)},
          {"table", ablation_table(entries)}};
}

}  // namespace crowdnav
