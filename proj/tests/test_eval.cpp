#include "crowdnav/eval.hpp"
#include "support/setups.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace crowdnav;

namespace {

EpisodeResult scripted(std::uint64_t seed, Outcome outcome, int steps) {
  EpisodeResult r;
  r.seed = seed;
  r.outcome = outcome;
  r.steps = steps;
  return r;
}

EnvConfig empty_env() {
  EnvConfig env;
  env.min_humans = env.max_humans = 0;
  env.min_obstacles = env.max_obstacles = 0;
  return env;
}

class ThrowingAgent : public Agent {
 public:
  std::string name() const override { return "throwing"; }
  void begin_episode(std::uint64_t seed) override { seed_ = seed; }
  int act(const Observation&) override {
    if (seed_ % 2 == 1) throw std::runtime_error("scripted failure");
    return 4;
  }

 private:
  std::uint64_t seed_ = 0;
};

}  // namespace

TEST(Aggregate, RatesFromScriptedOutcomes) {
  std::vector<EpisodeResult> eps = {
      scripted(3, Outcome::Success, 40),         scripted(1, Outcome::Success, 60),
      scripted(2, Outcome::CollisionHuman, 10),  scripted(0, Outcome::CollisionObstacle, 5),
      scripted(4, Outcome::Timeout, 200),
  };
  const MetricsReport m = aggregate("x", eps, 0.25);
  EXPECT_EQ(m.completed, 5);
  EXPECT_EQ(m.failed, 0);
  EXPECT_DOUBLE_EQ(m.success_rate, 0.4);
  EXPECT_DOUBLE_EQ(m.collision_rate, 0.4);
  EXPECT_DOUBLE_EQ(m.timeout_rate, 0.2);
  EXPECT_DOUBLE_EQ(m.avg_nav_time, 12.5);
  for (std::size_t i = 0; i < m.episodes.size(); ++i) EXPECT_EQ(m.episodes[i].seed, i);
}

TEST(Aggregate, FailedEpisodesAreExcluded) {
  std::vector<EpisodeResult> eps = {scripted(0, Outcome::Success, 8), scripted(1, Outcome::Timeout, 200)};
  EpisodeResult bad = scripted(2, Outcome::Running, 3);
  bad.error = "boom";
  eps.push_back(bad);
  const MetricsReport m = aggregate("x", eps, 0.25);
  EXPECT_EQ(m.completed, 2);
  EXPECT_EQ(m.failed, 1);
  EXPECT_DOUBLE_EQ(m.success_rate, 0.5);
  EXPECT_DOUBLE_EQ(m.timeout_rate, 0.5);
}

TEST(Aggregate, NoSuccessMeansZeroNavTime) {
  const MetricsReport m = aggregate("x", {scripted(0, Outcome::Timeout, 200)}, 0.25);
  EXPECT_EQ(m.avg_nav_time, 0.0);
}

TEST(SeedList, Forms) {
  EXPECT_EQ(parse_seed_list("3-6"), (std::vector<std::uint64_t>{3, 4, 5, 6}));
  EXPECT_EQ(parse_seed_list("9,2,5"), (std::vector<std::uint64_t>{9, 2, 5}));
  EXPECT_EQ(parse_seed_list("7"), (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(seed_range(10, 3), (std::vector<std::uint64_t>{10, 11, 12}));

  const auto path = std::filesystem::temp_directory_path() / "crowdnav_test_seeds.txt";
  {
    std::ofstream f(path);
    f << "4\n8\n\n15\n";
  }
  EXPECT_EQ(parse_seed_list("@" + path.string()), (std::vector<std::uint64_t>{4, 8, 15}));
  std::filesystem::remove(path);
}

TEST(SeedList, Errors) {
  EXPECT_THROW(parse_seed_list(""), std::invalid_argument);
  EXPECT_THROW(parse_seed_list("6-3"), std::invalid_argument);
  EXPECT_THROW(parse_seed_list("1,1"), std::invalid_argument);
  EXPECT_THROW(parse_seed_list("abc"), std::invalid_argument);
  EXPECT_THROW(parse_seed_list("-4"), std::invalid_argument);
  EXPECT_THROW(parse_seed_list("9223372036854775808"), std::invalid_argument);
  EXPECT_THROW(parse_seed_list("@/nonexistent/seeds.txt"), std::invalid_argument);
}

TEST(Baselines, StraightToGoalSucceedsInEmptyArena) {
  const EnvConfig env = empty_env();
  const MetricsReport m = run_suite(env, seed_range(0, 20), baseline_factory("straight_to_goal", env));
  EXPECT_EQ(m.success_rate, 1.0);
  EXPECT_GT(m.avg_nav_time, 0.0);
}

TEST(Baselines, RandomIsWorseThanStraightToGoal) {
  const EnvConfig env;
  const auto seeds = seed_range(0, 30);
  const MetricsReport r = run_suite(env, seeds, baseline_factory("random", env));
  const MetricsReport s = run_suite(env, seeds, baseline_factory("straight_to_goal", env));
  EXPECT_LT(r.success_rate, s.success_rate);
}

TEST(Baselines, UnknownNameThrows) { EXPECT_THROW(baseline_factory("oracle", EnvConfig{}), std::invalid_argument); }

TEST(Suite, SameResultForAnyThreadCount) {
  const EnvConfig env;
  const auto seeds = seed_range(100, 12);
  const auto factory = baseline_factory("random", env);
  const std::string one = run_suite(env, seeds, factory, {1, {}}).to_json().dump();
  EXPECT_EQ(one, run_suite(env, seeds, factory, {3, {}}).to_json().dump());
  EXPECT_EQ(one, run_suite(env, seeds, factory, {1, {}}).to_json().dump());
}

TEST(Suite, AgentErrorsAreRecordedAsFailures) {
  const EnvConfig env = empty_env();
  const MetricsReport m = run_suite(env, seed_range(0, 6), [] { return std::make_unique<ThrowingAgent>(); });
  EXPECT_EQ(m.failed, 3);
  EXPECT_EQ(m.completed, 3);
  for (const auto& e : m.episodes) EXPECT_EQ(e.error.empty(), e.seed % 2 == 0);
}

TEST(Suite, TrajectoryLogsPerEpisode) {
  const auto dir = std::filesystem::temp_directory_path() / "crowdnav_test_traj";
  std::filesystem::remove_all(dir);
  const EnvConfig env = empty_env();
  SuiteOptions opt;
  opt.trajectory_dir = dir;
  run_suite(env, {5, 6}, baseline_factory("straight_to_goal", env), opt);
  EXPECT_TRUE(std::filesystem::exists(dir / "5.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "6.jsonl"));
  std::filesystem::remove_all(dir);
}

TEST(Report, ContainsSeedsAndSummary) {
  const MetricsReport m = aggregate("x", {scripted(1, Outcome::Success, 4)}, 0.25);
  const auto j = eval_report(m, {{"k", 1}}, {1});
  EXPECT_EQ(j.at("seeds"), nlohmann::json::array({1}));
  EXPECT_DOUBLE_EQ(j.at("summary").at("success_rate").get<double>(), 1.0);
  EXPECT_EQ(j.at("config_hash"), eval_report(m, {{"k", 1}}, {1}).at("config_hash"));
  EXPECT_NE(j.at("config_hash"), eval_report(m, {{"k", 2}}, {1}).at("config_hash"));
}

TEST(PolicyAgent, GreedyAndResetsHidden) {
  const TrainerSetup setup = oracle::tiny_setup();
  auto policy = std::make_shared<const Policy<float>>(setup.policy, 1);
  CrowdEnv env(setup.env);
  PolicyAgent agent(policy, setup.features);
  const EpisodeResult a = run_episode(env, agent, 42);
  const EpisodeResult b = run_episode(env, agent, 42);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_EQ(a.total_reward, b.total_reward);
  EXPECT_EQ(a.outcome, b.outcome);
}

TEST(Ablation, SameSeedsAndGrowingParameterCount) {
  TrainerSetup setup = oracle::tiny_setup();
  setup.ppo.total_steps = 64;
  AblationOptions opt;
  opt.suite = seed_range(0, 4);
  int iterations = 0;
  opt.on_iteration = [&](AttentionStages, const TrainStats&) { ++iterations; };
  const auto entries = ablation_matrix(setup, opt);
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(iterations, 3);
  EXPECT_EQ(entries[0].stages, AttentionStages::RH);
  EXPECT_EQ(entries[1].stages, AttentionStages::RH_OH);
  EXPECT_EQ(entries[2].stages, AttentionStages::Full);
  EXPECT_LT(entries[0].parameter_count, entries[1].parameter_count);
  EXPECT_LT(entries[1].parameter_count, entries[2].parameter_count);
  for (const auto& e : entries) {
    EXPECT_EQ(e.seeds, opt.suite);
    EXPECT_EQ(e.metrics.completed + e.metrics.failed, 4);
  }
  const std::string table = ablation_table(entries);
  EXPECT_NE(table.find("RH+HH+OH"), std::string::npos);
  EXPECT_EQ(ablation_report(entries, {}).at("configs").size(), 3u);
}
