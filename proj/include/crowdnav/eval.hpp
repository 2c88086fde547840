#pragma once

#include "crowdnav/env.hpp"
#include "crowdnav/features.hpp"
#include "crowdnav/policy.hpp"
#include "crowdnav/ppo.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace crowdnav {

/// Acts in one episode at a time. Not shared between threads.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(std::uint64_t seed) = 0;
  virtual int act(const Observation& obs) = 0;
};

using AgentFactory = std::function<std::unique_ptr<Agent>()>;

/// Greedy (argmax) policy with its own GRU hidden state.
class PolicyAgent : public Agent {
 public:
  PolicyAgent(std::shared_ptr<const Policy<float>> policy, FeatureConfig features, std::string label = "policy");
  std::string name() const override { return label_; }
  void begin_episode(std::uint64_t seed) override;
  int act(const Observation& obs) override;
  const PolicyOutput<float>& last_output() const { return last_; }

 private:
  std::shared_ptr<const Policy<float>> policy_;
  FeatureConfig features_;
  std::string label_;
  nn::Matrix<float> hidden_;
  PolicyOutput<float> last_;
};

/// Picks the action whose one-step unicycle rollout ends closest to the
/// goal; ties go to the smaller resulting heading error. Ignores humans and
/// obstacles.
class StraightToGoalAgent : public Agent {
 public:
  StraightToGoalAgent(RobotSpec robot, double dt) : robot_(robot), dt_(dt) {}
  std::string name() const override { return "straight_to_goal"; }
  void begin_episode(std::uint64_t) override {}
  int act(const Observation& obs) override;

 private:
  RobotSpec robot_;
  double dt_;
};

/// Uniform over the 9 actions, seeded per episode.
class RandomAgent : public Agent {
 public:
  std::string name() const override { return "random"; }
  void begin_episode(std::uint64_t seed) override;
  int act(const Observation& obs) override;

 private:
  std::mt19937_64 rng_;
};

/// `straight_to_goal` or `random`; anything else throws.
AgentFactory baseline_factory(const std::string& id, const EnvConfig& env);

struct EpisodeResult {
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Running;
  int steps = 0;
  double nav_time = 0.0;
  double total_reward = 0.0;
  double min_clearance = 0.0;
  std::string error;  // non-empty if the episode failed
};

struct MetricsReport {
  std::string agent;
  std::vector<EpisodeResult> episodes;  // sorted by seed
  int completed = 0;
  int failed = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double avg_nav_time = 0.0;  // over successes; 0 if none

  nlohmann::json to_json() const;
};

/// Rates over completed episodes (failed ones excluded); collision covers
/// both humans and obstacles.
MetricsReport aggregate(std::string agent, std::vector<EpisodeResult> episodes, double dt);

/// Plays one episode to termination. Writes a trajectory log if `log` is set.
EpisodeResult run_episode(CrowdEnv& env, Agent& agent, std::uint64_t seed, std::ostream* log = nullptr);

struct SuiteOptions {
  int threads = 1;
  /// If set, one `<seed>.jsonl` trajectory file per episode.
  std::optional<std::filesystem::path> trajectory_dir;
};

MetricsReport run_suite(const EnvConfig& env, const std::vector<std::uint64_t>& seeds, const AgentFactory& agent,
                        const SuiteOptions& options = {});

/// Parses "a-b" (inclusive), "a,b,c" or "@file" (one seed per line). Seeds
/// must be below 2^63 and unique.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
/// [first, first + count).
std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count);

/// Report file: config hash, seed list, per-episode rows, summary.
nlohmann::json eval_report(const MetricsReport& report, const nlohmann::json& config,
                           const std::vector<std::uint64_t>& seeds);

struct AblationEntry {
  AttentionStages stages = AttentionStages::Full;
  std::size_t parameter_count = 0;
  MetricsReport metrics;
  std::vector<std::uint64_t> seeds;
};

struct AblationOptions {
  int threads = 1;
  std::vector<std::uint64_t> suite;
  /// Called after every training iteration.
  std::function<void(AttentionStages, const TrainStats&)> on_iteration;
  /// If set, each trained checkpoint is written here as `<stages>.ckpt`.
  std::optional<std::filesystem::path> out_dir;
};

/// Trains RH, RH+OH and RH+HH+OH with identical seeds and budget, then
/// evaluates each on the same suite.
std::vector<AblationEntry> ablation_matrix(const TrainerSetup& setup, const AblationOptions& options);

std::string ablation_table(const std::vector<AblationEntry>& entries);
nlohmann::json ablation_report(const std::vector<AblationEntry>& entries, const nlohmann::json& config);

}  // namespace crowdnav
