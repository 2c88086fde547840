#pragma once

#include "crowdnav/geometry.hpp"
#include "crowdnav/orca.hpp"
#include "crowdnav/unicycle.hpp"

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace crowdnav {

struct RewardConfig {
  double collision = -20.0;
  double discomfort_dist = 0.25;
  double discomfort_scale = 2.0;
  double goal_reward = 20.0;
  double shaping_scale = 2.0;
};

struct SensorConfig {
  double human_range = 5.0;
  bool occlusion = true;
  ScanSpec scan;
};

struct ObstacleSampling {
  int min_vertices = 3;
  int max_vertices = 6;
  double min_circumradius = 0.3;
  double max_circumradius = 1.0;
  double clearance = 0.5;
};

struct EnvConfig {
  int min_humans = 2;
  int max_humans = 4;
  int min_obstacles = 7;
  int max_obstacles = 9;
  double arena_half_width = 6.0;
  double crossing_radius = 4.0;
  double goal_jitter = 15.0 * std::numbers::pi / 180.0;
  double min_start_goal_distance = 3.0;
  int max_episode_steps = 200;
  double dt = 0.25;
  int n_max = 6;
  double human_radius = 0.3;
  double human_max_speed = 0.5;
  double reactive_probability = 0.2;
  SensorConfig sensor;
  RewardConfig reward;
  RobotSpec robot;
  OrcaParams orca;
  ObstacleSampling obstacles;
  std::uint64_t seed = 0;  // base of derived episode seed streams

  void validate() const;
};

enum class Outcome { Running, Success, CollisionHuman, CollisionObstacle, Timeout };
std::string to_string(Outcome outcome);

struct Observation {
  RobotState robot;
  RayScan scan;
  /// n_max rows of (p_x, p_y, v_x, v_y), nearest visible human first.
  Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> human_slots;
  std::vector<std::uint8_t> visibility_mask;

  int visible_count() const;
};

struct StepInfo {
  double d_min = 0.0;
  double d_goal = 0.0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Outcome outcome = Outcome::Running;
  StepInfo info;
};

/// Piecewise reward, first matching case wins:
///   d_min < 0                -> collision
///   0 < d_min < discomfort   -> discomfort_scale * (d_min - discomfort)
///   d_goal <= robot_radius   -> goal_reward
///   otherwise                -> shaping_scale * (d_goal_prev - d_goal)
double compute_reward(double prev_d_goal, double d_min, double d_goal, double robot_radius,
                      const RewardConfig& reward);

struct SenseResult {
  Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> human_slots;
  std::vector<std::uint8_t> visibility_mask;
  RayScan scan;
};

/// Human detection (range gate, optional line-of-sight occlusion by
/// obstacles, nearest first, at most n_max) plus the ray-cast scan.
SenseResult sense(const RobotState& robot, const std::vector<HumanAgent>& humans, const MapModel& map,
                  const SensorConfig& sensor, int n_max);

/// Clearance of the robot: min over humans of (centre distance - radius sum)
/// and over obstacles and walls of (signed distance - robot radius).
struct Clearance {
  double to_humans = std::numeric_limits<double>::infinity();
  double to_obstacles = std::numeric_limits<double>::infinity();
  double min() const { return std::min(to_humans, to_obstacles); }
};
Clearance robot_clearance(const RobotState& robot, double robot_radius, const std::vector<HumanAgent>& humans,
                          const MapModel& map);

/// Randomised constrained crowd-navigation episode. Owns its RNG; instances
/// are independent and can run on separate threads.
class CrowdEnv {
 public:
  explicit CrowdEnv(EnvConfig config);

  /// Samples obstacles, circle-crossing humans and a robot start/goal.
  Observation reset(std::uint64_t seed);
  StepResult step(int action);

  const EnvConfig& config() const { return config_; }
  const RobotState& robot() const { return robot_; }
  const std::vector<HumanAgent>& humans() const { return humans_; }
  const MapModel& map() const { return map_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  Outcome outcome() const { return outcome_; }
  std::uint64_t episode_seed() const { return seed_; }
  Observation observe() const;

  /// Everything needed to continue the episode bit-exactly.
  nlohmann::json save_state() const;
  void load_state(const nlohmann::json& state);

  /// Test hook: replaces the scene without sampling.
  void set_scene(MapModel map, RobotState robot, std::vector<HumanAgent> humans);

 private:
  bool sample_scene();

  EnvConfig config_;
  std::mt19937_64 rng_;
  std::uint64_t seed_ = 0;
  MapModel map_;
  RobotState robot_;
  std::vector<HumanAgent> humans_;
  int t_ = 0;
  bool done_ = true;
  Outcome outcome_ = Outcome::Running;
  double prev_d_goal_ = 0.0;
};

/// Trajectory log records, one JSON object per line: a header when an
/// episode starts, then one record per step.
nlohmann::json episode_header(const CrowdEnv& env);
nlohmann::json step_record(const CrowdEnv& env, int action, const StepResult& result);

}  // namespace crowdnav
