#pragma once

#include "crowdnav/geometry.hpp"
#include "crowdnav/unicycle.hpp"

#include <optional>
#include <random>
#include <span>
#include <vector>

namespace crowdnav {

struct HumanAgent {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 goal = Vec2::Zero();
  double radius = 0.3;
  double max_speed = 0.5;
  bool reactive_to_robot = false;
};

struct OrcaParams {
  double time_horizon_agents = 2.0;
  double time_horizon_obstacles = 2.0;
  double neighbor_dist = 5.0;
  double dt = 0.25;
  /// Added to every radius inside the velocity-obstacle construction.
  double safety_margin = 0.01;
  double arrival_tolerance = 0.2;

  void validate() const;
};

/// Feasible velocities satisfy (v - point) . normal >= 0.
struct HalfPlane {
  Vec2 point = Vec2::Zero();
  Vec2 normal = Vec2::UnitX();

  double violation(const Vec2& v) const { return -(v - point).dot(normal); }
};

/// A disc agent seen by an ORCA human: another human, or the robot.
struct OrcaNeighbor {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double radius = 0.3;
};

struct OrcaConstraints {
  std::vector<HalfPlane> planes;  // obstacle planes first
  std::size_t obstacle_count = 0;
};

/// Obstacle half-planes (full responsibility, one per nearby edge facing the
/// agent, including the map walls) followed by one reciprocal half-plane per
/// neighbor within neighbor_dist.
OrcaConstraints compute_orca_halfplanes(const HumanAgent& self, std::span<const OrcaNeighbor> neighbors,
                                        const MapModel& obstacles, const OrcaParams& params);

/// Velocity closest to `preferred` inside all half-planes and the speed disc.
/// If infeasible, the first `hard_count` planes stay hard and the maximum
/// violation of the rest is minimised.
Vec2 solve_velocity_lp(std::span<const HalfPlane> planes, const Vec2& preferred, double max_speed,
                       std::size_t hard_count = 0);

/// Uniform free-space point at least `clearance` from every obstacle and wall.
std::optional<Vec2> sample_free_point(const MapModel& map, double clearance, std::mt19937_64& rng,
                                      int max_tries = 100);

struct RobotPresence {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double radius = 0.3;
};

/// One control period of ORCA-driven holonomic humans. Humans arriving at
/// their goal draw a fresh free-space goal used from the next call on.
void step_humans(std::vector<HumanAgent>& humans, const std::optional<RobotPresence>& robot, const MapModel& map,
                 const OrcaParams& params, std::mt19937_64& rng);

}  // namespace crowdnav
