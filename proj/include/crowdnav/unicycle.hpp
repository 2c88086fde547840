#pragma once

#include "crowdnav/geometry.hpp"

#include <array>

namespace crowdnav {

struct RobotState {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;     // (-pi, pi]
  double trans_speed = 0.0; // [0, v_max]
  double rot_speed = 0.0;   // [-w_max, w_max]
  Vec2 goal = Vec2::Zero();

  Vec2 velocity() const { return trans_speed * Vec2(std::cos(heading), std::sin(heading)); }
};

struct RobotSpec {
  double radius = 0.3;
  double v_max = 0.5;
  double w_max = 1.0;
  std::array<double, 3> trans_accel{-0.05, 0.0, 0.05};
  std::array<double, 3> rot_accel{-0.1, 0.0, 0.1};
  /// Seconds of acceleration applied per control step.
  double accel_gain = 1.0;
};

inline constexpr int kActionCount = 9;

struct Acceleration {
  double trans = 0.0;
  double rot = 0.0;
};

/// Row-major over (trans option, rot option): index = 3 * i_trans + i_rot.
Acceleration decode_action(int index, const RobotSpec& spec = {});
int encode_action(int trans_option, int rot_option);

/// Velocity update with clipping, then heading, then position (semi-implicit Euler).
RobotState step_unicycle(const RobotState& s, const Acceleration& a, const RobotSpec& spec, double dt);

}  // namespace crowdnav
