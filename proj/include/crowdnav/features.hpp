#pragma once

#include "crowdnav/env.hpp"
#include "crowdnav/policy.hpp"

namespace crowdnav {

enum class FeatureFrame { World, RobotCentric };

std::string to_string(FeatureFrame frame);
FeatureFrame feature_frame_from_string(const std::string& name);

struct FeatureConfig {
  double position_scale = 6.0;  // usually the arena half width
  FeatureFrame frame = FeatureFrame::World;
};

/// Observation -> network input.
///
/// World frame: robot row (p_x, p_y, v_x, v_y, g_x, g_y, theta), human rows
/// (p_x, p_y, v_x, v_y), positions divided by position_scale.
///
/// RobotCentric: everything expressed in the robot's body frame; the robot
/// row becomes (g_x, g_y, v, omega, |g|, cos, sin) of the goal bearing.
///
/// Scan ranges are divided by max_range. Masked slots stay exactly zero.
template <typename Scalar>
PolicyInput<Scalar> make_policy_input(const Observation& obs, const FeatureConfig& config);

}  // namespace crowdnav
