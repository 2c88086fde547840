#include "crowdnav/unicycle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace crowdnav {

Acceleration decode_action(int index, const RobotSpec& spec) {
  if (index < 0 || index >= kActionCount)
    throw std::out_of_range("action index " + std::to_string(index) + " outside [0, 9)");
  return {spec.trans_accel[index / 3], spec.rot_accel[index % 3]};
}

int encode_action(int trans_option, int rot_option) {
  if (trans_option < 0 || trans_option > 2 || rot_option < 0 || rot_option > 2)
    throw std::out_of_range("action option outside [0, 3)");
  return 3 * trans_option + rot_option;
}

RobotState step_unicycle(const RobotState& s, const Acceleration& a, const RobotSpec& spec, double dt) {
  RobotState next = s;
  next.trans_speed = std::clamp(s.trans_speed + a.trans * spec.accel_gain, 0.0, spec.v_max);
  next.rot_speed = std::clamp(s.rot_speed + a.rot * spec.accel_gain, -spec.w_max, spec.w_max);
  next.heading = normalize_angle(s.heading + next.rot_speed * dt);
  next.position = s.position + next.trans_speed * dt * Vec2(std::cos(next.heading), std::sin(next.heading));
  return next;
}

}  // namespace crowdnav
