#include "crowdnav/features.hpp"

#include <cmath>
#include <stdexcept>

namespace crowdnav {

std::string to_string(FeatureFrame frame) { return frame == FeatureFrame::World ? "world" : "robot"; }

FeatureFrame feature_frame_from_string(const std::string& name) {
  if (name == "world") return FeatureFrame::World;
  if (name == "robot") return FeatureFrame::RobotCentric;
  throw std::invalid_argument("unknown feature frame: " + name);
}

template <typename Scalar>
PolicyInput<Scalar> make_policy_input(const Observation& obs, const FeatureConfig& config) {
  if (!(config.position_scale > 0.0)) throw std::invalid_argument("make_policy_input: position_scale must be positive");
  const int n = static_cast<int>(obs.human_slots.rows());
  if (static_cast<int>(obs.visibility_mask.size()) != n) {
    throw std::invalid_argument("make_policy_input: mask length differs from slot count");
  }
  const double s = 1.0 / config.position_scale;
  const RobotState& r = obs.robot;

  PolicyInput<Scalar> in;
  in.robot.resize(1, 7);
  in.humans = nn::Matrix<Scalar>::Zero(n, 4);
  in.mask.assign(n, Scalar(0));

  if (config.frame == FeatureFrame::World) {
    const Vec2 v = r.velocity();
    in.robot << Scalar(r.position.x() * s), Scalar(r.position.y() * s), Scalar(v.x()), Scalar(v.y()),
        Scalar(r.goal.x() * s), Scalar(r.goal.y() * s), Scalar(r.heading);
    for (int i = 0; i < n; ++i) {
      if (!obs.visibility_mask[i]) continue;
      in.mask[i] = Scalar(1);
      in.humans.row(i) << Scalar(obs.human_slots(i, 0) * s), Scalar(obs.human_slots(i, 1) * s),
          Scalar(obs.human_slots(i, 2)), Scalar(obs.human_slots(i, 3));
    }
  } else {
    const double c = std::cos(r.heading), sn = std::sin(r.heading);
    auto to_body = [&](const Vec2& w) { return Vec2(c * w.x() + sn * w.y(), -sn * w.x() + c * w.y()); };
    const Vec2 g = to_body(r.goal - r.position);
    const double dg = g.norm();
    const double bearing = std::atan2(g.y(), g.x());
    in.robot << Scalar(g.x() * s), Scalar(g.y() * s), Scalar(r.trans_speed), Scalar(r.rot_speed), Scalar(dg * s),
        Scalar(std::cos(bearing)), Scalar(std::sin(bearing));
    for (int i = 0; i < n; ++i) {
      if (!obs.visibility_mask[i]) continue;
      in.mask[i] = Scalar(1);
      const Vec2 p = to_body(Vec2(obs.human_slots(i, 0), obs.human_slots(i, 1)) - r.position);
      const Vec2 v = to_body(Vec2(obs.human_slots(i, 2), obs.human_slots(i, 3)));
      in.humans.row(i) << Scalar(p.x() * s), Scalar(p.y() * s), Scalar(v.x()), Scalar(v.y());
    }
  }

  const int beams = static_cast<int>(obs.scan.ranges.size());
  in.scan.resize(1, beams);
  for (int k = 0; k < beams; ++k) in.scan(0, k) = Scalar(obs.scan.ranges[k] / obs.scan.max_range);
  return in;
}

template PolicyInput<float> make_policy_input<float>(const Observation&, const FeatureConfig&);
template PolicyInput<double> make_policy_input<double>(const Observation&, const FeatureConfig&);

}  // namespace crowdnav
