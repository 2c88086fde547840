#include "crowdnav/config_io.hpp"

#include <cstdio>
#include <numbers>

namespace crowdnav {

using nlohmann::json;

StrictObject::StrictObject(const json& j, std::string context) : j_(j), context_(std::move(context)) {
  if (!j.is_object()) throw std::invalid_argument(context_ + ": expected an object");
}

const json* StrictObject::take(const std::string& key) {
  auto it = j_.find(key);
  if (it == j_.end()) return nullptr;
  used_.insert(key);
  return &*it;
}

void StrictObject::finish() const {
  for (auto it = j_.begin(); it != j_.end(); ++it) {
    if (!used_.count(it.key())) throw std::invalid_argument(context_ + ": unknown key '" + it.key() + "'");
  }
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void read_range(StrictObject& o, const std::string& key, int& lo, int& hi) {
  if (const json* v = o.take(key)) {
    if (!v->is_array() || v->size() != 2) throw std::invalid_argument(o.context() + "." + key + ": expected [min, max]");
    lo = v->at(0).get<int>();
    hi = v->at(1).get<int>();
  }
}

}  // namespace

json to_json(const EnvConfig& c) {
  return {
      {"humans", {c.min_humans, c.max_humans}},
      {"obstacles", {c.min_obstacles, c.max_obstacles}},
      {"arena_half_width", c.arena_half_width},
      {"crossing_radius", c.crossing_radius},
      {"goal_jitter_deg", c.goal_jitter / kDeg},
      {"min_start_goal_distance", c.min_start_goal_distance},
      {"max_episode_steps", c.max_episode_steps},
      {"dt", c.dt},
      {"n_max", c.n_max},
      {"human_radius", c.human_radius},
      {"human_max_speed", c.human_max_speed},
      {"reactive_probability", c.reactive_probability},
      {"seed", c.seed},
      {"sensor",
       {{"human_range", c.sensor.human_range},
        {"occlusion", c.sensor.occlusion},
        {"num_beams", c.sensor.scan.num_beams},
        {"fov", c.sensor.scan.fov},
        {"max_range", c.sensor.scan.max_range}}},
      {"reward",
       {{"collision", c.reward.collision},
        {"discomfort_dist", c.reward.discomfort_dist},
        {"discomfort_scale", c.reward.discomfort_scale},
        {"goal_reward", c.reward.goal_reward},
        {"shaping_scale", c.reward.shaping_scale}}},
      {"robot",
       {{"radius", c.robot.radius},
        {"v_max", c.robot.v_max},
        {"w_max", c.robot.w_max},
        {"trans_accel", c.robot.trans_accel},
        {"rot_accel", c.robot.rot_accel},
        {"accel_gain", c.robot.accel_gain}}},
      {"orca",
       {{"time_horizon_agents", c.orca.time_horizon_agents},
        {"time_horizon_obstacles", c.orca.time_horizon_obstacles},
        {"neighbor_dist", c.orca.neighbor_dist},
        {"safety_margin", c.orca.safety_margin},
        {"arrival_tolerance", c.orca.arrival_tolerance}}},
      {"obstacle_shape",
       {{"min_vertices", c.obstacles.min_vertices},
        {"max_vertices", c.obstacles.max_vertices},
        {"min_circumradius", c.obstacles.min_circumradius},
        {"max_circumradius", c.obstacles.max_circumradius},
        {"clearance", c.obstacles.clearance}}},
  };
}

void update_from_json(const json& j, EnvConfig& c, const std::string& context) {
  StrictObject o(j, context);
  read_range(o, "humans", c.min_humans, c.max_humans);
  read_range(o, "obstacles", c.min_obstacles, c.max_obstacles);
  o.read("arena_half_width", c.arena_half_width);
  o.read("crossing_radius", c.crossing_radius);
  double jitter_deg = c.goal_jitter / kDeg;
  o.read("goal_jitter_deg", jitter_deg);
  c.goal_jitter = jitter_deg * kDeg;
  o.read("min_start_goal_distance", c.min_start_goal_distance);
  o.read("max_episode_steps", c.max_episode_steps);
  o.read("dt", c.dt);
  o.read("n_max", c.n_max);
  o.read("human_radius", c.human_radius);
  o.read("human_max_speed", c.human_max_speed);
  o.read("reactive_probability", c.reactive_probability);
  o.read("seed", c.seed);
  if (const json* s = o.take("sensor")) {
    StrictObject so(*s, context + ".sensor");
    so.read("human_range", c.sensor.human_range);
    so.read("occlusion", c.sensor.occlusion);
    so.read("num_beams", c.sensor.scan.num_beams);
    so.read("fov", c.sensor.scan.fov);
    so.read("max_range", c.sensor.scan.max_range);
    so.finish();
  }
  if (const json* s = o.take("reward")) {
    StrictObject so(*s, context + ".reward");
    so.read("collision", c.reward.collision);
    so.read("discomfort_dist", c.reward.discomfort_dist);
    so.read("discomfort_scale", c.reward.discomfort_scale);
    so.read("goal_reward", c.reward.goal_reward);
    so.read("shaping_scale", c.reward.shaping_scale);
    so.finish();
  }
  if (const json* s = o.take("robot")) {
    StrictObject so(*s, context + ".robot");
    so.read("radius", c.robot.radius);
    so.read("v_max", c.robot.v_max);
    so.read("w_max", c.robot.w_max);
    so.read("trans_accel", c.robot.trans_accel);
    so.read("rot_accel", c.robot.rot_accel);
    so.read("accel_gain", c.robot.accel_gain);
    so.finish();
  }
  if (const json* s = o.take("orca")) {
    StrictObject so(*s, context + ".orca");
    so.read("time_horizon_agents", c.orca.time_horizon_agents);
    so.read("time_horizon_obstacles", c.orca.time_horizon_obstacles);
    so.read("neighbor_dist", c.orca.neighbor_dist);
    so.read("safety_margin", c.orca.safety_margin);
    so.read("arrival_tolerance", c.orca.arrival_tolerance);
    so.finish();
  }
  if (const json* s = o.take("obstacle_shape")) {
    StrictObject so(*s, context + ".obstacle_shape");
    so.read("min_vertices", c.obstacles.min_vertices);
    so.read("max_vertices", c.obstacles.max_vertices);
    so.read("min_circumradius", c.obstacles.min_circumradius);
    so.read("max_circumradius", c.obstacles.max_circumradius);
    so.read("clearance", c.obstacles.clearance);
    so.finish();
  }
  o.finish();
  c.orca.dt = c.dt;
  c.validate();
}

json to_json(const PolicyConfig& c) {
  json conv = json::array();
  for (const ConvLayerSpec& l : c.conv) conv.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  return {{"d_hh", c.d_hh},
          {"d_oh", c.d_oh},
          {"d_rh", c.d_rh},
          {"heads_hh", c.heads_hh},
          {"gru_hidden", c.gru_hidden},
          {"conv", std::move(conv)},
          {"n_max", c.n_max},
          {"action_count", c.action_count},
          {"num_beams", c.num_beams},
          {"robot_features", c.robot_features},
          {"human_features", c.human_features},
          {"stages", to_string(c.stages)}};
}

void update_from_json(const json& j, PolicyConfig& c, const std::string& context) {
  StrictObject o(j, context);
  o.read("d_hh", c.d_hh);
  o.read("d_oh", c.d_oh);
  o.read("d_rh", c.d_rh);
  o.read("heads_hh", c.heads_hh);
  o.read("gru_hidden", c.gru_hidden);
  if (const json* conv = o.take("conv")) {
    if (!conv->is_array()) throw std::invalid_argument(context + ".conv: expected an array");
    c.conv.clear();
    for (const json& layer : *conv) {
      StrictObject lo(layer, context + ".conv[]");
      ConvLayerSpec spec;
      lo.read("channels", spec.channels);
      lo.read("kernel", spec.kernel);
      lo.read("stride", spec.stride);
      lo.finish();
      c.conv.push_back(spec);
    }
  }
  o.read("n_max", c.n_max);
  o.read("action_count", c.action_count);
  o.read("num_beams", c.num_beams);
  o.read("robot_features", c.robot_features);
  o.read("human_features", c.human_features);
  std::string stages = to_string(c.stages);
  o.read("stages", stages);
  c.stages = attention_stages_from_string(stages);
  o.finish();
  c.validate();
}

json to_json(const FeatureConfig& c) { return {{"position_scale", c.position_scale}, {"frame", to_string(c.frame)}}; }

void update_from_json(const json& j, FeatureConfig& c, const std::string& context) {
  StrictObject o(j, context);
  o.read("position_scale", c.position_scale);
  std::string frame = to_string(c.frame);
  o.read("frame", frame);
  c.frame = feature_frame_from_string(frame);
  o.finish();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace crowdnav
