#include "crowdnav/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace crowdnav {

namespace {

constexpr int kPlacementTries = 200;
constexpr int kSceneRetries = 50;
// Extra spacing beyond touching when placing agents.
constexpr double kPlacementMargin = 0.1;

Polygon random_convex_polygon(const Vec2& center, double radius, int vertices, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  // Reject vertex sets with nearly coincident angles; they give slivers.
  for (;;) {
    std::vector<double> angles(vertices);
    for (double& a : angles) a = angle(rng);
    std::sort(angles.begin(), angles.end());
    double min_gap = 2.0 * std::numbers::pi - angles.back() + angles.front();
    for (int i = 1; i < vertices; ++i) min_gap = std::min(min_gap, angles[i] - angles[i - 1]);
    if (min_gap < 0.3) continue;
    std::vector<Vec2> ring;
    for (double a : angles) ring.push_back(center + radius * Vec2(std::cos(a), std::sin(a)));
    return Polygon(std::move(ring));
  }
}

double polygon_gap(const Polygon& a, const Polygon& b) {
  double gap = std::numeric_limits<double>::infinity();
  for (const Vec2& v : a.vertices()) gap = std::min(gap, signed_distance(v, b));
  for (const Vec2& v : b.vertices()) gap = std::min(gap, signed_distance(v, a));
  if (gap < 0.0) return gap;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (segment_intersects_polygon(a.vertex(i), a.vertex(i + 1), b)) return -1.0;
  }
  return gap;
}

double obstacle_clearance(const Vec2& p, const MapModel& map) {
  double d = bounds_clearance(p, map.bounds);
  for (const Polygon& poly : map.obstacles) d = std::min(d, signed_distance(p, poly));
  return d;
}

}  // namespace

void EnvConfig::validate() const {
  if (min_humans < 0 || max_humans < min_humans) throw std::invalid_argument("EnvConfig: bad human count range");
  if (min_obstacles < 0 || max_obstacles < min_obstacles) {
    throw std::invalid_argument("EnvConfig: bad obstacle count range");
  }
  if (max_episode_steps <= 0) throw std::invalid_argument("EnvConfig: max_episode_steps must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("EnvConfig: dt must be positive");
  if (!(arena_half_width > 0.0)) throw std::invalid_argument("EnvConfig: arena_half_width must be positive");
  if (!(crossing_radius > 0.0) || crossing_radius + human_radius > arena_half_width) {
    throw std::invalid_argument("EnvConfig: crossing circle must fit in the arena");
  }
  if (n_max <= 0) throw std::invalid_argument("EnvConfig: n_max must be positive");
  if (obstacles.min_vertices < 3 || obstacles.max_vertices < obstacles.min_vertices ||
      obstacles.max_vertices > 12) {
    throw std::invalid_argument("EnvConfig: obstacle vertex range must lie in [3, 12]");
  }
  if (!(obstacles.min_circumradius > 0.0) || obstacles.max_circumradius < obstacles.min_circumradius) {
    throw std::invalid_argument("EnvConfig: bad obstacle circumradius range");
  }
  if (reactive_probability < 0.0 || reactive_probability > 1.0) {
    throw std::invalid_argument("EnvConfig: reactive_probability must be in [0, 1]");
  }
  if (sensor.scan.num_beams < 2 || !(sensor.scan.max_range > 0.0) || !(sensor.human_range >= 0.0)) {
    throw std::invalid_argument("EnvConfig: bad sensor");
  }
  orca.validate();
}

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Running: return "running";
    case Outcome::Success: return "success";
    case Outcome::CollisionHuman: return "collision_human";
    case Outcome::CollisionObstacle: return "collision_obstacle";
    case Outcome::Timeout: return "timeout";
  }
  return "unknown";
}

int Observation::visible_count() const {
  return static_cast<int>(std::count(visibility_mask.begin(), visibility_mask.end(), std::uint8_t{1}));
}

double compute_reward(double prev_d_goal, double d_min, double d_goal, double robot_radius,
                      const RewardConfig& reward) {
  if (d_min < 0.0) return reward.collision;
  if (d_min > 0.0 && d_min < reward.discomfort_dist) return reward.discomfort_scale * (d_min - reward.discomfort_dist);
  if (d_goal <= robot_radius) return reward.goal_reward;
  return reward.shaping_scale * (-d_goal + prev_d_goal);
}

SenseResult sense(const RobotState& robot, const std::vector<HumanAgent>& humans, const MapModel& map,
                  const SensorConfig& sensor, int n_max) {
  std::vector<std::pair<double, std::size_t>> visible;
  for (std::size_t i = 0; i < humans.size(); ++i) {
    const double d = (humans[i].position - robot.position).norm();
    if (d > sensor.human_range) continue;
    if (sensor.occlusion) {
      const bool blocked = std::any_of(map.obstacles.begin(), map.obstacles.end(), [&](const Polygon& poly) {
        return segment_intersects_polygon(robot.position, humans[i].position, poly);
      });
      if (blocked) continue;
    }
    visible.emplace_back(d, i);
  }
  std::stable_sort(visible.begin(), visible.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  SenseResult out;
  out.human_slots.setZero(n_max, 4);
  out.visibility_mask.assign(n_max, 0);
  const int n = std::min<int>(n_max, static_cast<int>(visible.size()));
  for (int k = 0; k < n; ++k) {
    const HumanAgent& h = humans[visible[k].second];
    out.human_slots.row(k) << h.position.x(), h.position.y(), h.velocity.x(), h.velocity.y();
    out.visibility_mask[k] = 1;
  }
  out.scan = ray_cast(robot.position, robot.heading, map, sensor.scan);
  return out;
}

Clearance robot_clearance(const RobotState& robot, double robot_radius, const std::vector<HumanAgent>& humans,
                          const MapModel& map) {
  Clearance c;
  for (const HumanAgent& h : humans) {
    c.to_humans = std::min(c.to_humans, (h.position - robot.position).norm() - robot_radius - h.radius);
  }
  c.to_obstacles = obstacle_clearance(robot.position, map) - robot_radius;
  return c;
}

CrowdEnv::CrowdEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

bool CrowdEnv::sample_scene() {
  const EnvConfig& c = config_;
  const double hw = c.arena_half_width;
  map_ = MapModel{};
  map_.bounds = Box2(Vec2(-hw, -hw), Vec2(hw, hw));
  humans_.clear();

  std::uniform_int_distribution<int> n_obstacles_dist(c.min_obstacles, c.max_obstacles);
  std::uniform_int_distribution<int> n_humans_dist(c.min_humans, c.max_humans);
  const int n_obstacles = n_obstacles_dist(rng_);
  const int n_humans = n_humans_dist(rng_);

  std::uniform_int_distribution<int> vertex_dist(c.obstacles.min_vertices, c.obstacles.max_vertices);
  std::uniform_real_distribution<double> radius_dist(c.obstacles.min_circumradius, c.obstacles.max_circumradius);
  for (int k = 0; k < n_obstacles; ++k) {
    const int vertices = vertex_dist(rng_);
    const double radius = radius_dist(rng_);
    std::uniform_real_distribution<double> center_dist(-hw + radius, hw - radius);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      const Vec2 center(center_dist(rng_), center_dist(rng_));
      Polygon poly = random_convex_polygon(center, radius, vertices, rng_);
      const bool clear = std::all_of(map_.obstacles.begin(), map_.obstacles.end(), [&](const Polygon& other) {
        return polygon_gap(poly, other) >= c.obstacles.clearance;
      });
      if (clear) {
        map_.obstacles.push_back(std::move(poly));
        placed = true;
      }
    }
    if (!placed) return false;
  }

  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> jitter(-c.goal_jitter, c.goal_jitter);
  std::bernoulli_distribution reactive(c.reactive_probability);
  const double agent_clearance = c.human_radius + kPlacementMargin;
  for (int k = 0; k < n_humans; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      const double a = phase(rng_);
      const double b = a + std::numbers::pi + jitter(rng_);
      HumanAgent h;
      h.position = c.crossing_radius * Vec2(std::cos(a), std::sin(a));
      h.goal = c.crossing_radius * Vec2(std::cos(b), std::sin(b));
      h.radius = c.human_radius;
      h.max_speed = c.human_max_speed;
      if (obstacle_clearance(h.position, map_) < agent_clearance) continue;
      if (obstacle_clearance(h.goal, map_) < agent_clearance) continue;
      const bool apart = std::all_of(humans_.begin(), humans_.end(), [&](const HumanAgent& o) {
        return (o.position - h.position).norm() >= o.radius + h.radius + kPlacementMargin;
      });
      if (!apart) continue;
      humans_.push_back(h);
      placed = true;
    }
    if (!placed) return false;
  }
  // Drawn after placement so the geometry stream does not depend on it.
  for (HumanAgent& h : humans_) h.reactive_to_robot = reactive(rng_);

  const double robot_clearance_needed = c.robot.radius + kPlacementMargin;
  for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
    const auto start = sample_free_point(map_, robot_clearance_needed, rng_, 1);
    if (!start) continue;
    const bool apart = std::all_of(humans_.begin(), humans_.end(), [&](const HumanAgent& h) {
      return (h.position - *start).norm() >= h.radius + c.robot.radius + kPlacementMargin;
    });
    if (!apart) continue;
    const auto goal = sample_free_point(map_, robot_clearance_needed, rng_, 1);
    if (!goal || (*goal - *start).norm() < c.min_start_goal_distance) continue;
    robot_ = RobotState{};
    robot_.position = *start;
    robot_.goal = *goal;
    robot_.heading = normalize_angle(phase(rng_));
    return true;
  }
  return false;
}

Observation CrowdEnv::reset(std::uint64_t seed) {
  seed_ = seed;
  rng_.seed(seed);
  bool ok = false;
  for (int retry = 0; retry < kSceneRetries && !ok; ++retry) ok = sample_scene();
  if (!ok) throw std::runtime_error("CrowdEnv::reset: scene placement failed for seed " + std::to_string(seed));
  t_ = 0;
  done_ = false;
  outcome_ = Outcome::Running;
  prev_d_goal_ = (robot_.position - robot_.goal).norm();
  return observe();
}

void CrowdEnv::set_scene(MapModel map, RobotState robot, std::vector<HumanAgent> humans) {
  map_ = std::move(map);
  robot_ = robot;
  humans_ = std::move(humans);
  t_ = 0;
  done_ = false;
  outcome_ = Outcome::Running;
  prev_d_goal_ = (robot_.position - robot_.goal).norm();
}

Observation CrowdEnv::observe() const {
  SenseResult s = sense(robot_, humans_, map_, config_.sensor, config_.n_max);
  Observation obs;
  obs.robot = robot_;
  obs.scan = std::move(s.scan);
  obs.human_slots = std::move(s.human_slots);
  obs.visibility_mask = std::move(s.visibility_mask);
  return obs;
}

StepResult CrowdEnv::step(int action) {
  if (done_) throw std::logic_error("CrowdEnv::step: episode is done; call reset");
  const Acceleration acc = decode_action(action, config_.robot);

  // Humans react to the robot as it was at the start of the step; both move
  // simultaneously.
  const RobotPresence presence{robot_.position, robot_.velocity(), config_.robot.radius};
  OrcaParams orca = config_.orca;
  orca.dt = config_.dt;
  step_humans(humans_, presence, map_, orca, rng_);
  robot_ = step_unicycle(robot_, acc, config_.robot, config_.dt);
  ++t_;

  const Clearance clearance = robot_clearance(robot_, config_.robot.radius, humans_, map_);
  StepResult r;
  r.info.d_min = clearance.min();
  r.info.d_goal = (robot_.position - robot_.goal).norm();
  r.reward = compute_reward(prev_d_goal_, r.info.d_min, r.info.d_goal, config_.robot.radius, config_.reward);
  prev_d_goal_ = r.info.d_goal;

  if (r.info.d_min < 0.0) {
    r.outcome = clearance.to_humans <= clearance.to_obstacles ? Outcome::CollisionHuman : Outcome::CollisionObstacle;
  } else if (r.info.d_goal <= config_.robot.radius) {
    r.outcome = Outcome::Success;
  } else if (t_ >= config_.max_episode_steps) {
    r.outcome = Outcome::Timeout;
  }
  r.done = r.outcome != Outcome::Running;
  done_ = r.done;
  outcome_ = r.outcome;
  r.observation = observe();
  return r;
}

namespace {

nlohmann::json vec_json(const Vec2& v) { return nlohmann::json::array({v.x(), v.y()}); }
Vec2 vec_from(const nlohmann::json& j) { return Vec2(j.at(0).get<double>(), j.at(1).get<double>()); }

nlohmann::json robot_json(const RobotState& r) {
  return {{"position", vec_json(r.position)},
          {"heading", r.heading},
          {"trans_speed", r.trans_speed},
          {"rot_speed", r.rot_speed},
          {"goal", vec_json(r.goal)}};
}

RobotState robot_from(const nlohmann::json& j) {
  RobotState r;
  r.position = vec_from(j.at("position"));
  r.heading = j.at("heading").get<double>();
  r.trans_speed = j.at("trans_speed").get<double>();
  r.rot_speed = j.at("rot_speed").get<double>();
  r.goal = vec_from(j.at("goal"));
  return r;
}

nlohmann::json human_json(const HumanAgent& h) {
  return {{"position", vec_json(h.position)}, {"velocity", vec_json(h.velocity)}, {"goal", vec_json(h.goal)},
          {"radius", h.radius}, {"max_speed", h.max_speed}, {"reactive", h.reactive_to_robot}};
}

HumanAgent human_from(const nlohmann::json& j) {
  HumanAgent h;
  h.position = vec_from(j.at("position"));
  h.velocity = vec_from(j.at("velocity"));
  h.goal = vec_from(j.at("goal"));
  h.radius = j.at("radius").get<double>();
  h.max_speed = j.at("max_speed").get<double>();
  h.reactive_to_robot = j.at("reactive").get<bool>();
  return h;
}

const Outcome kOutcomes[] = {Outcome::Running, Outcome::Success, Outcome::CollisionHuman, Outcome::CollisionObstacle,
                             Outcome::Timeout};

Outcome outcome_from(const std::string& s) {
  for (Outcome o : kOutcomes) {
    if (to_string(o) == s) return o;
  }
  throw std::invalid_argument("unknown outcome: " + s);
}

}  // namespace

nlohmann::json CrowdEnv::save_state() const {
  nlohmann::json obstacles = nlohmann::json::array();
  for (const Polygon& poly : map_.obstacles) {
    nlohmann::json ring = nlohmann::json::array();
    for (const Vec2& v : poly.vertices()) ring.push_back(vec_json(v));
    obstacles.push_back(std::move(ring));
  }
  nlohmann::json humans = nlohmann::json::array();
  for (const HumanAgent& h : humans_) humans.push_back(human_json(h));
  std::ostringstream rng;
  rng << rng_;
  return {{"seed", seed_},
          {"rng", rng.str()},
          {"bounds", {map_.bounds.min().x(), map_.bounds.min().y(), map_.bounds.max().x(), map_.bounds.max().y()}},
          {"obstacles", std::move(obstacles)},
          {"robot", robot_json(robot_)},
          {"humans", std::move(humans)},
          {"t", t_},
          {"done", done_},
          {"outcome", to_string(outcome_)},
          {"prev_d_goal", prev_d_goal_}};
}

void CrowdEnv::load_state(const nlohmann::json& state) {
  seed_ = state.at("seed").get<std::uint64_t>();
  std::istringstream rng(state.at("rng").get<std::string>());
  rng >> rng_;
  if (!rng) throw std::runtime_error("CrowdEnv::load_state: bad RNG state");
  const auto& b = state.at("bounds");
  map_ = MapModel{};
  map_.bounds = Box2(Vec2(b.at(0).get<double>(), b.at(1).get<double>()),
                     Vec2(b.at(2).get<double>(), b.at(3).get<double>()));
  for (const auto& ring : state.at("obstacles")) {
    std::vector<Vec2> vertices;
    for (const auto& v : ring) vertices.push_back(vec_from(v));
    map_.obstacles.emplace_back(std::move(vertices));
  }
  robot_ = robot_from(state.at("robot"));
  humans_.clear();
  for (const auto& h : state.at("humans")) humans_.push_back(human_from(h));
  t_ = state.at("t").get<int>();
  done_ = state.at("done").get<bool>();
  outcome_ = outcome_from(state.at("outcome").get<std::string>());
  prev_d_goal_ = state.at("prev_d_goal").get<double>();
}

nlohmann::json episode_header(const CrowdEnv& env) {
  nlohmann::json obstacles = nlohmann::json::array();
  for (const Polygon& poly : env.map().obstacles) {
    nlohmann::json ring = nlohmann::json::array();
    for (const Vec2& v : poly.vertices()) ring.push_back(vec_json(v));
    obstacles.push_back(std::move(ring));
  }
  nlohmann::json humans = nlohmann::json::array();
  for (const HumanAgent& h : env.humans()) humans.push_back(human_json(h));
  return {{"type", "episode"},
          {"seed", env.episode_seed()},
          {"obstacles", std::move(obstacles)},
          {"robot", robot_json(env.robot())},
          {"humans", std::move(humans)}};
}

nlohmann::json step_record(const CrowdEnv& env, int action, const StepResult& result) {
  nlohmann::json humans = nlohmann::json::array();
  for (const HumanAgent& h : env.humans()) {
    humans.push_back({{"position", vec_json(h.position)}, {"velocity", vec_json(h.velocity)}});
  }
  const RobotState& r = env.robot();
  return {{"type", "step"},
          {"t", env.t()},
          {"robot", {{"position", vec_json(r.position)}, {"heading", r.heading},
                     {"trans_speed", r.trans_speed}, {"rot_speed", r.rot_speed}}},
          {"humans", std::move(humans)},
          {"mask", result.observation.visibility_mask},
          {"action", action},
          {"reward", result.reward},
          {"d_min", result.info.d_min},
          {"outcome", to_string(result.outcome)}};
}

}  // namespace crowdnav
