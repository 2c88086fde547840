#include "crowdnav/orca.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crowdnav {

namespace {

constexpr double kEps = 1e-9;

// Internal line form of a half-plane: feasible side is left of `direction`.
struct Line {
  Vec2 point;
  Vec2 direction;
};

Line to_line(const HalfPlane& h) { return {h.point, Vec2(h.normal.y(), -h.normal.x())}; }

bool linear_program1(std::span<const Line> lines, std::size_t line_no, double radius, const Vec2& opt,
                     bool direction_opt, Vec2& result) {
  const Line& line = lines[line_no];
  const double dot = line.point.dot(line.direction);
  const double discriminant = dot * dot + radius * radius - line.point.squaredNorm();
  if (discriminant < 0.0) return false;

  const double sqrt_disc = std::sqrt(discriminant);
  double t_left = -dot - sqrt_disc;
  double t_right = -dot + sqrt_disc;
  for (std::size_t i = 0; i < line_no; ++i) {
    const double denominator = cross(line.direction, lines[i].direction);
    const double numerator = cross(lines[i].direction, line.point - lines[i].point);
    if (std::abs(denominator) <= kEps) {
      if (numerator < 0.0) return false;
      continue;
    }
    const double t = numerator / denominator;
    if (denominator >= 0.0)
      t_right = std::min(t_right, t);
    else
      t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    result = line.point + (opt.dot(line.direction) > 0.0 ? t_right : t_left) * line.direction;
  } else {
    const double t = std::clamp(line.direction.dot(opt - line.point), t_left, t_right);
    result = line.point + t * line.direction;
  }
  return true;
}

std::size_t linear_program2(std::span<const Line> lines, double radius, const Vec2& opt, bool direction_opt,
                            Vec2& result) {
  if (direction_opt)
    result = opt * radius;
  else if (opt.squaredNorm() > radius * radius)
    result = opt.normalized() * radius;
  else
    result = opt;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (cross(lines[i].direction, lines[i].point - result) > 0.0) {
      const Vec2 previous = result;
      if (!linear_program1(lines, i, radius, opt, direction_opt, result)) {
        result = previous;
        return i;
      }
    }
  }
  return lines.size();
}

void linear_program3(std::span<const Line> lines, std::size_t hard_count, std::size_t begin_line, double radius,
                     Vec2& result) {
  double distance = 0.0;
  for (std::size_t i = begin_line; i < lines.size(); ++i) {
    if (cross(lines[i].direction, lines[i].point - result) <= distance) continue;

    std::vector<Line> projected(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(hard_count));
    for (std::size_t j = hard_count; j < i; ++j) {
      Line line;
      const double determinant = cross(lines[i].direction, lines[j].direction);
      if (std::abs(determinant) <= kEps) {
        if (lines[i].direction.dot(lines[j].direction) > 0.0) continue;
        line.point = 0.5 * (lines[i].point + lines[j].point);
      } else {
        line.point = lines[i].point +
                     (cross(lines[j].direction, lines[i].point - lines[j].point) / determinant) * lines[i].direction;
      }
      line.direction = (lines[j].direction - lines[i].direction).normalized();
      projected.push_back(line);
    }
    const Vec2 previous = result;
    if (linear_program2(projected, radius, Vec2(-lines[i].direction.y(), lines[i].direction.x()), true, result) <
        projected.size())
      result = previous;
    distance = cross(lines[i].direction, lines[i].point - result);
  }
}

Vec2 clamp_speed(Vec2 v, double max_speed) {
  double norm = v.norm();
  if (norm <= max_speed) return v;
  v *= max_speed / norm;
  while (v.norm() > max_speed) v *= 1.0 - 1e-15;
  return v;
}

}  // namespace

void OrcaParams::validate() const {
  if (!(time_horizon_agents > 0.0 && time_horizon_obstacles > 0.0 && neighbor_dist > 0.0 && dt > 0.0))
    throw std::invalid_argument("ORCA parameters must be strictly positive");
}

OrcaConstraints compute_orca_halfplanes(const HumanAgent& self, std::span<const OrcaNeighbor> neighbors,
                                        const MapModel& obstacles, const OrcaParams& params) {
  OrcaConstraints out;
  const double radius = self.radius + params.safety_margin;
  const double obstacle_range = params.time_horizon_obstacles * self.max_speed + radius;
  const double inv_tau_obst = 1.0 / params.time_horizon_obstacles;

  auto add_edge = [&](const Vec2& a, const Vec2& b) {
    const Vec2 closest = closest_point_on_segment(self.position, a, b);
    const Vec2 offset = self.position - closest;
    const double dist = offset.norm();
    if (dist >= obstacle_range) return;
    Vec2 normal;
    if (dist > 1e-12) {
      normal = offset / dist;
    } else {
      const Vec2 edge = (b - a).normalized();
      normal = Vec2(edge.y(), -edge.x());
    }
    // Inside the safety radius: move out within one step.
    const double allowance = dist >= radius ? (dist - radius) * inv_tau_obst : (dist - radius) / params.dt;
    out.planes.push_back({-allowance * normal, normal});
  };

  for (const Polygon& poly : obstacles.obstacles) {
    if ((self.position - poly.circle_center()).norm() > poly.circle_radius() + obstacle_range) continue;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& a = poly.vertex(i);
      const Vec2& b = poly.vertex(i + 1);
      // CCW polygons: the agent must be on the right of an edge it can touch.
      if (cross(b - a, self.position - a) > 0.0 && !poly.contains(self.position)) continue;
      add_edge(a, b);
    }
  }
  const Box2& box = obstacles.bounds;
  const Vec2 corners[4] = {box.corner(Box2::BottomLeft), box.corner(Box2::BottomRight), box.corner(Box2::TopRight),
                           box.corner(Box2::TopLeft)};
  for (int w = 0; w < 4; ++w) add_edge(corners[w], corners[(w + 1) % 4]);
  out.obstacle_count = out.planes.size();

  const double inv_tau = 1.0 / params.time_horizon_agents;
  for (const OrcaNeighbor& other : neighbors) {
    const Vec2 rel_pos = other.position - self.position;
    if (rel_pos.norm() > params.neighbor_dist) continue;
    const Vec2 rel_vel = self.velocity - other.velocity;
    const double dist_sq = rel_pos.squaredNorm();
    const double combined = radius + other.radius;
    const double combined_sq = combined * combined;

    Vec2 direction;
    Vec2 u;
    if (dist_sq > combined_sq) {
      const Vec2 w = rel_vel - inv_tau * rel_pos;
      const double w_len_sq = w.squaredNorm();
      const double dot1 = w.dot(rel_pos);
      if (dot1 < 0.0 && dot1 * dot1 > combined_sq * w_len_sq) {
        // Project on the cut-off circle.
        const double w_len = std::sqrt(w_len_sq);
        const Vec2 unit_w = w / w_len;
        direction = Vec2(unit_w.y(), -unit_w.x());
        u = (combined * inv_tau - w_len) * unit_w;
      } else {
        // Project on the nearer leg of the cone.
        const double leg = std::sqrt(dist_sq - combined_sq);
        if (cross(rel_pos, w) > 0.0) {
          direction = Vec2(rel_pos.x() * leg - rel_pos.y() * combined, rel_pos.x() * combined + rel_pos.y() * leg) /
                      dist_sq;
        } else {
          direction = -Vec2(rel_pos.x() * leg + rel_pos.y() * combined, -rel_pos.x() * combined + rel_pos.y() * leg) /
                      dist_sq;
        }
        u = rel_vel.dot(direction) * direction - rel_vel;
      }
    } else {
      // Overlapping: separate along the centre line within one step.
      const double inv_dt = 1.0 / params.dt;
      Vec2 w = rel_vel - inv_dt * rel_pos;
      double w_len = w.norm();
      if (w_len < 1e-12) {
        w = rel_pos.norm() > 1e-12 ? Vec2(-rel_pos.normalized()) : Vec2(Vec2::UnitX());
        w_len = 0.0;
      }
      const Vec2 unit_w = w_len > 0.0 ? Vec2(w / w_len) : w;
      direction = Vec2(unit_w.y(), -unit_w.x());
      u = (combined * inv_dt - w_len) * unit_w;
    }
    const Vec2 point = self.velocity + 0.5 * u;
    out.planes.push_back({point, Vec2(-direction.y(), direction.x())});
  }
  return out;
}

Vec2 solve_velocity_lp(std::span<const HalfPlane> planes, const Vec2& preferred, double max_speed,
                       std::size_t hard_count) {
  if (!(max_speed > 0.0)) throw std::invalid_argument("max_speed must be positive");
  std::vector<Line> lines;
  lines.reserve(planes.size());
  for (const HalfPlane& h : planes) lines.push_back(to_line(h));
  hard_count = std::min(hard_count, lines.size());

  Vec2 result = Vec2::Zero();
  const std::size_t failed = linear_program2(lines, max_speed, preferred, false, result);
  if (failed < lines.size()) linear_program3(lines, hard_count, failed, max_speed, result);
  return clamp_speed(result, max_speed);
}

std::optional<Vec2> sample_free_point(const MapModel& map, double clearance, std::mt19937_64& rng, int max_tries) {
  const Vec2 lo = map.bounds.min().array() + clearance;
  const Vec2 hi = map.bounds.max().array() - clearance;
  if ((hi.array() <= lo.array()).any()) return std::nullopt;
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    const double x = ux(rng);
    const Vec2 p(x, uy(rng));
    const bool clear = std::all_of(map.obstacles.begin(), map.obstacles.end(),
                                   [&](const Polygon& poly) { return signed_distance(p, poly) >= clearance; });
    if (clear) return p;
  }
  return std::nullopt;
}

void step_humans(std::vector<HumanAgent>& humans, const std::optional<RobotPresence>& robot, const MapModel& map,
                 const OrcaParams& params, std::mt19937_64& rng) {
  params.validate();
  std::vector<Vec2> next_velocity(humans.size());
  std::vector<OrcaNeighbor> neighbors;
  for (std::size_t i = 0; i < humans.size(); ++i) {
    const HumanAgent& h = humans[i];
    neighbors.clear();
    for (std::size_t j = 0; j < humans.size(); ++j) {
      if (j != i) neighbors.push_back({humans[j].position, humans[j].velocity, humans[j].radius});
    }
    if (robot && h.reactive_to_robot) neighbors.push_back({robot->position, robot->velocity, robot->radius});

    const Vec2 to_goal = h.goal - h.position;
    const double dist = to_goal.norm();
    Vec2 preferred = Vec2::Zero();
    if (dist > 0.0) preferred = to_goal / dist * std::min(h.max_speed, dist / params.dt);

    const OrcaConstraints constraints = compute_orca_halfplanes(h, neighbors, map, params);
    next_velocity[i] = solve_velocity_lp(constraints.planes, preferred, h.max_speed, constraints.obstacle_count);
  }

  for (std::size_t i = 0; i < humans.size(); ++i) {
    HumanAgent& h = humans[i];
    h.velocity = next_velocity[i];
    h.position += h.velocity * params.dt;
  }
  for (HumanAgent& h : humans) {
    if ((h.goal - h.position).norm() >= params.arrival_tolerance) continue;
    if (auto goal = sample_free_point(map, h.radius + 0.1, rng)) h.goal = *goal;
  }
}

}  // namespace crowdnav
