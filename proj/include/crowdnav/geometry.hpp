#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace crowdnav {

using Vec2 = Eigen::Vector2d;
using Box2 = Eigen::AlignedBox2d;

/// z-component of the 3D cross product of two planar vectors.
inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Wraps an angle to (-pi, pi].
double normalize_angle(double angle);

/// Occupancy grid, row-major. Row 0 sits at origin.y() and rows grow along +y.
/// Cell values: 0 free, 255 occupied, anything in between is unknown.
struct OccupancyGrid {
  int width = 0;
  int height = 0;
  double resolution = 0.05;
  Vec2 origin = Vec2::Zero();
  std::vector<std::uint8_t> cells;

  std::uint8_t at(int col, int row) const { return cells[static_cast<std::size_t>(row) * width + col]; }
  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Simple polygon with counter-clockwise vertex order.
class Polygon {
 public:
  Polygon() = default;
  /// Accepts either orientation and stores CCW. Throws std::invalid_argument
  /// for fewer than 3 vertices, zero area or self-intersection.
  explicit Polygon(std::vector<Vec2> vertices);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  const Vec2& vertex(std::size_t i) const { return vertices_[i % vertices_.size()]; }
  double area() const;
  const Vec2& circle_center() const { return circle_center_; }
  double circle_radius() const { return circle_radius_; }
  bool contains(const Vec2& p) const;

 private:
  std::vector<Vec2> vertices_;
  Vec2 circle_center_ = Vec2::Zero();
  double circle_radius_ = 0.0;
};

double signed_area(std::span<const Vec2> ring);
bool is_simple(std::span<const Vec2> ring);

struct MapModel {
  std::vector<Polygon> obstacles;
  Box2 bounds{Vec2(-6.0, -6.0), Vec2(6.0, 6.0)};
};

struct ScanSpec {
  int num_beams = 180;
  double fov = 2.0 * std::numbers::pi;
  double max_range = 6.0;
};

struct RayScan {
  int num_beams = 0;
  double fov = 0.0;
  double max_range = 0.0;
  std::vector<double> ranges;
};

/// World angle of beam k for a sensor at `heading`.
double beam_angle(double heading, const ScanSpec& spec, int k);

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b);
Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b);

/// Distance to the polygon boundary, negative iff p is strictly inside.
double signed_distance(const Vec2& p, const Polygon& poly);

/// Distance from p to the walls of `bounds`; negative outside the box.
double bounds_clearance(const Vec2& p, const Box2& bounds);

/// True when segment [a, b] touches the polygon (crosses an edge or lies inside).
bool segment_intersects_polygon(const Vec2& a, const Vec2& b, const Polygon& poly);

/// Range of the first hit of ray (origin, direction) on segment [a, b], or +inf.
double ray_segment_distance(const Vec2& origin, const Vec2& direction, const Vec2& a, const Vec2& b);

/// Ray traced scan of the map obstacles and walls. Throws std::invalid_argument
/// when `origin` lies inside an obstacle.
RayScan ray_cast(const Vec2& origin, double heading, const MapModel& map, const ScanSpec& spec);

struct MapProcessParams {
  int occupied_threshold = 128;
  int closing_radius_cells = 2;
  double simplify_tolerance_cells = 2.0;
};

struct MapProcessResult {
  MapModel model;
  int dropped_components = 0;
};

/// threshold -> morphological closing -> connected components -> outer contour
/// tracing -> max-deviation simplification -> world-frame CCW polygons.
MapProcessResult process_map(const OccupancyGrid& grid, const MapProcessParams& params = {});

namespace detail {
std::vector<std::uint8_t> threshold(const OccupancyGrid& grid, int occupied_threshold);
std::vector<std::uint8_t> morphological_close(const std::vector<std::uint8_t>& binary, int width, int height,
                                              int radius);
/// 8-connected component labels (0 = background, 1..n components).
std::vector<int> label_components(const std::vector<std::uint8_t>& binary, int width, int height, int* count);
/// Outer contour of component `label` in cell-corner coordinates, CCW.
std::vector<Eigen::Vector2i> trace_outer_contour(const std::vector<int>& labels, int width, int height, int label);
/// Douglas-Peucker style simplification of a closed ring.
std::vector<Vec2> simplify_ring(std::span<const Vec2> ring, double tolerance);
}  // namespace detail

}  // namespace crowdnav
