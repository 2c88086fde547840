#include "crowdnav/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace crowdnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Slack on the segment parameter so that rays through a shared corner hit
// at least one of the two edges.
constexpr double kSegmentSlack = 1e-12;

double orient(const Vec2& a, const Vec2& b, const Vec2& c) { return cross(b - a, c - a); }

bool segments_cross_properly(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  return o1 * o2 < 0.0 && o3 * o4 < 0.0;
}

bool segments_touch(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  if (segments_cross_properly(a, b, c, d)) return true;
  return distance_to_segment(a, c, d) == 0.0 || distance_to_segment(b, c, d) == 0.0 ||
         distance_to_segment(c, a, b) == 0.0 || distance_to_segment(d, a, b) == 0.0;
}

}  // namespace

double normalize_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle, two_pi);
  if (wrapped <= -std::numbers::pi) wrapped += two_pi;
  if (wrapped > std::numbers::pi) wrapped -= two_pi;
  return wrapped;
}

void OccupancyGrid::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("occupancy grid is empty");
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw std::invalid_argument("occupancy grid resolution must be positive");
  if (cells.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw std::invalid_argument("occupancy grid cell count " + std::to_string(cells.size()) +
                                " does not match " + std::to_string(width) + "x" + std::to_string(height));
}

double signed_area(std::span<const Vec2> ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) twice += cross(ring[i], ring[(i + 1) % ring.size()]);
  return 0.5 * twice;
}

bool is_simple(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the wrap
      if (segments_cross_properly(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) return false;
    }
  }
  return true;
}

Polygon::Polygon(std::vector<Vec2> vertices) {
  std::vector<Vec2> cleaned;
  cleaned.reserve(vertices.size());
  for (const Vec2& v : vertices) {
    if (!v.allFinite()) throw std::invalid_argument("polygon vertex is not finite");
    if (cleaned.empty() || cleaned.back() != v) cleaned.push_back(v);
  }
  while (cleaned.size() > 1 && cleaned.front() == cleaned.back()) cleaned.pop_back();
  if (cleaned.size() < 3) throw std::invalid_argument("polygon needs at least 3 distinct vertices");
  const double area = signed_area(cleaned);
  if (std::abs(area) < 1e-12) throw std::invalid_argument("polygon has zero area");
  if (area < 0.0) std::reverse(cleaned.begin(), cleaned.end());
  if (!is_simple(cleaned)) throw std::invalid_argument("polygon is self-intersecting");
  vertices_ = std::move(cleaned);

  Vec2 sum = Vec2::Zero();
  for (const Vec2& v : vertices_) sum += v;
  circle_center_ = sum / static_cast<double>(vertices_.size());
  for (const Vec2& v : vertices_) circle_radius_ = std::max(circle_radius_, (v - circle_center_).norm());
}

double Polygon::area() const { return signed_area(vertices_); }

bool Polygon::contains(const Vec2& p) const {
  bool inside = false;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = vertices_[i];
    const Vec2& b = vertices_[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x_cross = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

double beam_angle(double heading, const ScanSpec& spec, int k) {
  if (spec.num_beams == 1) return heading;
  return heading - 0.5 * spec.fov + k * spec.fov / (spec.num_beams - 1);
}

Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len_sq = ab.squaredNorm();
  if (len_sq == 0.0) return a;
  const double s = std::clamp((p - a).dot(ab) / len_sq, 0.0, 1.0);
  return a + s * ab;
}

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  return (p - closest_point_on_segment(p, a, b)).norm();
}

double signed_distance(const Vec2& p, const Polygon& poly) {
  double best = kInf;
  const auto& v = poly.vertices();
  for (std::size_t i = 0; i < v.size(); ++i) best = std::min(best, distance_to_segment(p, v[i], poly.vertex(i + 1)));
  if (best > 0.0 && poly.contains(p)) return -best;
  return best;
}

double bounds_clearance(const Vec2& p, const Box2& bounds) {
  const Vec2 lo = p - bounds.min();
  const Vec2 hi = bounds.max() - p;
  return std::min({lo.x(), lo.y(), hi.x(), hi.y()});
}

bool segment_intersects_polygon(const Vec2& a, const Vec2& b, const Polygon& poly) {
  if (poly.contains(a) || poly.contains(b)) return true;
  for (std::size_t i = 0; i < poly.size(); ++i)
    if (segments_touch(a, b, poly.vertex(i), poly.vertex(i + 1))) return true;
  return false;
}

double ray_segment_distance(const Vec2& origin, const Vec2& direction, const Vec2& a, const Vec2& b) {
  const Vec2 edge = b - a;
  const double denom = cross(direction, edge);
  if (std::abs(denom) < 1e-15) return kInf;
  const Vec2 ao = a - origin;
  const double t = cross(ao, edge) / denom;
  const double s = cross(ao, direction) / denom;
  if (t < 0.0 || s < -kSegmentSlack || s > 1.0 + kSegmentSlack) return kInf;
  return t;
}

RayScan ray_cast(const Vec2& origin, double heading, const MapModel& map, const ScanSpec& spec) {
  if (spec.num_beams <= 0 || !(spec.max_range > 0.0))
    throw std::invalid_argument("scan spec needs positive beam count and range");
  for (const Polygon& poly : map.obstacles) {
    if ((origin - poly.circle_center()).norm() <= poly.circle_radius() && signed_distance(origin, poly) < 0.0)
      throw std::invalid_argument("ray cast origin lies inside an obstacle");
  }

  const Vec2 corners[4] = {map.bounds.corner(Box2::BottomLeft), map.bounds.corner(Box2::BottomRight),
                           map.bounds.corner(Box2::TopRight), map.bounds.corner(Box2::TopLeft)};

  RayScan scan{spec.num_beams, spec.fov, spec.max_range, std::vector<double>(spec.num_beams, spec.max_range)};
  for (int k = 0; k < spec.num_beams; ++k) {
    const double angle = beam_angle(heading, spec, k);
    const Vec2 dir(std::cos(angle), std::sin(angle));
    double best = spec.max_range;
    for (int w = 0; w < 4; ++w) best = std::min(best, ray_segment_distance(origin, dir, corners[w], corners[(w + 1) % 4]));

    for (const Polygon& poly : map.obstacles) {
      // Bounding-circle rejection before touching the edges.
      const Vec2 to_center = poly.circle_center() - origin;
      const double along = to_center.dot(dir);
      const double r = poly.circle_radius();
      const double perp_sq = to_center.squaredNorm() - along * along;
      if (perp_sq > r * r) continue;
      const double half_chord = std::sqrt(r * r - perp_sq);
      if (along + half_chord < 0.0 || along - half_chord >= best) continue;
      for (std::size_t i = 0; i < poly.size(); ++i)
        best = std::min(best, ray_segment_distance(origin, dir, poly.vertex(i), poly.vertex(i + 1)));
    }
    scan.ranges[k] = best;
  }
  return scan;
}

namespace detail {

std::vector<std::uint8_t> threshold(const OccupancyGrid& grid, int occupied_threshold) {
  std::vector<std::uint8_t> out(grid.cells.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grid.cells[i] >= occupied_threshold ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> morphological_close(const std::vector<std::uint8_t>& binary, int width, int height,
                                              int radius) {
  if (radius <= 0) return binary;
  std::vector<Eigen::Vector2i> disc;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) disc.emplace_back(dx, dy);

  std::vector<std::uint8_t> dilated(binary.size(), 0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      for (const auto& o : disc) {
        const int cc = c + o.x();
        const int rr = r + o.y();
        if (cc >= 0 && cc < width && rr >= 0 && rr < height && binary[rr * width + cc]) {
          dilated[r * width + c] = 1;
          break;
        }
      }
    }
  }
  // Out-of-grid cells count as occupied during erosion so that obstacles
  // touching the border are not eaten away.
  std::vector<std::uint8_t> closed(binary.size(), 0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      bool keep = true;
      for (const auto& o : disc) {
        const int cc = c + o.x();
        const int rr = r + o.y();
        if (cc >= 0 && cc < width && rr >= 0 && rr < height && !dilated[rr * width + cc]) {
          keep = false;
          break;
        }
      }
      closed[r * width + c] = keep ? 1 : 0;
    }
  }
  return closed;
}

std::vector<int> label_components(const std::vector<std::uint8_t>& binary, int width, int height, int* count) {
  std::vector<int> labels(binary.size(), 0);
  int next = 0;
  std::vector<int> stack;
  for (int start = 0; start < width * height; ++start) {
    if (!binary[start] || labels[start]) continue;
    ++next;
    labels[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      const int r = idx / width;
      const int c = idx % width;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int rr = r + dy;
          const int cc = c + dx;
          if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
          const int n = rr * width + cc;
          if (binary[n] && !labels[n]) {
            labels[n] = next;
            stack.push_back(n);
          }
        }
      }
    }
  }
  if (count) *count = next;
  return labels;
}

std::vector<Eigen::Vector2i> trace_outer_contour(const std::vector<int>& labels, int width, int height, int label) {
  struct Edge {
    Eigen::Vector2i from;
    Eigen::Vector2i to;
    int dir;  // 0 east, 1 north, 2 west, 3 south
  };
  std::vector<Edge> edges;
  auto is_label = [&](int c, int r) {
    return c >= 0 && c < width && r >= 0 && r < height && labels[r * width + c] == label;
  };
  // Directed boundary edges with the component on the left.
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (labels[r * width + c] != label) continue;
      if (!is_label(c, r - 1)) edges.push_back({{c, r}, {c + 1, r}, 0});
      if (!is_label(c + 1, r)) edges.push_back({{c + 1, r}, {c + 1, r + 1}, 1});
      if (!is_label(c, r + 1)) edges.push_back({{c + 1, r + 1}, {c, r + 1}, 2});
      if (!is_label(c - 1, r)) edges.push_back({{c, r + 1}, {c, r}, 3});
    }
  }
  if (edges.empty()) return {};

  const auto key = [width](const Eigen::Vector2i& v) { return static_cast<long long>(v.y()) * (width + 1) + v.x(); };
  std::unordered_map<long long, std::vector<int>> outgoing;
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) outgoing[key(edges[i].from)].push_back(i);

  // At a saddle vertex prefer the rightmost turn, which keeps diagonal
  // neighbours of an 8-connected component on the same contour.
  auto successor = [&](int e) {
    const auto& candidates = outgoing.at(key(edges[e].to));
    if (candidates.size() == 1) return candidates.front();
    const int d = edges[e].dir;
    for (int turn : {3, 0, 1}) {
      for (int cand : candidates)
        if (edges[cand].dir == (d + turn) % 4) return cand;
    }
    return candidates.front();
  };

  std::vector<char> used(edges.size(), 0);
  std::vector<Eigen::Vector2i> best_loop;
  long long best_area2 = 0;
  for (int start = 0; start < static_cast<int>(edges.size()); ++start) {
    if (used[start]) continue;
    std::vector<Eigen::Vector2i> loop;
    int e = start;
    do {
      used[e] = 1;
      const int next = successor(e);
      if (edges[next].dir != edges[e].dir) loop.push_back(edges[e].to);
      e = next;
    } while (e != start);
    long long area2 = 0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
      const auto& a = loop[i];
      const auto& b = loop[(i + 1) % loop.size()];
      area2 += static_cast<long long>(a.x()) * b.y() - static_cast<long long>(a.y()) * b.x();
    }
    if (area2 > best_area2) {
      best_area2 = area2;
      best_loop = std::move(loop);
    }
  }
  return best_loop;
}

std::vector<Vec2> simplify_ring(std::span<const Vec2> ring, double tolerance) {
  const std::size_t n = ring.size();
  if (n <= 3) return {ring.begin(), ring.end()};

  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (ring[i].x() < ring[first].x() || (ring[i].x() == ring[first].x() && ring[i].y() < ring[first].y()))
      first = i;
  }
  std::size_t second = first;
  double far = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (ring[i] - ring[first]).squaredNorm();
    if (d > far) {
      far = d;
      second = i;
    }
  }

  std::vector<char> keep(n, 0);
  keep[first] = keep[second] = 1;
  // Split ranges are expressed as offsets from `first` to handle wrap-around.
  const std::size_t split = (second + n - first) % n;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, split}, {split, n}};
  while (!stack.empty()) {
    const auto [lo, hi] = stack.back();
    stack.pop_back();
    if (hi <= lo + 1) continue;
    const Vec2& a = ring[(first + lo) % n];
    const Vec2& b = ring[(first + hi) % n];
    double worst = -1.0;
    std::size_t worst_at = lo;
    for (std::size_t k = lo + 1; k < hi; ++k) {
      const double d = distance_to_segment(ring[(first + k) % n], a, b);
      if (d > worst) {
        worst = d;
        worst_at = k;
      }
    }
    if (worst > tolerance) {
      keep[(first + worst_at) % n] = 1;
      stack.emplace_back(lo, worst_at);
      stack.emplace_back(worst_at, hi);
    }
  }
  std::vector<Vec2> out;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = (first + k) % n;
    if (keep[i]) out.push_back(ring[i]);
  }
  return out;
}

}  // namespace detail

MapProcessResult process_map(const OccupancyGrid& grid, const MapProcessParams& params) {
  grid.validate();
  if (params.closing_radius_cells < 0 || params.simplify_tolerance_cells < 0.0)
    throw std::invalid_argument("map processing radii must be non-negative");

  const auto binary = detail::threshold(grid, params.occupied_threshold);
  const auto closed = detail::morphological_close(binary, grid.width, grid.height, params.closing_radius_cells);
  int count = 0;
  const auto labels = detail::label_components(closed, grid.width, grid.height, &count);

  MapProcessResult result;
  result.model.bounds = Box2(grid.origin, grid.origin + grid.resolution * Vec2(grid.width, grid.height));

  std::vector<Polygon> candidates;
  std::vector<Vec2> inner_points;
  for (int label = 1; label <= count; ++label) {
    const auto contour = detail::trace_outer_contour(labels, grid.width, grid.height, label);
    std::vector<Vec2> ring;
    ring.reserve(contour.size());
    for (const auto& corner : contour) ring.push_back(grid.origin + grid.resolution * corner.cast<double>());
    auto simplified = detail::simplify_ring(ring, params.simplify_tolerance_cells * grid.resolution);
    if (simplified.size() < 3) {
      ++result.dropped_components;
      continue;
    }
    try {
      candidates.emplace_back(std::move(simplified));
    } catch (const std::invalid_argument&) {
      ++result.dropped_components;
      continue;
    }
    const auto first_cell = std::find(labels.begin(), labels.end(), label) - labels.begin();
    inner_points.push_back(grid.origin + grid.resolution * Vec2(first_cell % grid.width + 0.5,
                                                                  first_cell / grid.width + 0.5));
  }

  // Components sitting inside the hole of another component are already
  // covered by the enclosing outline.
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    bool nested = false;
    for (std::size_t j = 0; j < candidates.size() && !nested; ++j)
      nested = i != j && candidates[j].contains(inner_points[i]) && candidates[j].area() > candidates[i].area();
    if (!nested) result.model.obstacles.push_back(candidates[i]);
  }
  return result;
}

}  // namespace crowdnav
