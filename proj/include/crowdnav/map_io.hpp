#pragma once

#include "crowdnav/geometry.hpp"

#include <iosfwd>
#include <string>

namespace crowdnav {

/// Resolution and origin used for graymap input, which carries neither.
struct GraymapImport {
  double resolution = 0.05;
  Vec2 origin = Vec2::Zero();
};

/// Reads either the plain-text grid format
///   width height resolution origin_x origin_y
///   <width*height cell values 0..255, row-major, row 0 at origin_y>
/// or a PGM graymap (P2/P5). Graymap pixels are inverted (dark = occupied)
/// and the first image row is the top of the map.
OccupancyGrid read_grid(std::istream& in, const GraymapImport& graymap = {});
OccupancyGrid read_grid_file(const std::string& path, const GraymapImport& graymap = {});
void write_grid(std::ostream& out, const OccupancyGrid& grid);

/// Map model as JSON with 6-decimal vertex coordinates.
void write_map_model(std::ostream& out, const MapModel& map);
MapModel read_map_model(std::istream& in);
MapModel read_map_model_file(const std::string& path);

}  // namespace crowdnav
