#include "crowdnav/map_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace crowdnav {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  // Avoid emitting "-0.000000".
  if (std::string(buf) == "-0.000000") return "0.000000";
  return buf;
}

std::string next_pgm_token(std::istream& in) {
  std::string token;
  while (in >> token) {
    if (token[0] != '#') return token;
    std::string rest;
    std::getline(in, rest);
  }
  throw std::runtime_error("truncated graymap header");
}

OccupancyGrid read_pgm(std::istream& in, bool binary, const GraymapImport& opts) {
  OccupancyGrid grid;
  grid.width = std::stoi(next_pgm_token(in));
  grid.height = std::stoi(next_pgm_token(in));
  const int max_value = std::stoi(next_pgm_token(in));
  if (max_value <= 0 || max_value > 255) throw std::runtime_error("only 8-bit graymaps are supported");
  grid.resolution = opts.resolution;
  grid.origin = opts.origin;
  if (grid.width <= 0 || grid.height <= 0) throw std::runtime_error("graymap has no pixels");
  grid.cells.assign(static_cast<std::size_t>(grid.width) * grid.height, 0);
  if (binary) in.get();  // single whitespace after maxval
  for (int img_row = 0; img_row < grid.height; ++img_row) {
    const int row = grid.height - 1 - img_row;
    for (int col = 0; col < grid.width; ++col) {
      int pixel = 0;
      if (binary) {
        const int ch = in.get();
        if (ch == EOF) throw std::runtime_error("truncated graymap pixel data");
        pixel = ch;
      } else if (!(in >> pixel)) {
        throw std::runtime_error("truncated graymap pixel data");
      }
      const int scaled = pixel * 255 / max_value;
      grid.cells[static_cast<std::size_t>(row) * grid.width + col] = static_cast<std::uint8_t>(255 - scaled);
    }
  }
  return grid;
}

}  // namespace

OccupancyGrid read_grid(std::istream& in, const GraymapImport& graymap) {
  std::string first;
  if (!(in >> first)) throw std::runtime_error("empty grid file");
  if (first == "P5") return read_pgm(in, true, graymap);
  if (first == "P2") return read_pgm(in, false, graymap);

  OccupancyGrid grid;
  try {
    grid.width = std::stoi(first);
  } catch (const std::exception&) {
    throw std::runtime_error("grid header must start with the width");
  }
  double ox = 0.0, oy = 0.0;
  if (!(in >> grid.height >> grid.resolution >> ox >> oy)) throw std::runtime_error("malformed grid header");
  grid.origin = Vec2(ox, oy);
  if (grid.width <= 0 || grid.height <= 0) throw std::runtime_error("grid has no cells");
  grid.cells.resize(static_cast<std::size_t>(grid.width) * grid.height);
  for (auto& cell : grid.cells) {
    int v = 0;
    if (!(in >> v)) throw std::runtime_error("grid has fewer cells than its header declares");
    if (v < 0 || v > 255) throw std::runtime_error("grid cell value out of range 0..255");
    cell = static_cast<std::uint8_t>(v);
  }
  grid.validate();
  return grid;
}

OccupancyGrid read_grid_file(const std::string& path, const GraymapImport& graymap) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open grid file " + path);
  return read_grid(in, graymap);
}

void write_grid(std::ostream& out, const OccupancyGrid& grid) {
  out << grid.width << ' ' << grid.height << ' ' << grid.resolution << ' ' << grid.origin.x() << ' '
      << grid.origin.y() << '\n';
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) out << (c ? " " : "") << static_cast<int>(grid.at(c, r));
    out << '\n';
  }
}

void write_map_model(std::ostream& out, const MapModel& map) {
  out << "{\n  \"bounds\": [" << fixed6(map.bounds.min().x()) << ", " << fixed6(map.bounds.min().y()) << ", "
      << fixed6(map.bounds.max().x()) << ", " << fixed6(map.bounds.max().y()) << "],\n  \"obstacles\": [";
  for (std::size_t i = 0; i < map.obstacles.size(); ++i) {
    out << (i ? ",\n    [" : "\n    [");
    const auto& verts = map.obstacles[i].vertices();
    for (std::size_t k = 0; k < verts.size(); ++k)
      out << (k ? ", " : "") << '[' << fixed6(verts[k].x()) << ", " << fixed6(verts[k].y()) << ']';
    out << ']';
  }
  out << (map.obstacles.empty() ? "]\n}\n" : "\n  ]\n}\n");
}

MapModel read_map_model(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed map file: ") + e.what());
  }
  MapModel map;
  const auto& b = doc.at("bounds");
  map.bounds = Box2(Vec2(b.at(0).get<double>(), b.at(1).get<double>()),
                    Vec2(b.at(2).get<double>(), b.at(3).get<double>()));
  for (const auto& poly : doc.at("obstacles")) {
    std::vector<Vec2> verts;
    for (const auto& v : poly) verts.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    map.obstacles.emplace_back(std::move(verts));
  }
  return map;
}

MapModel read_map_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map file " + path);
  return read_map_model(in);
}

}  // namespace crowdnav
