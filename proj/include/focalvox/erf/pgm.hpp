// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "focalvox/erf/probe.hpp"
#include "focalvox/io/files.hpp"

namespace focalvox::erf {

/// Which 2D view of a 3D map to render: one z index, or the max over z.
struct Plane {
  enum Kind { ZSlab, Bev } kind = Bev;
  int z = 0;

  static Plane slab(int z) { return {ZSlab, z}; }
  static Plane bev() { return {Bev, 0}; }
};

/// 8-bit pixel of value v against max m, rounding half up.
inline unsigned char normalize_pixel(double v, double m) {
  if (m <= 0 || v <= 0) return 0;
  double p = std::floor(255.0 * v / m + 0.5);
  return static_cast<unsigned char>(std::min(p, 255.0));
}

/// Binary PGM (P5, maxval 255), width = x extent, height = y extent, rows in
/// y order. Cells without an active voxel in the plane stay 0. Only voxels in
/// the query's batch are drawn.
inline std::string render_pgm(const ErfMap<3>& map, Plane plane) {
  require(!map.values.empty(), Errc::EmptyScene, "ERF map is empty");
  const int w = map.shape[0], h = map.shape[1];
  if (plane.kind == Plane::ZSlab)
    require(plane.z >= 0 && plane.z < map.shape[2], Errc::OutOfRange,
            "z slab " + std::to_string(plane.z) + " outside [0, " + std::to_string(map.shape[2]) + ")");
  std::vector<double> cell(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0);
  for (const auto& [c, v] : map.values) {
    if (c.batch != map.query.batch) continue;
    if (plane.kind == Plane::ZSlab && c.ijk[2] != plane.z) continue;
    auto& px = cell[static_cast<std::size_t>(c.ijk[1]) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c.ijk[0])];
    px = std::max(px, v);
  }
  char header[64];
  std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", w, h);
  std::string out(header);
  out.reserve(out.size() + cell.size());
  for (double v : cell) out.push_back(static_cast<char>(normalize_pixel(v, map.max)));
  return out;
}

/// Raw magnitudes of every voxel of the map, coordinate order.
inline std::string render_csv(const ErfMap<3>& map) {
  std::string out = "x,y,z,magnitude\n";
  char line[128];
  for (const auto& [c, v] : map.values) {
    if (c.batch != map.query.batch) continue;
    std::snprintf(line, sizeof line, "%d,%d,%d,%.17g\n", c.ijk[0], c.ijk[1], c.ijk[2], v);
    out += line;
  }
  return out;
}

inline void emit_pgm(const ErfMap<3>& map, Plane plane, const std::string& pgm_path, const std::string& csv_path) {
  const std::string pgm = render_pgm(map, plane);
  io::write_file_atomic(pgm_path, pgm);
  if (!csv_path.empty()) io::write_file_atomic(csv_path, render_csv(map));
}

}  // namespace focalvox::erf
