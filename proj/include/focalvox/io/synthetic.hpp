// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>

#include "focalvox/core/random.hpp"
#include "focalvox/io/voxelizer.hpp"

namespace focalvox::io {

/// Seeded outdoor-like scene inside the voxelizer range: a slightly rough
/// ground plane holding about 60% of the points plus a handful of box-shaped
/// objects sampled on their surfaces, up to 80% of the range height.
inline PointCloud synthetic_scene(std::size_t n_points, std::uint64_t seed, const VoxelizerConfig& range) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n_points);
  const auto& lo = range.range_min;
  const auto& hi = range.range_max;
  const double height = hi[2] - lo[2];
  const std::size_t n_ground = n_points * 3 / 5;
  for (std::size_t i = 0; i < n_ground; ++i) {
    cloud.points.push_back({rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                            lo[2] + rng.uniform(0.0, 0.1 * height), rng.uniform()});
  }
  const int n_boxes = 6;
  struct Box {
    double x0, y0, x1, y1, top;
  };
  std::vector<Box> boxes;
  for (int b = 0; b < n_boxes; ++b) {
    double w = rng.uniform(0.1, 0.25) * (hi[0] - lo[0]), d = rng.uniform(0.1, 0.25) * (hi[1] - lo[1]);
    double x0 = rng.uniform(lo[0], hi[0] - w), y0 = rng.uniform(lo[1], hi[1] - d);
    boxes.push_back({x0, y0, x0 + w, y0 + d, lo[2] + rng.uniform(0.4, 0.8) * height});
  }
  for (std::size_t i = n_ground; i < n_points; ++i) {
    const Box& b = boxes[rng.below(boxes.size())];
    double x = rng.uniform(b.x0, b.x1), y = rng.uniform(b.y0, b.y1), z = rng.uniform(lo[2], b.top);
    switch (rng.below(5)) {
      case 0: x = b.x0; break;
      case 1: x = b.x1; break;
      case 2: y = b.y0; break;
      case 3: y = b.y1; break;
      default: z = b.top; break;
    }
    cloud.points.push_back({x, y, z, rng.uniform()});
  }
  return cloud;
}

}  // namespace focalvox::io
