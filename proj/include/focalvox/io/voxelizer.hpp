// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "focalvox/io/points.hpp"
#include "focalvox/sparse/tensor.hpp"

namespace focalvox::io {

/// Grid definition: [range_min, range_max) per axis cut into voxel_size cells.
struct VoxelizerConfig {
  std::array<double, 3> voxel_size{0.2, 0.2, 0.2};
  std::array<double, 3> range_min{0, 0, 0};
  std::array<double, 3> range_max{12.8, 12.8, 3.2};
  std::size_t out_channels = 16;

  Extent<3> grid_shape() const {
    Extent<3> shape{};
    for (int d = 0; d < 3; ++d) {
      require(voxel_size[d] > 0, Errc::ConfigError, "voxel_size must be positive");
      double cells = (range_max[d] - range_min[d]) / voxel_size[d];
      double rounded = std::round(cells);
      require(std::abs(cells - rounded) <= 1e-6 && rounded >= 1, Errc::ConfigError,
              "range extent on axis " + std::to_string(d) + " is not a positive multiple of the voxel size");
      shape[d] = static_cast<int>(rounded);
    }
    return shape;
  }

  void validate() const {
    grid_shape();
    require(out_channels >= 1, Errc::ConfigError, "voxelizer out_channels must be positive");
  }

  friend bool operator==(const VoxelizerConfig&, const VoxelizerConfig&) = default;
};

/// Number of decorated features per voxel: offsets from the voxel center and intensity.
inline constexpr std::size_t kDecoratedFeatures = 4;

/// Per occupied voxel, the mean over its points of
/// [x - cx, y - cy, z - cz, intensity] with c the voxel center. Points outside
/// the range are dropped. Points are accumulated in sorted value order, so the
/// result does not depend on input order, bit for bit.
inline SparseTensor<double, 3> voxelize(const PointCloud& cloud, const VoxelizerConfig& cfg, int batch = 0) {
  const Extent<3> shape = cfg.grid_shape();
  struct Binned {
    VoxelCoord<3> coord;
    Point p;
  };
  std::vector<Binned> binned;
  binned.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    const double xyz[3] = {p.x, p.y, p.z};
    VoxelCoord<3> c{batch, {}};
    bool inside = true;
    for (int d = 0; d < 3 && inside; ++d) {
      double cell = std::floor((xyz[d] - cfg.range_min[d]) / cfg.voxel_size[d]);
      inside = cell >= 0 && cell < shape[d] && xyz[d] < cfg.range_max[d];
      c.ijk[d] = inside ? static_cast<int>(cell) : 0;
    }
    if (inside) binned.push_back({c, p});
  }
  require(!binned.empty(), Errc::EmptyScene, "no points inside the voxelizer range");
  std::sort(binned.begin(), binned.end(), [](const Binned& a, const Binned& b) {
    return std::tie(a.coord, a.p.x, a.p.y, a.p.z, a.p.intensity) <
           std::tie(b.coord, b.p.x, b.p.y, b.p.z, b.p.intensity);
  });

  SparseTensor<double, 3> out;
  out.spatial_shape = shape;
  std::vector<double> feats;
  for (std::size_t i = 0; i < binned.size();) {
    std::size_t j = i;
    const auto& c = binned[i].coord;
    double center[3];
    for (int d = 0; d < 3; ++d) center[d] = cfg.range_min[d] + (c.ijk[d] + 0.5) * cfg.voxel_size[d];
    double sum[4] = {0, 0, 0, 0};
    for (; j < binned.size() && binned[j].coord == c; ++j) {
      const Point& p = binned[j].p;
      sum[0] += p.x - center[0];
      sum[1] += p.y - center[1];
      sum[2] += p.z - center[2];
      sum[3] += p.intensity;
    }
    const auto n = static_cast<double>(j - i);
    for (double s : sum) feats.push_back(s / n);
    out.coords.push_back(c);
    i = j;
  }
  out.features = Dense<double>(out.coords.size(), kDecoratedFeatures, std::move(feats));
  return out;
}

}  // namespace focalvox::io
