// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <memory>
#include <vector>

#include "focalvox/core/dense.hpp"
#include "focalvox/sparse/coords.hpp"

namespace focalvox {

/// Active voxel coordinates plus an N x C feature block.
template <typename T, int D>
struct SparseTensor {
  std::vector<VoxelCoord<D>> coords;
  Dense<T> features;
  Extent<D> spatial_shape{};

  std::size_t size() const noexcept { return coords.size(); }
  std::size_t channels() const noexcept { return features.cols(); }

  /// Throws on row-count mismatch, out-of-range or duplicate coordinates and
  /// non-finite features.
  void validate() const {
    require(features.rows() == coords.size(), Errc::ShapeMismatch,
            "features have " + std::to_string(features.rows()) + " rows for " +
                std::to_string(coords.size()) + " coords");
    require(features.all_finite(), Errc::NonFiniteValue, "non-finite feature value");
    ActiveSet<D> check(coords, spatial_shape);
  }

  std::shared_ptr<const ActiveSet<D>> active_set() const {
    return std::make_shared<const ActiveSet<D>>(coords, spatial_shape);
  }
};

template <typename T, int D>
CoordIndex<D> build_index(const SparseTensor<T, D>& t) {
  return CoordIndex<D>(t.coords);
}

}  // namespace focalvox
