// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "focalvox/core/error.hpp"

namespace focalvox {

template <int D>
using Extent = std::array<int, D>;

/// (batch, ijk) grid address. Ordering is lexicographic over (batch, i, j, k),
/// which is the canonical row order for every tensor the library creates.
template <int D>
struct VoxelCoord {
  int batch = 0;
  Extent<D> ijk{};

  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
};

template <int D>
std::string to_string(const VoxelCoord<D>& c) {
  std::string s = "(" + std::to_string(c.batch);
  for (int d = 0; d < D; ++d) s += "," + std::to_string(c.ijk[d]);
  return s + ")";
}

template <int D>
struct VoxelCoordHash {
  std::size_t operator()(const VoxelCoord<D>& c) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ull ^ static_cast<std::uint64_t>(c.batch);
    for (int d = 0; d < D; ++d) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.ijk[d])) + 0x9e3779b97f4a7c15ull +
           (h << 6) + (h >> 2);
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return static_cast<std::size_t>(h);
  }
};

template <int D>
bool in_bounds(const Extent<D>& ijk, const Extent<D>& shape) {
  for (int d = 0; d < D; ++d)
    if (ijk[d] < 0 || ijk[d] >= shape[d]) return false;
  return true;
}

/// Coordinate -> row map. Bijective onto [0, N) by construction.
template <int D>
class CoordIndex {
 public:
  CoordIndex() = default;

  explicit CoordIndex(const std::vector<VoxelCoord<D>>& coords) {
    map_.reserve(coords.size() * 2);
    for (std::size_t row = 0; row < coords.size(); ++row) {
      auto [it, inserted] = map_.emplace(coords[row], static_cast<std::int32_t>(row));
      if (!inserted) {
        fail(Errc::DuplicateCoordinate, to_string(coords[row]) + " at rows " +
                                            std::to_string(it->second) + " and " +
                                            std::to_string(row));
      }
    }
  }

  std::optional<std::int32_t> lookup(const VoxelCoord<D>& c) const {
    auto it = map_.find(c);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  /// -1 when absent; the hot-loop form of lookup.
  std::int32_t find(const VoxelCoord<D>& c) const {
    auto it = map_.find(c);
    return it == map_.end() ? -1 : it->second;
  }

  std::size_t size() const noexcept { return map_.size(); }

 private:
  std::unordered_map<VoxelCoord<D>, std::int32_t, VoxelCoordHash<D>> map_;
};

/// Validated, immutable coordinate set of a sparse tensor together with its
/// index. Shared between every tensor that has the same active set.
template <int D>
class ActiveSet {
 public:
  ActiveSet(std::vector<VoxelCoord<D>> coords, Extent<D> shape)
      : coords_(std::move(coords)), shape_(shape) {
    for (int d = 0; d < D; ++d)
      require(shape_[d] > 0, Errc::InvalidSpec, "spatial shape must be positive");
    for (const auto& c : coords_) {
      if (c.batch < 0 || !in_bounds<D>(c.ijk, shape_))
        fail(Errc::OutOfRange, "coordinate " + to_string(c) + " outside spatial shape");
    }
    index_ = CoordIndex<D>(coords_);
  }

  const std::vector<VoxelCoord<D>>& coords() const noexcept { return coords_; }
  const Extent<D>& shape() const noexcept { return shape_; }
  const CoordIndex<D>& index() const noexcept { return index_; }
  std::size_t size() const noexcept { return coords_.size(); }

 private:
  std::vector<VoxelCoord<D>> coords_;
  Extent<D> shape_;
  CoordIndex<D> index_;
};

}  // namespace focalvox
