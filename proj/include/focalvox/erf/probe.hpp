// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "focalvox/core/random.hpp"
#include "focalvox/nn/context.hpp"
#include "focalvox/sfm/config.hpp"
#include "focalvox/sparse/tensor.hpp"

namespace focalvox::erf {

/// Gradient magnitude of one output voxel with respect to every active input
/// voxel. Keys are exactly the active input coordinates.
template <int D>
struct ErfMap {
  VoxelCoord<D> query{};
  Extent<D> shape{};
  std::map<VoxelCoord<D>, double> values;
  double max = 0;  // normalisation for rendering

  /// Largest Chebyshev distance from `anchor` among nonzero entries; -1 if
  /// none. After strided layers the anchor is the query scaled back to input
  /// units.
  int support_radius(const VoxelCoord<D>& anchor) const {
    int r = -1;
    for (const auto& [c, v] : values)
      if (v != 0) r = std::max(r, chebyshev(c, anchor));
    return r;
  }
  int support_radius() const { return support_radius(query); }

  static int chebyshev(const VoxelCoord<D>& a, const VoxelCoord<D>& b) {
    int r = 0;
    for (int d = 0; d < D; ++d) r = std::max(r, std::abs(a.ijk[d] - b.ijk[d]));
    return r;
  }
};

template <typename T, int D>
VoxelCoord<D> select_query(const SparseTensor<T, D>& t, const VoxelCoord<D>& coord) {
  require(t.size() > 0, Errc::EmptyScene, "cannot pick a query in an empty scene");
  require(std::find(t.coords.begin(), t.coords.end(), coord) != t.coords.end(), Errc::InactiveQuery,
          "query " + to_string(coord) + " is not an active voxel");
  return coord;
}

/// Uniform over the active voxels; the same seed on the same scene picks the
/// same voxel.
template <typename T, int D>
VoxelCoord<D> select_query(const SparseTensor<T, D>& t, std::uint64_t seed) {
  require(t.size() > 0, Errc::EmptyScene, "cannot pick a query in an empty scene");
  Rng rng(seed);
  return t.coords[rng.below(t.size())];
}

/// Runs `stack` (Context&, const SparseVar<D>&) -> SparseVar<D> on `scene`,
/// takes s = ||y_query|| and returns ||ds/dx_i|| for every input voxel i.
/// The query must be active in the stack's output. A zero query feature has no
/// defined direction; the map is then all zero.
template <typename T, int D, typename Stack>
ErfMap<D> erf_gradient_map(const nn::ParamStore<T>& store, Stack&& stack, const SparseTensor<T, D>& scene,
                           const VoxelCoord<D>& query, nn::BnMode bn_mode = nn::BnMode::Eval) {
  nn::GradTape<T> tape;
  nn::Context<T> ctx(tape, store, bn_mode);
  nn::SparseVar<D> in = ctx.input(scene);
  nn::SparseVar<D> out = stack(ctx, in);

  const std::int32_t row = out.active->index().find(query);
  require(row >= 0, Errc::InactiveQuery, "query " + to_string(query) + " is not active in the probed output");
  const Dense<T>& y = tape.value(out.features);

  double norm = 0;
  for (std::size_t c = 0; c < y.cols(); ++c) norm += static_cast<double>(y(row, c)) * static_cast<double>(y(row, c));
  norm = std::sqrt(norm);

  ErfMap<D> map;
  map.query = query;
  map.shape = scene.spatial_shape;
  for (const auto& c : scene.coords) map.values[c] = 0.0;
  if (norm == 0) return map;

  // d||y_q|| / dy = y_q / ||y_q|| on the query row, zero elsewhere.
  Dense<T> seed(y.rows(), y.cols());
  for (std::size_t c = 0; c < y.cols(); ++c) seed(row, c) = static_cast<T>(y(row, c) / norm);
  auto grads = tape.backward(out.features, std::move(seed));
  const Dense<T>* g = grads.find(in.features);
  if (g == nullptr) return map;

  for (std::size_t r = 0; r < scene.coords.size(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < g->cols(); ++c) s += static_cast<double>((*g)(r, c)) * static_cast<double>((*g)(r, c));
    const double v = std::sqrt(s);
    require(std::isfinite(v), Errc::NonFiniteGradient, "non-finite ERF value at " + to_string(scene.coords[r]));
    map.values[scene.coords[r]] = v;
    map.max = std::max(map.max, v);
  }
  return map;
}

/// Reach of one layer: how far (Chebyshev, in its own input voxels) an output
/// reads, and the stride it applies to everything after it.
struct LayerReach {
  int radius = 0;
  int stride = 1;
};

inline LayerReach conv_reach(int kernel, int dilation, int stride = 1) {
  return {(kernel - 1) / 2 * dilation, stride};
}

/// All focal levels of one SFM module (or block; the rest is pointwise).
inline LayerReach sfm_reach(const sfm::SFMConfig& cfg) { return {sfm::erf_radius(cfg), 1}; }

/// Two 3x3 submanifold convs.
inline LayerReach srb_reach() { return {2, 1}; }

/// Radius of the whole stack in input voxels. Each layer's radius is scaled by
/// the product of the strides before it:  R = sum_i r_i * prod_{j<i} s_j.
inline int composed_radius(const std::vector<LayerReach>& layers) {
  int scale = 1, r = 0;
  for (const auto& l : layers) {
    r += l.radius * scale;
    scale *= l.stride;
  }
  return r;
}

}  // namespace focalvox::erf
