// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "focalvox/nn/context.hpp"
#include "focalvox/sparse/tensor.hpp"

// Naive single-head local attention over sparse voxels, the baseline the SFM
// mixer replaces. Each active voxel attends to every active voxel of the same
// batch inside the w^D window centred on it:
//   out_i = sum_j softmax_j(q_i . k_j / sqrt(C)) v_j
// Parameters under a prefix p: p.q, p.k, p.v, each a C -> C linear layer.

namespace focalvox::bench {

inline void declare_local_attention(nn::ParamSpecList& out, const std::string& prefix, std::size_t channels) {
  nn::declare_linear(out, prefix + ".q", channels, channels);
  nn::declare_linear(out, prefix + ".k", channels, channels);
  nn::declare_linear(out, prefix + ".v", channels, channels);
}

/// Rows of the active voxels inside the window of each voxel, in coordinate
/// order of the offsets (the query itself included).
template <int D>
std::vector<std::vector<std::int32_t>> window_members(const ActiveSet<D>& active, int window) {
  require(window > 0 && window % 2 == 1, Errc::ShapeMismatch,
          "attention window edge must be odd and positive, got " + std::to_string(window));
  const int r = window / 2;
  int volume = 1;
  for (int d = 0; d < D; ++d) volume *= window;
  std::vector<std::vector<std::int32_t>> members(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    const auto& c = active.coords()[i];
    for (int lin = 0; lin < volume; ++lin) {
      VoxelCoord<D> n{c.batch, {}};
      int rem = lin;
      bool inside = true;
      for (int d = D - 1; d >= 0; --d) {
        n.ijk[d] = c.ijk[d] + rem % window - r;
        rem /= window;
        inside = inside && n.ijk[d] >= 0 && n.ijk[d] < active.shape()[d];
      }
      if (!inside) continue;
      const std::int32_t j = active.index().find(n);
      if (j >= 0) members[i].push_back(j);
    }
  }
  return members;
}

/// Softmax weights of each query over its window, optionally returned in
/// `weights` (row i aligned with window_members()[i]).
template <typename T, int D>
SparseTensor<T, D> local_attention_reference(const SparseTensor<T, D>& t, int window, const nn::ParamStore<T>& store,
                                             const std::string& prefix, nn::InteractionCounter* counter = nullptr,
                                             std::vector<std::vector<T>>* weights = nullptr) {
  const std::size_t c = t.channels();
  require(store.at(prefix + ".q.weight").shape == std::vector<std::size_t>{c, c}, Errc::ShapeMismatch,
          "attention projections expect " + std::to_string(c) + " channels");
  auto active = t.active_set();
  const auto members = window_members<D>(*active, window);

  nn::GradTape<T> tape(false);
  nn::Context<T> ctx(tape, store);
  nn::Var x = tape.leaf(t.features);
  const Dense<T> q = tape.value(nn::linear(ctx, prefix + ".q", x));
  const Dense<T> k = tape.value(nn::linear(ctx, prefix + ".k", x));
  const Dense<T> v = tape.value(nn::linear(ctx, prefix + ".v", x));

  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  Dense<T> out(t.size(), c);
  if (weights) weights->assign(t.size(), {});
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& m = members[i];
    std::vector<double> logits(m.size());
    double top = -INFINITY;
    for (std::size_t a = 0; a < m.size(); ++a) {
      double dot = 0;
      for (std::size_t ch = 0; ch < c; ++ch) dot += static_cast<double>(q(i, ch)) * static_cast<double>(k(m[a], ch));
      logits[a] = dot * scale;
      top = std::max(top, logits[a]);
    }
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - top));
    for (std::size_t a = 0; a < m.size(); ++a) {
      const double w = logits[a] / z;
      for (std::size_t ch = 0; ch < c; ++ch) out(i, ch) += static_cast<T>(w * static_cast<double>(v(m[a], ch)));
      if (weights) (*weights)[i].push_back(static_cast<T>(w));
    }
    if (counter) {
      counter->qk += m.size();
      counter->av += m.size();
    }
  }
  return {t.coords, std::move(out), t.spatial_shape};
}

}  // namespace focalvox::bench
