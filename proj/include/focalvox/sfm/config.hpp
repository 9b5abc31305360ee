// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "focalvox/core/error.hpp"

namespace focalvox::sfm {

/// How the per-level gate logits are squashed before weighting.
enum class GateMode { Raw, Sigmoid, Softmax };

struct SFMConfig {
  std::vector<int> kernels{3, 3};
  std::vector<int> dilations{1, 3};
  std::size_t channels = 16;
  double mlp_ratio = 2.0;
  GateMode gate = GateMode::Raw;

  std::size_t levels() const { return kernels.size(); }

  void validate() const {
    require(!kernels.empty(), Errc::ConfigError, "SFM needs at least one focal level");
    require(kernels.size() == dilations.size(), Errc::ConfigError,
            "kernels and dilations must have the same length");
    for (int k : kernels)
      require(k > 0 && k % 2 == 1, Errc::ConfigError, "focal kernel sizes must be odd and positive");
    for (int d : dilations) require(d > 0, Errc::ConfigError, "focal dilations must be positive");
    require(channels >= 1, Errc::ConfigError, "SFM channel count must be positive");
    require(mlp_ratio > 0, Errc::ConfigError, "mlp_ratio must be positive");
  }
};

struct ReceptiveField {
  int voxels = 1;  // edge length r of the cubic receptive field
  double meters = 0;
};

/// r = 1 + sum over levels of (k - 1) * d, in voxels; meters = r * voxel edge.
inline ReceptiveField effective_receptive_field(const std::vector<int>& kernels,
                                                const std::vector<int>& dilations,
                                                double voxel_edge = 0.0) {
  require(kernels.size() == dilations.size(), Errc::ConfigError, "kernels/dilations length mismatch");
  int r = 1;
  for (std::size_t i = 0; i < kernels.size(); ++i) r += (kernels[i] - 1) * dilations[i];
  return {r, r * voxel_edge};
}

inline ReceptiveField effective_receptive_field(const SFMConfig& cfg, double voxel_edge = 0.0) {
  return effective_receptive_field(cfg.kernels, cfg.dilations, voxel_edge);
}

/// Chebyshev radius (r - 1) / 2 of the level-L receptive field.
inline int erf_radius(const SFMConfig& cfg) { return (effective_receptive_field(cfg).voxels - 1) / 2; }

}  // namespace focalvox::sfm
