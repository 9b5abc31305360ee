// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "focalvox/io/voxelizer.hpp"
#include "focalvox/sfm/config.hpp"

namespace focalvox::backbone {

enum class Precision { Standard32, Check64 };

inline std::string to_string(Precision p) { return p == Precision::Standard32 ? "standard32" : "check64"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "standard32") return Precision::Standard32;
  if (s == "check64") return Precision::Check64;
  fail(Errc::ConfigError, "precision must be standard32 or check64, got '" + s + "'");
}

/// One resolution level. With n_sfm > 0 every SFM block is followed by n_srb
/// SRBs; with n_sfm = 0 the stage is n_srb SRBs.
struct StageConfig {
  std::size_t n_sfm = 1;
  std::size_t n_srb = 1;
  std::size_t channels = 16;
  std::vector<int> kernels{3, 3};
  std::vector<int> dilations{1, 2};
  double mlp_ratio = 2.0;
  sfm::GateMode gate = sfm::GateMode::Raw;

  sfm::SFMConfig sfm() const {
    sfm::SFMConfig c;
    c.kernels = kernels;
    c.dilations = dilations;
    c.channels = channels;
    c.mlp_ratio = mlp_ratio;
    c.gate = gate;
    return c;
  }

  std::size_t block_count() const { return n_sfm == 0 ? n_srb : n_sfm * (1 + n_srb); }

  void validate(const std::string& where) const {
    require(block_count() >= 1, Errc::ConfigError, where + " has no blocks");
    require(channels >= 1, Errc::ConfigError, where + " channels must be positive");
    if (n_sfm > 0) {
      try {
        sfm().validate();
      } catch (const Error& e) {
        fail(Errc::ConfigError, where + ": " + e.what());
      }
    }
  }

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct NetworkConfig {
  io::VoxelizerConfig voxelizer;
  std::array<StageConfig, 4> stages;
  std::array<std::size_t, 3> downsample_channels{};
  std::size_t bev_channels = 128;
  StageConfig backbone2d;
  Precision precision = Precision::Standard32;
  std::uint64_t seed = 0;

  void validate() const {
    voxelizer.validate();
    require(stages[0].channels == voxelizer.out_channels, Errc::ConfigError,
            "stage 1 channels must equal voxelizer out_channels");
    for (std::size_t s = 0; s < 4; ++s) stages[s].validate("stage " + std::to_string(s + 1));
    for (std::size_t s = 0; s < 3; ++s)
      require(downsample_channels[s] == stages[s + 1].channels, Errc::ConfigError,
              "downsample " + std::to_string(s + 1) + " must produce stage " + std::to_string(s + 2) + " channels");
    backbone2d.validate("backbone2d");
    require(backbone2d.channels == bev_channels, Errc::ConfigError, "backbone2d channels must equal bev channels");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Desk-scale network: 64 x 64 x 16 grid at 0.2 m, widths 16/32/64/128.
inline NetworkConfig tiny_preset() {
  NetworkConfig cfg;
  cfg.voxelizer = {{0.2, 0.2, 0.2}, {0, 0, 0}, {12.8, 12.8, 3.2}, 16};
  const std::size_t widths[4] = {16, 32, 64, 128};
  for (std::size_t s = 0; s < 4; ++s) {
    cfg.stages[s] = StageConfig{s == 0 ? 0u : 1u, 1, widths[s], {3, 3}, {1, 2}, 2.0, sfm::GateMode::Raw};
  }
  cfg.downsample_channels = {32, 64, 128};
  cfg.bev_channels = 128;
  cfg.backbone2d = StageConfig{1, 1, 128, {3, 3}, {1, 2}, 2.0, sfm::GateMode::Raw};
  return cfg;
}

/// Block counts and focal settings of the large-scale Argoverse2 model.
inline NetworkConfig argoverse2_like_preset() {
  NetworkConfig cfg;
  cfg.voxelizer = {{0.1, 0.1, 0.2}, {-51.2, -51.2, -3.0}, {51.2, 51.2, 3.0}, 32};
  const std::size_t widths[4] = {32, 64, 128, 256};
  const std::size_t n_sfm[4] = {0, 1, 1, 4};
  const std::size_t n_srb[4] = {2, 2, 4, 2};
  for (std::size_t s = 0; s < 4; ++s)
    cfg.stages[s] = StageConfig{n_sfm[s], n_srb[s], widths[s], {3, 3, 3, 3}, {1, 3, 5, 7}, 2.0, sfm::GateMode::Raw};
  cfg.downsample_channels = {64, 128, 256};
  cfg.bev_channels = 256;
  cfg.backbone2d = StageConfig{2, 4, 256, {3, 3, 3, 3}, {1, 3, 5, 7}, 2.0, sfm::GateMode::Raw};
  return cfg;
}

/// Waymo-style voxels (0.08, 0.08, 0.15) with kernels (3,5,3,5), dilations (1,1,3,3).
inline NetworkConfig waymo_like_preset() {
  NetworkConfig cfg;
  cfg.voxelizer = {{0.08, 0.08, 0.15}, {-74.88, -74.88, -2.0}, {74.88, 74.88, 4.0}, 32};
  const std::size_t widths[4] = {32, 64, 128, 256};
  const std::size_t n_sfm[4] = {0, 1, 1, 2};
  const std::size_t n_srb[4] = {2, 2, 4, 6};
  for (std::size_t s = 0; s < 4; ++s)
    cfg.stages[s] = StageConfig{n_sfm[s], n_srb[s], widths[s], {3, 5, 3, 5}, {1, 1, 3, 3}, 2.0, sfm::GateMode::Raw};
  cfg.downsample_channels = {64, 128, 256};
  cfg.bev_channels = 256;
  cfg.backbone2d = StageConfig{2, 6, 256, {3, 5, 3, 5}, {1, 1, 3, 3}, 2.0, sfm::GateMode::Raw};
  return cfg;
}

inline NetworkConfig preset(const std::string& name) {
  if (name == "tiny") return tiny_preset();
  if (name == "argoverse2-like") return argoverse2_like_preset();
  if (name == "waymo-like") return waymo_like_preset();
  fail(Errc::ConfigError, "unknown preset '" + name + "' (tiny, argoverse2-like, waymo-like)");
}

}  // namespace focalvox::backbone
