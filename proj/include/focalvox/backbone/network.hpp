// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "focalvox/backbone/config.hpp"
#include "focalvox/sfm/sfm.hpp"

// Parameter layout of the network (s = 1..4, i/m 1-based within a stage):
//   vfe                        linear 4 -> C1, ReLU
//   stage<s>.sfm<i>            SFM block
//   stage<s>.srb<m>            SRB, numbered across the stage
//   down<s>.conv / down<s>.bn  stride-2 regular conv + BN + ReLU, stage s -> s+1
//   bev.linear / bev.norm      column sum -> linear -> LN
//   bev2d.sfm<i> / bev2d.srb<m>
//   head                       linear C_bev -> 3 probe logits per BEV cell

namespace focalvox::backbone {

using nn::Context;
using nn::SparseVar;
using nn::Var;

inline constexpr std::size_t kProbeLogits = 3;

template <int D>
void declare_stage(nn::ParamSpecList& out, const std::string& prefix, const StageConfig& cfg) {
  std::size_t srb = 0;
  auto add_srbs = [&] {
    for (std::size_t m = 0; m < cfg.n_srb; ++m)
      sfm::declare_srb_block<D>(out, prefix + ".srb" + std::to_string(++srb), cfg.channels);
  };
  if (cfg.n_sfm == 0) add_srbs();
  for (std::size_t i = 0; i < cfg.n_sfm; ++i) {
    sfm::declare_sfm_block<D>(out, prefix + ".sfm" + std::to_string(i + 1), cfg.sfm());
    add_srbs();
  }
}

/// [sfm_block, srb x n_srb] x n_sfm, or n_srb SRBs when n_sfm = 0. The active set never changes.
template <typename T, int D>
SparseVar<D> run_stage(Context<T>& ctx, const std::string& prefix, const StageConfig& cfg, SparseVar<D> x) {
  std::size_t srb = 0;
  auto run_srbs = [&] {
    for (std::size_t m = 0; m < cfg.n_srb; ++m)
      x = sfm::srb_block<T, D>(ctx, prefix + ".srb" + std::to_string(++srb), x);
  };
  if (cfg.n_sfm == 0) run_srbs();
  for (std::size_t i = 0; i < cfg.n_sfm; ++i) {
    x = sfm::sfm_block<T, D>(ctx, prefix + ".sfm" + std::to_string(i + 1), cfg.sfm(), x);
    run_srbs();
  }
  return x;
}

inline void declare_downsample(nn::ParamSpecList& out, const std::string& prefix, std::size_t cin, std::size_t cout) {
  nn::declare_conv(out, prefix + ".conv", 27, cin, cout);
  nn::declare_batch_norm(out, prefix + ".bn", cout);
}

inline KernelSpec<3> downsample_spec() { return KernelSpec<3>::cube(3, 1, 2); }

/// Regular conv k=3, s=2, p=1, then BN and ReLU.
template <typename T>
SparseVar<3> downsample(Context<T>& ctx, const std::string& prefix, const SparseVar<3>& x) {
  SparseVar<3> y = nn::regular_conv<T, 3>(ctx, prefix + ".conv", x, downsample_spec());
  return {y.active, nn::relu(ctx.tape(), nn::batch_norm(ctx, prefix + ".bn", y.features))};
}

inline void declare_bev(nn::ParamSpecList& out, const std::string& prefix, std::size_t cin, std::size_t cout) {
  nn::declare_linear(out, prefix + ".linear", cin, cout);
  nn::declare_layer_norm(out, prefix + ".norm", cout);
}

/// Collapses the height axis: features summed per (batch, x, y) column, then
/// linear and LayerNorm. Output cells are the distinct columns in sorted order.
template <typename T>
SparseVar<2> bev_compress(Context<T>& ctx, const std::string& prefix, const SparseVar<3>& x) {
  const auto& coords = x.active->coords();
  std::map<VoxelCoord<2>, std::int32_t> columns;
  for (const auto& c : coords) columns.emplace(VoxelCoord<2>{c.batch, {c.ijk[0], c.ijk[1]}}, 0);
  std::vector<VoxelCoord<2>> cells;
  cells.reserve(columns.size());
  for (auto& [cell, id] : columns) {
    id = static_cast<std::int32_t>(cells.size());
    cells.push_back(cell);
  }
  auto group = std::make_shared<std::vector<std::int32_t>>();
  group->reserve(coords.size());
  for (const auto& c : coords) group->push_back(columns.at(VoxelCoord<2>{c.batch, {c.ijk[0], c.ijk[1]}}));

  const Extent<3>& shape = x.active->shape();
  auto active = std::make_shared<const ActiveSet<2>>(std::move(cells), Extent<2>{shape[0], shape[1]});
  Var summed = nn::segment_sum(ctx.tape(), x.features, std::shared_ptr<const std::vector<std::int32_t>>(group),
                               active->size());
  Var projected = nn::linear(ctx, prefix + ".linear", summed);
  return {active, nn::layer_norm(ctx, prefix + ".norm", projected)};
}

inline nn::ParamSpecList declare_network(const NetworkConfig& cfg) {
  cfg.validate();
  nn::ParamSpecList out;
  nn::declare_linear(out, "vfe", io::kDecoratedFeatures, cfg.voxelizer.out_channels);
  for (std::size_t s = 0; s < 4; ++s) {
    declare_stage<3>(out, "stage" + std::to_string(s + 1), cfg.stages[s]);
    if (s < 3)
      declare_downsample(out, "down" + std::to_string(s + 1), cfg.stages[s].channels, cfg.downsample_channels[s]);
  }
  declare_bev(out, "bev", cfg.stages[3].channels, cfg.bev_channels);
  declare_stage<2>(out, "bev2d", cfg.backbone2d);
  nn::declare_linear(out, "head", cfg.bev_channels, kProbeLogits);
  return out;
}

/// Trainable scalar count (running statistics excluded).
inline std::size_t param_count(const NetworkConfig& cfg) { return nn::param_count(declare_network(cfg)); }

struct NetworkTrace {
  std::vector<SparseVar<3>> stages;  // output of each 3D stage
  SparseVar<2> bev;                  // after bev_compress
  SparseVar<2> bev2d;                // after the 2D stage
  Var logits;                        // probe head, one row per BEV cell
};

/// VFE, then stages 1..last_stage with a downsample between consecutive
/// stages; last_stage = 0 stops after the VFE. Each stage output is appended
/// to `stages` when given.
template <typename T>
SparseVar<3> encode_to_stage(Context<T>& ctx, const NetworkConfig& cfg, const SparseVar<3>& voxels,
                             std::size_t last_stage, std::vector<SparseVar<3>>* stages = nullptr) {
  require(last_stage <= 4, Errc::ConfigError, "there are 4 stages, asked for " + std::to_string(last_stage));
  SparseVar<3> x{voxels.active, nn::relu(ctx.tape(), nn::linear(ctx, "vfe", voxels.features))};
  for (std::size_t s = 0; s < last_stage; ++s) {
    if (s > 0) x = downsample(ctx, "down" + std::to_string(s), x);
    x = run_stage<T, 3>(ctx, "stage" + std::to_string(s + 1), cfg.stages[s], x);
    if (stages) stages->push_back(x);
  }
  return x;
}

/// VFE -> stage1..4 with downsampling -> BEV -> 2D stage -> probe head.
/// `voxels` carries the decorated per-voxel features from io::voxelize.
template <typename T>
NetworkTrace sfmnet_forward(Context<T>& ctx, const NetworkConfig& cfg, const SparseTensor<T, 3>& voxels) {
  require(voxels.size() > 0, Errc::EmptyScene, "scene has no active voxels");
  require(voxels.channels() == io::kDecoratedFeatures, Errc::ShapeMismatch, "expected decorated voxel features");
  NetworkTrace trace;
  SparseVar<3> x = encode_to_stage(ctx, cfg, ctx.input(voxels), 4, &trace.stages);
  trace.bev = bev_compress(ctx, "bev", x);
  trace.bev2d = run_stage<T, 2>(ctx, "bev2d", cfg.backbone2d, trace.bev);
  trace.logits = nn::linear(ctx, "head", trace.bev2d.features);
  return trace;
}

/// Scalar-level count of trainable parameters with a nonzero gradient.
/// Parameters never bound during the pass count as zero. With batch norm in
/// train mode, the bias of a conv feeding a BN layer has an analytically zero
/// gradient (the batch mean absorbs it); those tensors are counted as zero
/// whatever rounding noise the backward pass leaves in them.
struct GradientAudit {
  std::size_t total = 0;
  std::size_t nonzero = 0;
  std::vector<std::string> untouched;  // tensors whose gradient is entirely zero or absent
  std::vector<std::string> shadowed;   // conv biases cancelled by a following train-mode BN

  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(nonzero) / static_cast<double>(total); }
};

/// "p.conv<k>.bias" followed by "p.bn<k>", and "p.conv.bias" followed by "p.bn".
template <typename T>
bool feeds_batch_norm(const nn::ParamStore<T>& store, const std::string& name) {
  const std::string suffix = ".bias";
  if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) return false;
  std::string layer = name.substr(0, name.size() - suffix.size());
  auto dot = layer.rfind('.');
  std::string leaf = layer.substr(dot == std::string::npos ? 0 : dot + 1);
  if (leaf.rfind("conv", 0) != 0) return false;
  std::string bn = layer.substr(0, dot == std::string::npos ? 0 : dot + 1) + "bn" + leaf.substr(4);
  return store.contains(bn + ".weight");
}

template <typename T>
GradientAudit audit_gradients(const Context<T>& ctx, const nn::Gradients<T>& grads) {
  GradientAudit audit;
  const auto bound = ctx.param_grads(grads);
  for (const auto& [name, rec] : ctx.store().entries()) {
    if (rec.kind != nn::ParamKind::Parameter) continue;
    audit.total += rec.numel();
    if (ctx.bn_mode() == nn::BnMode::Train && feeds_batch_norm(ctx.store(), name)) {
      audit.shadowed.push_back(name);
      continue;
    }
    auto it = bound.find(name);
    std::size_t nz = 0;
    if (it != bound.end() && it->second != nullptr)
      for (const T& g : it->second->values()) nz += g != T(0);
    audit.nonzero += nz;
    if (nz == 0) audit.untouched.push_back(name);
  }
  return audit;
}

template <typename T>
struct ForwardResult {
  SparseTensor<T, 2> bev;
  Dense<T> logits;
};

/// Inference from a point cloud with fixed weights (batch-norm in eval mode).
template <typename T>
ForwardResult<T> sfmnet_forward(const io::PointCloud& cloud, const NetworkConfig& cfg, const nn::ParamStore<T>& store) {
  cfg.validate();
  auto voxels = io::voxelize(cloud, cfg.voxelizer);
  SparseTensor<T, 3> input{voxels.coords, voxels.features.template cast<T>(), voxels.spatial_shape};
  nn::GradTape<T> tape(false);
  Context<T> ctx(tape, store);
  NetworkTrace trace = sfmnet_forward(ctx, cfg, input);
  return {ctx.output(trace.bev2d), tape.value(trace.logits)};
}

}  // namespace focalvox::backbone
