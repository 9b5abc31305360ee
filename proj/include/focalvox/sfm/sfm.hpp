// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <string>
#include <vector>

#include "focalvox/conv/sparse_conv.hpp"
#include "focalvox/nn/context.hpp"
#include "focalvox/sfm/config.hpp"

// Sparse focal modulation. For input x (N x C):
//   [q | f0 | g] = x * W_in + b_in            (C -> 2C + L, fixed split order)
//   f_l = GeLU(SubMConv(f_{l-1}; k_l, d_l))   l = 1..L, same active set
//   ctx = h(sum_l f_l * g_l)                  g_l one scalar per voxel
//   z   = q * ctx                             elementwise
// Parameter names under a module prefix p:
//   p.in_proj.{weight,bias}  p.level<l>.{weight,bias}  p.h.{weight,bias}

namespace focalvox::sfm {

using nn::Context;
using nn::SparseVar;
using nn::Var;

template <int D>
KernelSpec<D> level_spec(const SFMConfig& cfg, std::size_t level) {
  return KernelSpec<D>::cube(cfg.kernels[level], cfg.dilations[level], 1);
}

template <int D>
int kernel_volume(int k) {
  int v = 1;
  for (int d = 0; d < D; ++d) v *= k;
  return v;
}

template <int D>
void declare_sfm_module(nn::ParamSpecList& out, const std::string& prefix, const SFMConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels, l = cfg.levels();
  nn::declare_linear(out, prefix + ".in_proj", c, 2 * c + l);
  for (std::size_t i = 0; i < l; ++i)
    nn::declare_conv(out, prefix + ".level" + std::to_string(i + 1),
                     static_cast<std::size_t>(kernel_volume<D>(cfg.kernels[i])), c, c);
  nn::declare_linear(out, prefix + ".h", c, c);
}

template <int D>
void declare_sfm_block(nn::ParamSpecList& out, const std::string& prefix, const SFMConfig& cfg) {
  declare_sfm_module<D>(out, prefix + ".mixer", cfg);
  nn::declare_layer_norm(out, prefix + ".norm1", cfg.channels);
  nn::declare_mlp(out, prefix + ".mlp", cfg.channels, nn::mlp_hidden(cfg.channels, cfg.mlp_ratio));
  nn::declare_layer_norm(out, prefix + ".norm2", cfg.channels);
}

template <int D>
void declare_srb_block(nn::ParamSpecList& out, const std::string& prefix, std::size_t channels) {
  const auto vol = static_cast<std::size_t>(kernel_volume<D>(3));
  nn::declare_conv(out, prefix + ".conv1", vol, channels, channels);
  nn::declare_batch_norm(out, prefix + ".bn1", channels);
  nn::declare_conv(out, prefix + ".conv2", vol, channels, channels);
  nn::declare_batch_norm(out, prefix + ".bn2", channels);
}

struct Projection {
  Var q;
  Var f0;
  Var gates;  // N x L, after the configured gate activation
};

template <typename T>
Projection input_projection(Context<T>& ctx, const std::string& prefix, const SFMConfig& cfg, Var x) {
  const std::size_t c = cfg.channels, l = cfg.levels();
  require(ctx.tape().value(x).cols() == c, Errc::ShapeMismatch,
          "SFM input has " + std::to_string(ctx.tape().value(x).cols()) + " channels, expected " +
              std::to_string(c));
  Var proj = nn::linear(ctx, prefix + ".in_proj", x);
  auto& tape = ctx.tape();
  Projection p{nn::slice_cols(tape, proj, 0, c), nn::slice_cols(tape, proj, c, 2 * c),
               nn::slice_cols(tape, proj, 2 * c, 2 * c + l)};
  switch (cfg.gate) {
    case GateMode::Raw: break;
    case GateMode::Sigmoid: p.gates = nn::sigmoid(tape, p.gates); break;
    case GateMode::Softmax: p.gates = nn::softmax_rows(tape, p.gates); break;
  }
  return p;
}

/// f_1 .. f_L, all on the active set of f0.
template <typename T, int D>
std::vector<Var> context_levels(Context<T>& ctx, const std::string& prefix, const SFMConfig& cfg,
                                const SparseVar<D>& f0) {
  std::vector<Var> levels;
  SparseVar<D> f = f0;
  for (std::size_t l = 0; l < cfg.levels(); ++l) {
    SparseVar<D> conv = nn::subm_conv<T, D>(ctx, prefix + ".level" + std::to_string(l + 1), f, level_spec<D>(cfg, l));
    f = {f.active, nn::gelu(ctx.tape(), conv.features)};
    levels.push_back(f.features);
  }
  return levels;
}

/// ctx = h(sum_l f_l * g_l).
template <typename T>
Var aggregate_context(Context<T>& ctx, const std::string& prefix, const std::vector<Var>& levels, Var gates) {
  auto& tape = ctx.tape();
  require(levels.size() == tape.value(gates).cols(), Errc::ShapeMismatch, "one gate column per level");
  require(!levels.empty(), Errc::ShapeMismatch, "aggregate_context needs at least one level");
  Var sum = nn::scale_rows(tape, levels[0], gates, 0);
  for (std::size_t l = 1; l < levels.size(); ++l) sum = nn::add(tape, sum, nn::scale_rows(tape, levels[l], gates, l));
  if (ctx.counter) ctx.counter->gate += tape.value(gates).rows() * levels.size();
  return nn::linear(ctx, prefix + ".h", sum);
}

template <typename T>
Var modulate(Context<T>& ctx, Var q, Var context) {
  if (ctx.counter) ctx.counter->modulation += ctx.tape().value(q).rows();
  return nn::mul(ctx.tape(), q, context);
}

template <typename T, int D>
SparseVar<D> sfm_module(Context<T>& ctx, const std::string& prefix, const SFMConfig& cfg, const SparseVar<D>& x) {
  Projection p = input_projection(ctx, prefix, cfg, x.features);
  std::vector<Var> levels = context_levels<T, D>(ctx, prefix, cfg, SparseVar<D>{x.active, p.f0});
  Var context = aggregate_context(ctx, prefix, levels, p.gates);
  return {x.active, modulate(ctx, p.q, context)};
}

/// y' = LN(z) + x;  y = LN(MLP(y')) + y'.
template <typename T, int D>
SparseVar<D> sfm_block(Context<T>& ctx, const std::string& prefix, const SFMConfig& cfg, const SparseVar<D>& x) {
  auto& tape = ctx.tape();
  SparseVar<D> z = sfm_module<T, D>(ctx, prefix + ".mixer", cfg, x);
  Var y1 = nn::add(tape, nn::layer_norm(ctx, prefix + ".norm1", z.features), x.features);
  Var m = nn::mlp_block(ctx, prefix + ".mlp", y1);
  Var y = nn::add(tape, nn::layer_norm(ctx, prefix + ".norm2", m), y1);
  return {x.active, y};
}

/// relu(bn2(conv2(relu(bn1(conv1(x))))) + x), 3^D kernels, dilation 1.
template <typename T, int D>
SparseVar<D> srb_block(Context<T>& ctx, const std::string& prefix, const SparseVar<D>& x) {
  auto& tape = ctx.tape();
  const auto spec = KernelSpec<D>::cube(3, 1, 1);
  SparseVar<D> h = nn::subm_conv<T, D>(ctx, prefix + ".conv1", x, spec);
  Var a = nn::relu(tape, nn::batch_norm(ctx, prefix + ".bn1", h.features));
  SparseVar<D> h2 = nn::subm_conv<T, D>(ctx, prefix + ".conv2", SparseVar<D>{x.active, a}, spec);
  Var b = nn::batch_norm(ctx, prefix + ".bn2", h2.features);
  return {x.active, nn::relu(tape, nn::add(tape, b, x.features))};
}

/// Tape-free evaluation of an SFM module over a plain sparse tensor.
template <typename T, int D>
SparseTensor<T, D> sfm_module(const SparseTensor<T, D>& x, const SFMConfig& cfg,
                              const nn::ParamStore<T>& store, const std::string& prefix) {
  nn::GradTape<T> tape(false);
  Context<T> ctx(tape, store);
  return ctx.output(sfm_module<T, D>(ctx, prefix, cfg, ctx.input(x)));
}

}  // namespace focalvox::sfm
