// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <memory>
#include <string>

#include "focalvox/nn/context.hpp"
#include "focalvox/sparse/gather_scatter.hpp"
#include "focalvox/sparse/rulebook.hpp"

namespace focalvox {

/// Sparse convolution layer. Weights are offset-major: (volume * Cin) x Cout,
/// slot s occupying rows [s*Cin, (s+1)*Cin).
template <typename T, int D>
struct SparseConvLayer {
  KernelSpec<D> spec;
  ConvKind kind = ConvKind::Submanifold;
  Dense<T> weights;
  Dense<T> bias;  // 1 x Cout

  std::size_t in_channels() const {
    return spec.volume() == 0 ? 0 : weights.rows() / static_cast<std::size_t>(spec.volume());
  }
  std::size_t out_channels() const { return weights.cols(); }

  void validate() const {
    spec.validate();
    if (kind == ConvKind::Submanifold)
      require(spec.unit_stride(), Errc::InvalidSpec, "submanifold layer requires stride 1");
    require(weights.rows() % static_cast<std::size_t>(spec.volume()) == 0, Errc::ShapeMismatch,
            "weight rows must be a multiple of the kernel volume");
    require(bias.rows() == 1 && bias.cols() == weights.cols(), Errc::ShapeMismatch, "bias shape");
  }

  static SparseConvLayer zeros(const KernelSpec<D>& spec, ConvKind kind, std::size_t cin, std::size_t cout) {
    return {spec, kind, Dense<T>(static_cast<std::size_t>(spec.volume()) * cin, cout), Dense<T>(1, cout)};
  }
};

/// Saved forward state needed by conv_vjp.
template <typename T, int D>
struct ConvRecord {
  std::shared_ptr<const Rulebook<D>> rulebook;
  Dense<T> input;
  Dense<T> weights;
};

template <typename T, int D>
SparseTensor<T, D> subm_conv(const SparseTensor<T, D>& t, const SparseConvLayer<T, D>& layer,
                             ConvRecord<T, D>* record = nullptr) {
  layer.validate();
  require(layer.kind == ConvKind::Submanifold, Errc::InvalidSpec, "subm_conv needs a submanifold layer");
  require(t.channels() == layer.in_channels(), Errc::ShapeMismatch,
          "input has " + std::to_string(t.channels()) + " channels, layer expects " +
              std::to_string(layer.in_channels()));
  auto rb = std::make_shared<const Rulebook<D>>(build_rulebook_submanifold(t, layer.spec));
  Dense<T> out = gather_scatter_matmul(t.features, *rb, layer.weights, layer.bias);
  if (record) *record = {rb, t.features, layer.weights};
  return {t.coords, std::move(out), t.spatial_shape};
}

/// Regular sparse convolution (typically k=3, s=2, p=1 for downsampling).
template <typename T, int D>
SparseTensor<T, D> regular_conv_down(const SparseTensor<T, D>& t, const SparseConvLayer<T, D>& layer,
                                     ConvRecord<T, D>* record = nullptr) {
  layer.validate();
  require(layer.kind == ConvKind::Regular, Errc::InvalidSpec, "regular_conv_down needs a regular layer");
  require(t.channels() == layer.in_channels() || t.size() == 0, Errc::ShapeMismatch,
          "input channel mismatch");
  Extent<D> out_shape = layer.spec.output_shape(t.spatial_shape);
  auto rb = std::make_shared<const Rulebook<D>>(build_rulebook_regular(t, layer.spec, out_shape));
  Dense<T> feats = t.size() == 0 ? Dense<T>(0, layer.in_channels()) : t.features;
  Dense<T> out = gather_scatter_matmul(feats, *rb, layer.weights, layer.bias);
  if (record) *record = {rb, feats, layer.weights};
  return {rb->out_coords(), std::move(out), out_shape};
}

template <typename T, int D>
ConvGrads<T> conv_vjp(const Dense<T>& cotangent, const ConvRecord<T, D>& record) {
  require(record.rulebook != nullptr, Errc::ShapeMismatch, "conv_vjp without a forward record");
  return gather_scatter_vjp(cotangent, record.input, *record.rulebook, record.weights);
}

namespace nn {

/// Tape op: features of `x` convolved through `rb` with weight/bias leaves.
template <typename T, int D>
Var sparse_conv(GradTape<T>& tape, Var x, std::shared_ptr<const Rulebook<D>> rb, Var w, Var b,
                InteractionCounter* counter = nullptr) {
  if (counter) counter->conv_pairs += rb->pair_count();
  Dense<T> out = gather_scatter_matmul(tape.value(x), *rb, tape.value(w), tape.value(b));
  return tape.push(std::move(out), [x, rb, w, b](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    auto grads = gather_scatter_vjp(g, t.value(x), *rb, t.value(w));
    acc.accumulate(x, std::move(grads.features));
    acc.accumulate(w, std::move(grads.weights));
    acc.accumulate(b, std::move(grads.bias));
  });
}

/// Submanifold conv reading "<prefix>.weight" / "<prefix>.bias".
template <typename T, int D>
SparseVar<D> subm_conv(Context<T>& ctx, const std::string& prefix, const SparseVar<D>& x,
                       const KernelSpec<D>& spec) {
  auto rb = ctx.template submanifold_rulebook<D>(x.active, spec);
  Var out = sparse_conv<T, D>(ctx.tape(), x.features, rb, ctx.param(prefix + ".weight"),
                              ctx.param(prefix + ".bias"), ctx.counter);
  return {x.active, out};
}

/// Regular conv reading "<prefix>.weight" / "<prefix>.bias"; changes the active set.
template <typename T, int D>
SparseVar<D> regular_conv(Context<T>& ctx, const std::string& prefix, const SparseVar<D>& x,
                          const KernelSpec<D>& spec) {
  Extent<D> out_shape = spec.output_shape(x.active->shape());
  auto rb = std::make_shared<const Rulebook<D>>(build_rulebook_regular<D>(x.active, spec, out_shape));
  Var out = sparse_conv<T, D>(ctx.tape(), x.features, rb, ctx.param(prefix + ".weight"),
                              ctx.param(prefix + ".bias"), ctx.counter);
  return {rb->out, out};
}

}  // namespace nn
}  // namespace focalvox
