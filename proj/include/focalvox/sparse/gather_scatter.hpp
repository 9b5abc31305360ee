// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <vector>

#include "focalvox/core/dense.hpp"
#include "focalvox/core/parallel.hpp"
#include "focalvox/sparse/rulebook.hpp"

namespace focalvox {

namespace detail {
template <int D, typename T>
void check_conv_shapes(const Dense<T>& features, std::size_t n_in, std::size_t slots,
                       const Dense<T>& weights, std::size_t cout) {
  require(features.rows() == n_in, Errc::ShapeMismatch,
          "feature rows " + std::to_string(features.rows()) + " != rulebook inputs " +
              std::to_string(n_in));
  require(weights.rows() == slots * features.cols(), Errc::ShapeMismatch,
          "weights " + weights.shape_string() + " do not match " + std::to_string(slots) +
              " offsets x " + std::to_string(features.cols()) + " input channels");
  require(weights.cols() == cout, Errc::ShapeMismatch, "output channel mismatch");
}
}  // namespace detail

/// out[j] = bias + sum over (slot, i) of features[i] * W_slot, summed per
/// output row in slot order. Weights are offset-major: row slot*Cin + c.
/// Each output row is owned by one worker, so the result is bitwise
/// independent of the worker count.
template <typename T, int D>
Dense<T> gather_scatter_matmul(const Dense<T>& features, const Rulebook<D>& rb,
                               const Dense<T>& weights, const Dense<T>& bias) {
  const std::size_t cin = features.cols();
  const std::size_t cout = bias.cols();
  require(bias.rows() == 1, Errc::ShapeMismatch, "bias must be 1 x Cout");
  detail::check_conv_shapes<D>(features, rb.n_in(), rb.offsets.size(), weights, cout);

  Dense<T> out(rb.n_out(), cout);
  parallel_for(rb.n_out(), 64, [&](std::size_t begin, std::size_t end) {
    std::vector<Accum<T>> acc(cout);
    for (std::size_t j = begin; j < end; ++j) {
      for (std::size_t c = 0; c < cout; ++c) acc[c] = bias[c];
      for (std::size_t e = rb.out_begin[j]; e < rb.out_begin[j + 1]; ++e) {
        const SlotRow& sr = rb.by_output[e];
        const T* x = features.row(static_cast<std::size_t>(sr.row)).data();
        const T* w = weights.data() + static_cast<std::size_t>(sr.slot) * cin * cout;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const Accum<T> xv = x[ci];
          const T* wrow = w + ci * cout;
          for (std::size_t c = 0; c < cout; ++c) acc[c] += xv * wrow[c];
        }
      }
      for (std::size_t c = 0; c < cout; ++c) out(j, c) = static_cast<T>(acc[c]);
    }
  });
  return out;
}

template <typename T>
struct ConvGrads {
  Dense<T> features;
  Dense<T> weights;
  Dense<T> bias;
};

/// Vector-Jacobian product of gather_scatter_matmul.
///   d features[i] = sum_(slot, j) cot[j] * W_slot^T   (per input row, slot order)
///   d W_slot      = sum_(i, j) x[i]^T cot[j]           (per slot, rulebook order)
///   d bias        = sum_j cot[j]
template <typename T, int D>
ConvGrads<T> gather_scatter_vjp(const Dense<T>& cotangent, const Dense<T>& features,
                                const Rulebook<D>& rb, const Dense<T>& weights) {
  const std::size_t cin = features.cols();
  const std::size_t cout = cotangent.cols();
  const std::size_t slots = rb.offsets.size();
  require(cotangent.rows() == rb.n_out(), Errc::ShapeMismatch,
          "cotangent rows " + std::to_string(cotangent.rows()) + " != rulebook outputs " +
              std::to_string(rb.n_out()));
  detail::check_conv_shapes<D>(features, rb.n_in(), slots, weights, cout);

  ConvGrads<T> g{Dense<T>(rb.n_in(), cin), Dense<T>(slots * cin, cout), Dense<T>(1, cout)};

  parallel_for(rb.n_in(), 64, [&](std::size_t begin, std::size_t end) {
    std::vector<Accum<T>> acc(cin);
    for (std::size_t i = begin; i < end; ++i) {
      std::fill(acc.begin(), acc.end(), Accum<T>(0));
      for (std::size_t e = rb.in_begin[i]; e < rb.in_begin[i + 1]; ++e) {
        const SlotRow& sr = rb.by_input[e];
        const T* ct = cotangent.row(static_cast<std::size_t>(sr.row)).data();
        const T* w = weights.data() + static_cast<std::size_t>(sr.slot) * cin * cout;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T* wrow = w + ci * cout;
          Accum<T> s = 0;
          for (std::size_t c = 0; c < cout; ++c) s += Accum<T>(ct[c]) * wrow[c];
          acc[ci] += s;
        }
      }
      for (std::size_t ci = 0; ci < cin; ++ci) g.features(i, ci) = static_cast<T>(acc[ci]);
    }
  });

  parallel_for(slots, 1, [&](std::size_t begin, std::size_t end) {
    std::vector<Accum<T>> acc(cin * cout);
    for (std::size_t s = begin; s < end; ++s) {
      if (rb.pairs[s].empty()) continue;
      std::fill(acc.begin(), acc.end(), Accum<T>(0));
      for (const RulePair& p : rb.pairs[s]) {
        const T* x = features.row(static_cast<std::size_t>(p.in)).data();
        const T* ct = cotangent.row(static_cast<std::size_t>(p.out)).data();
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const Accum<T> xv = x[ci];
          if (xv == 0) continue;
          Accum<T>* a = acc.data() + ci * cout;
          for (std::size_t c = 0; c < cout; ++c) a[c] += xv * ct[c];
        }
      }
      T* w = g.weights.data() + s * cin * cout;
      for (std::size_t k = 0; k < cin * cout; ++k) w[k] = static_cast<T>(acc[k]);
    }
  });

  std::vector<Accum<T>> b(cout, 0);
  for (std::size_t j = 0; j < cotangent.rows(); ++j)
    for (std::size_t c = 0; c < cout; ++c) b[c] += cotangent(j, c);
  for (std::size_t c = 0; c < cout; ++c) g.bias[c] = static_cast<T>(b[c]);
  return g;
}

}  // namespace focalvox
