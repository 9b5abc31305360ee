// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "focalvox/nn/ops.hpp"
#include "focalvox/nn/tape.hpp"

// Tape-recorded versions of the primitives. Each op evaluates the pure
// forward, pushes the result, and registers the matching VJP.

namespace focalvox::nn {

template <typename T>
Var linear(GradTape<T>& tape, Var x, Var w, Var b) {
  Dense<T> out = linear(tape.value(x), tape.value(w), tape.value(b));
  return tape.push(std::move(out), [x, w, b](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    auto grads = linear_vjp(t.value(x), t.value(w), g);
    acc.accumulate(x, std::move(grads.x));
    acc.accumulate(w, std::move(grads.w));
    acc.accumulate(b, std::move(grads.b));
  });
}

template <typename T>
Var add(GradTape<T>& tape, Var a, Var b) {
  Dense<T> out = tape.value(a);
  out += tape.value(b);
  return tape.push(std::move(out), [a, b](const GradTape<T>&, const Dense<T>& g, Gradients<T>& acc) {
    acc.accumulate(a, g);
    acc.accumulate(b, g);
  });
}

/// Elementwise product.
template <typename T>
Var mul(GradTape<T>& tape, Var a, Var b) {
  const Dense<T>& av = tape.value(a);
  const Dense<T>& bv = tape.value(b);
  require(av.same_shape(bv), Errc::ShapeMismatch, "mul " + av.shape_string() + " vs " + bv.shape_string());
  Dense<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.push(std::move(out), [a, b](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& av = t.value(a);
    const Dense<T>& bv = t.value(b);
    Dense<T> ga(g.rows(), g.cols()), gb(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bv[i];
      gb[i] = g[i] * av[i];
    }
    acc.accumulate(a, std::move(ga));
    acc.accumulate(b, std::move(gb));
  });
}

template <typename T>
Var gelu(GradTape<T>& tape, Var x) {
  return tape.push(gelu(tape.value(x)), [x](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& xv = t.value(x);
    Dense<T> gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * gelu_grad(xv[i]);
    acc.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var relu(GradTape<T>& tape, Var x) {
  return tape.push(relu(tape.value(x)), [x](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& xv = t.value(x);
    Dense<T> gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = xv[i] > T(0) ? g[i] : T(0);
    acc.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var layer_norm(GradTape<T>& tape, Var x, Var gain, Var bias, double eps = kNormEps) {
  auto fwd = std::make_shared<NormResult<T>>(layer_norm(tape.value(x), tape.value(gain), tape.value(bias), eps));
  Dense<T> out = fwd->out;
  if (!tape.recording()) return tape.push(std::move(out), nullptr);
  fwd->out = Dense<T>();
  return tape.push(std::move(out), [x, gain, bias, fwd](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    auto grads = layer_norm_vjp(*fwd, t.value(gain), g);
    acc.accumulate(x, std::move(grads.x));
    acc.accumulate(gain, std::move(grads.gain));
    acc.accumulate(bias, std::move(grads.bias));
  });
}

/// Batch norm over the rows of x. In train mode the updated running
/// statistics are written to *updated when it is non-null.
template <typename T>
Var batch_norm(GradTape<T>& tape, Var x, Var gain, Var bias, BnMode mode,
               const RunningStats<T>& running, RunningStats<T>* updated = nullptr,
               double eps = kNormEps) {
  auto res = batch_norm_active(tape.value(x), tape.value(gain), tape.value(bias), mode, running, eps);
  if (updated) *updated = res.running;
  Dense<T> out = std::move(res.norm.out);
  if (!tape.recording()) return tape.push(std::move(out), nullptr);
  auto fwd = std::make_shared<NormResult<T>>(std::move(res.norm));
  return tape.push(std::move(out), [x, gain, bias, mode, fwd](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    auto grads = batch_norm_vjp(*fwd, t.value(gain), mode, g);
    acc.accumulate(x, std::move(grads.x));
    acc.accumulate(gain, std::move(grads.gain));
    acc.accumulate(bias, std::move(grads.bias));
  });
}

template <typename T>
Var sigmoid(GradTape<T>& tape, Var x) {
  const Dense<T>& xv = tape.value(x);
  Dense<T> out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(xv[i]))));
  auto saved = std::make_shared<Dense<T>>(out);
  return tape.push(std::move(out), [x, saved](const GradTape<T>&, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& s = *saved;
    Dense<T> gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * s[i] * (T(1) - s[i]);
    acc.accumulate(x, std::move(gx));
  });
}

/// Softmax over the columns of each row.
template <typename T>
Var softmax_rows(GradTape<T>& tape, Var x) {
  const Dense<T>& xv = tape.value(x);
  Dense<T> out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < xv.cols(); ++c) mx = std::max(mx, static_cast<double>(xv(r, c)));
    double z = 0;
    for (std::size_t c = 0; c < xv.cols(); ++c) z += std::exp(static_cast<double>(xv(r, c)) - mx);
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) = static_cast<T>(std::exp(static_cast<double>(xv(r, c)) - mx) / z);
  }
  auto saved = std::make_shared<Dense<T>>(out);
  return tape.push(std::move(out), [x, saved](const GradTape<T>&, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& p = *saved;
    Dense<T> gx(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      Accum<T> dot = 0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += Accum<T>(g(r, c)) * p(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) = static_cast<T>(p(r, c) * (g(r, c) - dot));
    }
    acc.accumulate(x, std::move(gx));
  });
}

/// Columns [begin, end) of x.
template <typename T>
Var slice_cols(GradTape<T>& tape, Var x, std::size_t begin, std::size_t end) {
  const Dense<T>& xv = tape.value(x);
  require(begin <= end && end <= xv.cols(), Errc::ShapeMismatch, "slice_cols out of range");
  Dense<T> out(xv.rows(), end - begin);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = xv(r, c);
  const std::size_t cols = xv.cols();
  return tape.push(std::move(out), [x, begin, cols](const GradTape<T>&, const Dense<T>& g, Gradients<T>& acc) {
    Dense<T> gx(g.rows(), cols);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) = g(r, c);
    acc.accumulate(x, std::move(gx));
  });
}

/// out[i, :] = f[i, :] * s[i, col]: one scalar per row taken from column col of s.
template <typename T>
Var scale_rows(GradTape<T>& tape, Var f, Var s, std::size_t col) {
  const Dense<T>& fv = tape.value(f);
  const Dense<T>& sv = tape.value(s);
  require(fv.rows() == sv.rows() && col < sv.cols(), Errc::ShapeMismatch, "scale_rows shape");
  Dense<T> out(fv.rows(), fv.cols());
  for (std::size_t r = 0; r < fv.rows(); ++r)
    for (std::size_t c = 0; c < fv.cols(); ++c) out(r, c) = fv(r, c) * sv(r, col);
  return tape.push(std::move(out), [f, s, col](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& fv = t.value(f);
    const Dense<T>& sv = t.value(s);
    Dense<T> gf(fv.rows(), fv.cols()), gs(sv.rows(), sv.cols());
    for (std::size_t r = 0; r < fv.rows(); ++r) {
      Accum<T> dot = 0;
      for (std::size_t c = 0; c < fv.cols(); ++c) {
        gf(r, c) = g(r, c) * sv(r, col);
        dot += Accum<T>(g(r, c)) * fv(r, c);
      }
      gs(r, col) = static_cast<T>(dot);
    }
    acc.accumulate(f, std::move(gf));
    acc.accumulate(s, std::move(gs));
  });
}

/// out[group[r]] += x[r], rows summed in ascending row order.
template <typename T>
Var segment_sum(GradTape<T>& tape, Var x, std::shared_ptr<const std::vector<std::int32_t>> group,
                std::size_t n_groups) {
  const Dense<T>& xv = tape.value(x);
  require(group->size() == xv.rows(), Errc::ShapeMismatch, "segment_sum group size");
  std::vector<Accum<T>> acc(n_groups * xv.cols(), 0);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto gidx = static_cast<std::size_t>((*group)[r]);
    require(gidx < n_groups, Errc::ShapeMismatch, "segment index out of range");
    for (std::size_t c = 0; c < xv.cols(); ++c) acc[gidx * xv.cols() + c] += xv(r, c);
  }
  Dense<T> out(n_groups, xv.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(acc[i]);
  return tape.push(std::move(out), [x, group](const GradTape<T>&, const Dense<T>& g, Gradients<T>& acc) {
    Dense<T> gx(group->size(), g.cols());
    for (std::size_t r = 0; r < group->size(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) = g(static_cast<std::size_t>((*group)[r]), c);
    acc.accumulate(x, std::move(gx));
  });
}

/// Euclidean norm of one row, as a 1 x 1 value. The gradient at a zero row is zero.
template <typename T>
Var row_l2_norm(GradTape<T>& tape, Var x, std::size_t row) {
  const Dense<T>& xv = tape.value(x);
  require(row < xv.rows(), Errc::ShapeMismatch, "row_l2_norm row out of range");
  Accum<T> s = 0;
  for (std::size_t c = 0; c < xv.cols(); ++c) s += Accum<T>(xv(row, c)) * xv(row, c);
  Dense<T> out(1, 1, static_cast<T>(std::sqrt(s)));
  return tape.push(std::move(out), [x, row](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& xv = t.value(x);
    Accum<T> s = 0;
    for (std::size_t c = 0; c < xv.cols(); ++c) s += Accum<T>(xv(row, c)) * xv(row, c);
    Accum<T> norm = std::sqrt(s);
    Dense<T> gx(xv.rows(), xv.cols());
    if (norm > 0)
      for (std::size_t c = 0; c < xv.cols(); ++c) gx(row, c) = static_cast<T>(g[0] * xv(row, c) / norm);
    acc.accumulate(x, std::move(gx));
  });
}

/// Mean of all entries, as a 1 x 1 value.
template <typename T>
Var mean_all(GradTape<T>& tape, Var x) {
  const Dense<T>& xv = tape.value(x);
  Accum<T> s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  const std::size_t n = std::max<std::size_t>(xv.size(), 1);
  Dense<T> out(1, 1, static_cast<T>(s / static_cast<Accum<T>>(n)));
  return tape.push(std::move(out), [x, n](const GradTape<T>& t, const Dense<T>& g, Gradients<T>& acc) {
    const Dense<T>& xv = t.value(x);
    acc.accumulate(x, Dense<T>(xv.rows(), xv.cols(), static_cast<T>(g[0] / static_cast<T>(n))));
  });
}

/// <x, u> for a fixed (non-differentiated) u, as a 1 x 1 value.
template <typename T>
Var contract(GradTape<T>& tape, Var x, const Dense<T>& u) {
  const Dense<T>& xv = tape.value(x);
  require(xv.same_shape(u), Errc::ShapeMismatch, "contract " + xv.shape_string() + " vs " + u.shape_string());
  Accum<T> s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += Accum<T>(xv[i]) * u[i];
  Dense<T> out(1, 1, static_cast<T>(s));
  return tape.push(std::move(out), [x, u](const GradTape<T>&, const Dense<T>& g, Gradients<T>& acc) {
    Dense<T> gx = u;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= g[0];
    acc.accumulate(x, std::move(gx));
  });
}

}  // namespace focalvox::nn
