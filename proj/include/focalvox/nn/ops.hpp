// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>
#include <vector>

#include "focalvox/core/dense.hpp"
#include "focalvox/core/parallel.hpp"

// Dense per-voxel primitives and their vector-Jacobian products. Every
// function here is pure; the tape layer in graph.hpp wires them together.

namespace focalvox::nn {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

enum class BnMode { Train, Eval };

/// x (N x Cin) * W (Cin x Cout), rows processed independently.
template <typename T>
Dense<T> matmul(const Dense<T>& x, const Dense<T>& w) {
  require(x.cols() == w.rows(), Errc::ShapeMismatch,
          "matmul " + x.shape_string() + " * " + w.shape_string());
  const std::size_t k = x.cols(), m = w.cols();
  Dense<T> out(x.rows(), m);
  parallel_for(x.rows(), 128, [&](std::size_t begin, std::size_t end) {
    std::vector<Accum<T>> acc(m);
    for (std::size_t r = begin; r < end; ++r) {
      std::fill(acc.begin(), acc.end(), Accum<T>(0));
      for (std::size_t i = 0; i < k; ++i) {
        const Accum<T> xv = x(r, i);
        const T* wrow = w.row(i).data();
        for (std::size_t c = 0; c < m; ++c) acc[c] += xv * wrow[c];
      }
      for (std::size_t c = 0; c < m; ++c) out(r, c) = static_cast<T>(acc[c]);
    }
  });
  return out;
}

/// a (N x M) * b^T (K x M) -> N x K
template <typename T>
Dense<T> matmul_bt(const Dense<T>& a, const Dense<T>& b) {
  require(a.cols() == b.cols(), Errc::ShapeMismatch,
          "matmul_bt " + a.shape_string() + " * " + b.shape_string() + "^T");
  Dense<T> out(a.rows(), b.rows());
  parallel_for(a.rows(), 128, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t k = 0; k < b.rows(); ++k) {
        Accum<T> s = 0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += Accum<T>(a(r, c)) * b(k, c);
        out(r, k) = static_cast<T>(s);
      }
    }
  });
  return out;
}

/// a^T (M x N) * b (N x K) -> M x K, summed over rows in order.
template <typename T>
Dense<T> matmul_at(const Dense<T>& a, const Dense<T>& b) {
  require(a.rows() == b.rows(), Errc::ShapeMismatch,
          "matmul_at " + a.shape_string() + "^T * " + b.shape_string());
  const std::size_t m = a.cols(), k = b.cols();
  std::vector<Accum<T>> acc(m * k, 0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      const Accum<T> av = a(r, i);
      if (av == 0) continue;
      const T* brow = b.row(r).data();
      for (std::size_t c = 0; c < k; ++c) acc[i * k + c] += av * brow[c];
    }
  }
  Dense<T> out(m, k);
  for (std::size_t i = 0; i < m * k; ++i) out[i] = static_cast<T>(acc[i]);
  return out;
}

template <typename T>
Dense<T> column_sums(const Dense<T>& x) {
  std::vector<Accum<T>> acc(x.cols(), 0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) acc[c] += x(r, c);
  Dense<T> out(1, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) out[c] = static_cast<T>(acc[c]);
  return out;
}

// ---------------------------------------------------------------- linear

template <typename T>
Dense<T> linear(const Dense<T>& x, const Dense<T>& w, const Dense<T>& b) {
  require(b.rows() == 1 && b.cols() == w.cols(), Errc::ShapeMismatch,
          "bias " + b.shape_string() + " for weights " + w.shape_string());
  Dense<T> out = matmul(x, w);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b[c];
  return out;
}

template <typename T>
struct LinearGrads {
  Dense<T> x, w, b;
};

template <typename T>
LinearGrads<T> linear_vjp(const Dense<T>& x, const Dense<T>& w, const Dense<T>& gout) {
  return {matmul_bt(gout, w), matmul_at(x, gout), column_sums(gout)};
}

// ---------------------------------------------------------------- layer norm

template <typename T>
struct NormResult {
  Dense<T> out;
  Dense<T> xhat;
  std::vector<T> rstd;  // per row (layer norm) or per channel (batch norm)
};

/// Per-row normalisation over the channel dimension.
template <typename T>
NormResult<T> layer_norm(const Dense<T>& x, const Dense<T>& gain, const Dense<T>& bias,
                         double eps = kNormEps) {
  const std::size_t c = x.cols();
  require(gain.size() == c && bias.size() == c, Errc::ShapeMismatch, "layer_norm affine size");
  NormResult<T> r{Dense<T>(x.rows(), c), Dense<T>(x.rows(), c), std::vector<T>(x.rows())};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    Accum<T> mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += x(i, j);
    mean /= static_cast<Accum<T>>(c);
    Accum<T> var = 0;
    for (std::size_t j = 0; j < c; ++j) {
      Accum<T> d = x(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<Accum<T>>(c);
    Accum<T> rstd = 1.0 / std::sqrt(var + eps);
    r.rstd[i] = static_cast<T>(rstd);
    for (std::size_t j = 0; j < c; ++j) {
      Accum<T> xh = (x(i, j) - mean) * rstd;
      r.xhat(i, j) = static_cast<T>(xh);
      r.out(i, j) = static_cast<T>(xh * gain[j] + bias[j]);
    }
  }
  return r;
}

template <typename T>
struct NormGrads {
  Dense<T> x, gain, bias;
};

template <typename T>
NormGrads<T> layer_norm_vjp(const NormResult<T>& fwd, const Dense<T>& gain, const Dense<T>& gout) {
  const std::size_t n = gout.rows(), c = gout.cols();
  NormGrads<T> g{Dense<T>(n, c), Dense<T>(1, c), Dense<T>(1, c)};
  std::vector<Accum<T>> gg(c, 0), gb(c, 0);
  for (std::size_t i = 0; i < n; ++i) {
    Accum<T> m1 = 0, m2 = 0;
    for (std::size_t j = 0; j < c; ++j) {
      Accum<T> gx = Accum<T>(gout(i, j)) * gain[j];
      m1 += gx;
      m2 += gx * fwd.xhat(i, j);
      gg[j] += Accum<T>(gout(i, j)) * fwd.xhat(i, j);
      gb[j] += gout(i, j);
    }
    m1 /= static_cast<Accum<T>>(c);
    m2 /= static_cast<Accum<T>>(c);
    for (std::size_t j = 0; j < c; ++j) {
      Accum<T> gx = Accum<T>(gout(i, j)) * gain[j];
      g.x(i, j) = static_cast<T>(Accum<T>(fwd.rstd[i]) * (gx - m1 - fwd.xhat(i, j) * m2));
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    g.gain[j] = static_cast<T>(gg[j]);
    g.bias[j] = static_cast<T>(gb[j]);
  }
  return g;
}

// ---------------------------------------------------------------- batch norm

template <typename T>
struct RunningStats {
  Dense<T> mean;  // 1 x C
  Dense<T> var;   // 1 x C
};

template <typename T>
struct BatchNormResult {
  NormResult<T> norm;
  RunningStats<T> running;  // updated statistics (train) or the inputs (eval)
};

/// Channel-wise normalisation over the active voxels only. Train mode uses
/// batch statistics (biased variance) and blends them into the running
/// statistics as momentum * old + (1 - momentum) * batch.
template <typename T>
BatchNormResult<T> batch_norm_active(const Dense<T>& x, const Dense<T>& gain, const Dense<T>& bias,
                                     BnMode mode, const RunningStats<T>& running,
                                     double eps = kNormEps, double momentum = kBatchNormMomentum) {
  const std::size_t n = x.rows(), c = x.cols();
  require(gain.size() == c && bias.size() == c && running.mean.size() == c &&
              running.var.size() == c,
          Errc::ShapeMismatch, "batch_norm parameter size");
  BatchNormResult<T> r{{Dense<T>(n, c), Dense<T>(n, c), std::vector<T>(c)}, running};
  std::vector<Accum<T>> mean(c, 0), var(c, 0);
  if (mode == BnMode::Train) {
    require(n >= 1, Errc::EmptyBatch, "batch norm in train mode needs at least one voxel");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) mean[j] += x(i, j);
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<Accum<T>>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        Accum<T> d = x(i, j) - mean[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) {
      var[j] /= static_cast<Accum<T>>(n);
      r.running.mean[j] = static_cast<T>(momentum * running.mean[j] + (1 - momentum) * mean[j]);
      r.running.var[j] = static_cast<T>(momentum * running.var[j] + (1 - momentum) * var[j]);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = running.mean[j];
      var[j] = running.var[j];
    }
  }
  for (std::size_t j = 0; j < c; ++j) r.norm.rstd[j] = static_cast<T>(1.0 / std::sqrt(var[j] + eps));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      Accum<T> xh = (x(i, j) - mean[j]) * Accum<T>(1.0 / std::sqrt(var[j] + eps));
      r.norm.xhat(i, j) = static_cast<T>(xh);
      r.norm.out(i, j) = static_cast<T>(xh * gain[j] + bias[j]);
    }
  }
  return r;
}

template <typename T>
NormGrads<T> batch_norm_vjp(const NormResult<T>& fwd, const Dense<T>& gain, BnMode mode,
                            const Dense<T>& gout) {
  const std::size_t n = gout.rows(), c = gout.cols();
  NormGrads<T> g{Dense<T>(n, c), Dense<T>(1, c), Dense<T>(1, c)};
  std::vector<Accum<T>> m1(c, 0), m2(c, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      Accum<T> go = gout(i, j);
      m1[j] += go;
      m2[j] += go * fwd.xhat(i, j);
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    g.gain[j] = static_cast<T>(m2[j]);
    g.bias[j] = static_cast<T>(m1[j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      Accum<T> scale = Accum<T>(gain[j]) * fwd.rstd[j];
      Accum<T> go = gout(i, j);
      if (mode == BnMode::Train) {
        Accum<T> inv_n = 1.0 / static_cast<Accum<T>>(n);
        g.x(i, j) = static_cast<T>(scale * (go - m1[j] * inv_n - fwd.xhat(i, j) * m2[j] * inv_n));
      } else {
        g.x(i, j) = static_cast<T>(scale * go);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------- activations

/// Exact GeLU x * Phi(x) through erf.
template <typename T>
T gelu(T x) {
  return static_cast<T>(0.5 * static_cast<double>(x) * (1.0 + std::erf(static_cast<double>(x) * M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  double xd = static_cast<double>(x);
  double cdf = 0.5 * (1.0 + std::erf(xd * M_SQRT1_2));
  double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * M_PI);
  return static_cast<T>(cdf + xd * pdf);
}

template <typename T>
Dense<T> gelu(const Dense<T>& x) {
  Dense<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

template <typename T>
Dense<T> relu(const Dense<T>& x) {
  Dense<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

}  // namespace focalvox::nn
