// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "focalvox/core/random.hpp"
#include "focalvox/nn/graph.hpp"

namespace focalvox::nn {

/// A differentiable computation of one dense input, recorded onto a tape.
using Recorded = std::function<Var(GradTape<double>&, Var)>;

struct VjpCheckOptions {
  std::size_t max_samples = 48;  // coordinates probed by central differences
  double step = 1e-5;            // h = step * (1 + |x|)
};

/// Compares the tape VJP of <u, f(x)> (u a seeded random cotangent) against
/// central differences. Returns the max over sampled coordinates of
/// |analytic - cd| / max(|analytic|, |cd|, 1e-8).
inline double vjp_check(const Recorded& f, const Dense<double>& x, std::uint64_t seed,
                        VjpCheckOptions opts = {}) {
  Rng rng(seed);
  Dense<double> analytic(x.rows(), x.cols());
  Dense<double> cot;
  {
    GradTape<double> tape;
    Var in = tape.leaf(x);
    Var out = f(tape, in);
    const Dense<double>& y = tape.value(out);
    cot = Dense<double>(y.rows(), y.cols());
    for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = rng.normal();
    Var s = contract(tape, out, cot);
    auto grads = tape.backward(s, Dense<double>(1, 1, 1.0));
    if (const auto* g = grads.find(in)) analytic = *g;
  }
  require(analytic.all_finite(), Errc::NonFiniteGradient, "analytic gradient is not finite");

  auto phi = [&](const Dense<double>& xp) {
    GradTape<double> tape(false);
    Var out = f(tape, tape.leaf(xp));
    const Dense<double>& y = tape.value(out);
    long double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<long double>(y[i]) * cot[i];
    return static_cast<double>(s);
  };

  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (idx.size() > opts.max_samples) {
    for (std::size_t i = 0; i < opts.max_samples; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(opts.max_samples);
  }

  double worst = 0;
  Dense<double> xp = x;
  for (std::size_t k : idx) {
    double h = opts.step * (1.0 + std::abs(x[k]));
    xp[k] = x[k] + h;
    double fp = phi(xp);
    xp[k] = x[k] - h;
    double fm = phi(xp);
    xp[k] = x[k];
    double cd = (fp - fm) / (2 * h);
    require(std::isfinite(cd), Errc::NonFiniteGradient, "finite difference is not finite");
    double denom = std::max({std::abs(analytic[k]), std::abs(cd), 1e-8});
    worst = std::max(worst, std::abs(analytic[k] - cd) / denom);
  }
  return worst;
}

}  // namespace focalvox::nn
