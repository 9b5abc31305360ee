// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <string>
#include <vector>

#include "focalvox/core/error.hpp"
#include "focalvox/sparse/coords.hpp"

namespace focalvox {

template <int D>
struct KernelSpec {
  Extent<D> kernel{};
  Extent<D> dilation{};
  Extent<D> stride{};
  Extent<D> padding{};

  /// Cubic kernel with "same" padding dilation*(k-1)/2.
  static KernelSpec cube(int k, int dilation = 1, int stride = 1) {
    KernelSpec s;
    s.kernel.fill(k);
    s.dilation.fill(dilation);
    s.stride.fill(stride);
    s.padding.fill(dilation * (k - 1) / 2);
    return s;
  }

  int volume() const {
    int v = 1;
    for (int d = 0; d < D; ++d) v *= kernel[d];
    return v;
  }

  bool unit_stride() const {
    for (int d = 0; d < D; ++d)
      if (stride[d] != 1) return false;
    return true;
  }

  void validate() const {
    for (int d = 0; d < D; ++d) {
      require(kernel[d] > 0 && kernel[d] % 2 == 1, Errc::InvalidSpec,
              "kernel sizes must be odd and positive, got " + std::to_string(kernel[d]));
      require(dilation[d] > 0, Errc::InvalidSpec, "dilation must be positive");
      require(stride[d] > 0, Errc::InvalidSpec, "stride must be positive");
      require(padding[d] >= 0, Errc::InvalidSpec, "padding must be non-negative");
    }
  }

  /// Center-relative offsets, row-major over the kernel volume (last axis
  /// fastest). Index in this list is the weight slot.
  std::vector<Extent<D>> offsets() const {
    std::vector<Extent<D>> out;
    out.reserve(static_cast<std::size_t>(volume()));
    Extent<D> o{};
    for (int d = 0; d < D; ++d) o[d] = -(kernel[d] - 1) / 2;
    for (int n = 0; n < volume(); ++n) {
      out.push_back(o);
      for (int d = D - 1; d >= 0; --d) {
        if (++o[d] <= (kernel[d] - 1) / 2) break;
        o[d] = -(kernel[d] - 1) / 2;
      }
    }
    return out;
  }

  /// Slot of the all-zero offset.
  int center_slot() const { return volume() / 2; }

  /// Output extent per dimension: ceil((in + 2p - d(k-1) - 1) / s) + 1.
  Extent<D> output_shape(const Extent<D>& in) const {
    Extent<D> out{};
    for (int d = 0; d < D; ++d) {
      int span = in[d] + 2 * padding[d] - dilation[d] * (kernel[d] - 1) - 1;
      require(span >= 0, Errc::InvalidSpec, "kernel larger than padded input");
      out[d] = (span + stride[d] - 1) / stride[d] + 1;
    }
    return out;
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

}  // namespace focalvox
