// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <type_traits>
#include <vector>

#include "focalvox/core/parallel.hpp"
#include "focalvox/sparse/kernel.hpp"
#include "focalvox/sparse/tensor.hpp"

namespace focalvox {

struct RulePair {
  std::int32_t in = 0;
  std::int32_t out = 0;
  friend auto operator<=>(const RulePair&, const RulePair&) = default;
};

/// (kernel slot, row) entry of the per-row views of a rulebook.
struct SlotRow {
  std::int32_t slot = 0;
  std::int32_t row = 0;
};

enum class ConvKind { Submanifold, Regular };

/// Gather-scatter execution plan. Offsets are center-relative and row-major
/// over the kernel volume; pairs within an offset are sorted by (out, in).
/// Input position of a pair is out*stride + (offset + (k-1)/2)*dilation - pad,
/// which for submanifold specs reduces to out + offset*dilation.
template <int D>
struct Rulebook {
  ConvKind kind = ConvKind::Submanifold;
  KernelSpec<D> spec;
  std::vector<Extent<D>> offsets;
  std::vector<std::vector<RulePair>> pairs;
  std::shared_ptr<const ActiveSet<D>> in;
  std::shared_ptr<const ActiveSet<D>> out;

  // CSR views over the same pairs. by_output row j lists (slot, in_row) in
  // slot order; by_input row i lists (slot, out_row) in slot order.
  std::vector<std::size_t> out_begin;
  std::vector<SlotRow> by_output;
  std::vector<std::size_t> in_begin;
  std::vector<SlotRow> by_input;

  std::size_t n_in() const { return in->size(); }
  std::size_t n_out() const { return out->size(); }
  const std::vector<VoxelCoord<D>>& out_coords() const { return out->coords(); }

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.size();
    return n;
  }
};

namespace detail {

template <int D>
void finalize_rulebook(Rulebook<D>& rb) {
  const std::size_t n_in = rb.in->size();
  const std::size_t n_out = rb.out->size();
  rb.out_begin.assign(n_out + 1, 0);
  rb.in_begin.assign(n_in + 1, 0);
  for (const auto& list : rb.pairs) {
    for (const auto& p : list) {
      ++rb.out_begin[static_cast<std::size_t>(p.out) + 1];
      ++rb.in_begin[static_cast<std::size_t>(p.in) + 1];
    }
  }
  for (std::size_t j = 0; j < n_out; ++j) rb.out_begin[j + 1] += rb.out_begin[j];
  for (std::size_t i = 0; i < n_in; ++i) rb.in_begin[i + 1] += rb.in_begin[i];
  rb.by_output.assign(rb.out_begin.back(), {});
  rb.by_input.assign(rb.in_begin.back(), {});
  std::vector<std::size_t> out_fill(rb.out_begin.begin(), rb.out_begin.end() - 1);
  std::vector<std::size_t> in_fill(rb.in_begin.begin(), rb.in_begin.end() - 1);
  // Slots are visited in ascending order, so each row's entries end up slot-sorted.
  for (std::size_t s = 0; s < rb.pairs.size(); ++s) {
    for (const auto& p : rb.pairs[s]) {
      rb.by_output[out_fill[static_cast<std::size_t>(p.out)]++] = {static_cast<std::int32_t>(s), p.in};
      rb.by_input[in_fill[static_cast<std::size_t>(p.in)]++] = {static_cast<std::int32_t>(s), p.out};
    }
  }
}

}  // namespace detail

/// Submanifold plan: outputs are exactly the input sites.
template <int D>
Rulebook<D> build_rulebook_submanifold(std::shared_ptr<const ActiveSet<D>> active,
                                       const KernelSpec<D>& spec) {
  spec.validate();
  require(spec.unit_stride(), Errc::InvalidSpec, "submanifold convolution requires stride 1");
  Rulebook<D> rb;
  rb.kind = ConvKind::Submanifold;
  rb.spec = spec;
  rb.offsets = spec.offsets();
  rb.in = active;
  rb.out = active;
  rb.pairs.resize(rb.offsets.size());
  const auto& coords = active->coords();
  const auto& index = active->index();
  parallel_for(rb.offsets.size(), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      auto& list = rb.pairs[s];
      for (std::size_t j = 0; j < coords.size(); ++j) {
        VoxelCoord<D> probe = coords[j];
        for (int d = 0; d < D; ++d) probe.ijk[d] += rb.offsets[s][d] * spec.dilation[d];
        if (!in_bounds<D>(probe.ijk, active->shape())) continue;
        std::int32_t i = index.find(probe);
        if (i >= 0) list.push_back({i, static_cast<std::int32_t>(j)});
      }
    }
  });
  detail::finalize_rulebook(rb);
  return rb;
}

template <typename T, int D>
Rulebook<D> build_rulebook_submanifold(const SparseTensor<T, D>& t, const KernelSpec<D>& spec) {
  return build_rulebook_submanifold<D>(t.active_set(), spec);
}

/// Regular (optionally strided) plan: every output site within out_shape that
/// receives at least one contribution, sorted lexicographically.
template <int D>
Rulebook<D> build_rulebook_regular(std::shared_ptr<const ActiveSet<D>> active,
                                   const KernelSpec<D>& spec, const std::type_identity_t<Extent<D>>& out_shape) {
  spec.validate();
  Rulebook<D> rb;
  rb.kind = ConvKind::Regular;
  rb.spec = spec;
  rb.offsets = spec.offsets();
  rb.in = active;
  rb.pairs.resize(rb.offsets.size());
  const auto& coords = active->coords();

  // Output site for (input i, slot s), or nullopt when i does not land on the
  // stride lattice or falls outside out_shape.
  auto target = [&](const VoxelCoord<D>& c, std::size_t s) -> std::optional<VoxelCoord<D>> {
    VoxelCoord<D> j{c.batch, {}};
    for (int d = 0; d < D; ++d) {
      int raw = rb.offsets[s][d] + (spec.kernel[d] - 1) / 2;
      int num = c.ijk[d] - raw * spec.dilation[d] + spec.padding[d];
      if (num < 0 || num % spec.stride[d] != 0) return std::nullopt;
      j.ijk[d] = num / spec.stride[d];
      if (j.ijk[d] >= out_shape[d]) return std::nullopt;
    }
    return j;
  };

  std::vector<VoxelCoord<D>> outs;
  for (const auto& c : coords) {
    for (std::size_t s = 0; s < rb.offsets.size(); ++s) {
      if (auto j = target(c, s)) outs.push_back(*j);
    }
  }
  std::sort(outs.begin(), outs.end());
  outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
  rb.out = std::make_shared<const ActiveSet<D>>(std::move(outs), out_shape);

  const auto& out_index = rb.out->index();
  parallel_for(rb.offsets.size(), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      auto& list = rb.pairs[s];
      for (std::size_t i = 0; i < coords.size(); ++i) {
        if (auto j = target(coords[i], s)) {
          list.push_back({static_cast<std::int32_t>(i), out_index.find(*j)});
        }
      }
      std::sort(list.begin(), list.end(), [](const RulePair& a, const RulePair& b) {
        return a.out != b.out ? a.out < b.out : a.in < b.in;
      });
    }
  });
  detail::finalize_rulebook(rb);
  return rb;
}

template <typename T, int D>
Rulebook<D> build_rulebook_regular(const SparseTensor<T, D>& t, const KernelSpec<D>& spec,
                                   const std::type_identity_t<Extent<D>>& out_shape) {
  return build_rulebook_regular<D>(t.active_set(), spec, out_shape);
}

}  // namespace focalvox
