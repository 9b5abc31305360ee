// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "focalvox/core/dense.hpp"

namespace focalvox::nn {

/// Handle to a value recorded on a GradTape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
  friend bool operator==(Var, Var) = default;
};

template <typename T>
class GradTape;

/// Sparse gradient map keyed by tape id. Entries never written stay absent.
template <typename T>
class Gradients {
 public:
  explicit Gradients(std::size_t n = 0) : grads_(n) {}

  bool has(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }

  const Dense<T>* find(Var v) const { return has(v) ? &*grads_[v.id] : nullptr; }

  const Dense<T>& at(Var v) const {
    require(has(v), Errc::ShapeMismatch, "no gradient recorded for tape value " + std::to_string(v.id));
    return *grads_[v.id];
  }

  void accumulate(Var v, Dense<T> g) {
    auto& slot = grads_.at(v.id);
    if (!slot) {
      slot = std::move(g);
    } else {
      *slot += g;
    }
  }

  /// Op nodes whose backward ran, in the order they ran.
  const std::vector<std::uint32_t>& visit_order() const { return visited_; }

 private:
  friend class GradTape<T>;
  std::vector<std::optional<Dense<T>>> grads_;
  std::vector<std::uint32_t> visited_;
};

/// Append-only log of forward values. Each op node carries a closure that maps
/// the gradient of its output to gradients of its inputs. A tape constructed
/// with recording = false keeps values only, for plain inference.
template <typename T>
class GradTape {
 public:
  using Backward = std::function<void(const GradTape&, const Dense<T>&, Gradients<T>&)>;

  explicit GradTape(bool recording = true) : recording_(recording) {}

  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  bool recording() const { return recording_; }

  Var leaf(Dense<T> value) { return push(std::move(value), nullptr); }

  Var push(Dense<T> value, Backward backward) {
    Var v{static_cast<std::uint32_t>(nodes_.size())};
    nodes_.push_back({std::move(value), recording_ ? std::move(backward) : Backward{}});
    return v;
  }

  const Dense<T>& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from `output` seeded with `seed`. Nodes are visited in
  /// strictly decreasing id order; nodes the seed never reaches are skipped.
  Gradients<T> backward(Var output, Dense<T> seed) const {
    require(recording_, Errc::ShapeMismatch, "backward on a non-recording tape");
    require(seed.same_shape(value(output)), Errc::ShapeMismatch,
            "seed " + seed.shape_string() + " vs output " + value(output).shape_string());
    Gradients<T> grads(nodes_.size());
    grads.accumulate(output, std::move(seed));
    for (std::uint32_t id = output.id + 1; id-- > 0;) {
      const Node& node = nodes_[id];
      if (!node.backward || !grads.grads_[id]) continue;
      grads.visited_.push_back(id);
      const Dense<T>& g = *grads.grads_[id];
      node.backward(*this, g, grads);
    }
    return grads;
  }

 private:
  struct Node {
    Dense<T> value;
    Backward backward;
  };
  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace focalvox::nn
