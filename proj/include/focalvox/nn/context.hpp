// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "focalvox/nn/graph.hpp"
#include "focalvox/nn/params.hpp"
#include "focalvox/sparse/rulebook.hpp"
#include "focalvox/sparse/tensor.hpp"

namespace focalvox::nn {

/// Sparse value on a tape: shared active set plus the feature node.
template <int D>
struct SparseVar {
  std::shared_ptr<const ActiveSet<D>> active;
  Var features;

  std::size_t size() const { return active->size(); }
};

/// Per-run counters filled by instrumented execution.
struct InteractionCounter {
  std::uint64_t conv_pairs = 0;
  std::uint64_t gate = 0;
  std::uint64_t modulation = 0;
  std::uint64_t qk = 0;
  std::uint64_t av = 0;

  std::uint64_t total() const { return conv_pairs + gate + modulation + qk + av; }
};

namespace detail {
template <int D>
class RulebookCache {
 public:
  std::shared_ptr<const Rulebook<D>> get(const std::shared_ptr<const ActiveSet<D>>& active,
                                         const KernelSpec<D>& spec) {
    for (const auto& e : entries_)
      if (e.active == active && e.spec == spec) return e.rulebook;
    auto rb = std::make_shared<const Rulebook<D>>(build_rulebook_submanifold<D>(active, spec));
    entries_.push_back({active, spec, rb});
    return rb;
  }

 private:
  struct Entry {
    std::shared_ptr<const ActiveSet<D>> active;
    KernelSpec<D> spec;
    std::shared_ptr<const Rulebook<D>> rulebook;
  };
  std::vector<Entry> entries_;
};
}  // namespace detail

/// One forward pass: the tape, the parameter store it reads, and the
/// batch-norm mode. Parameters are bound to tape leaves on first use so that
/// gradients can be looked up by name afterwards.
template <typename T>
class Context {
 public:
  Context(GradTape<T>& tape, const ParamStore<T>& store, BnMode bn_mode = BnMode::Eval)
      : tape_(tape), store_(store), bn_mode_(bn_mode) {}

  GradTape<T>& tape() { return tape_; }
  const ParamStore<T>& store() const { return store_; }
  BnMode bn_mode() const { return bn_mode_; }

  InteractionCounter* counter = nullptr;

  Var param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& rec = store_.at(name);
    require(rec.kind == ParamKind::Parameter, Errc::ConfigError, name + " is a buffer");
    Var v = tape_.leaf(rec.as_dense());
    bound_.emplace(name, v);
    return v;
  }

  /// Uses `v` for parameter `name` instead of a leaf copied from the store.
  void bind(const std::string& name, Var v) {
    require(!bound_.contains(name), Errc::ConfigError, name + " is already bound");
    bound_.emplace(name, v);
  }

  RunningStats<T> running(const std::string& prefix) const {
    auto mean = store_.at(prefix + ".running_mean").as_dense();
    auto var = store_.at(prefix + ".running_var").as_dense();
    return {Dense<T>(1, mean.size(), mean.values()), Dense<T>(1, var.size(), var.values())};
  }

  void record_running(const std::string& prefix, RunningStats<T> stats) {
    running_updates_[prefix] = std::move(stats);
  }

  const std::map<std::string, Var>& bound() const { return bound_; }
  const std::map<std::string, RunningStats<T>>& running_updates() const { return running_updates_; }

  /// Gradient of every bound parameter, keyed by name (absent when unreached).
  std::map<std::string, const Dense<T>*> param_grads(const Gradients<T>& grads) const {
    std::map<std::string, const Dense<T>*> out;
    for (const auto& [name, v] : bound_) out[name] = grads.find(v);
    return out;
  }

  template <int D>
  std::shared_ptr<const Rulebook<D>> submanifold_rulebook(const std::shared_ptr<const ActiveSet<D>>& active,
                                                          const KernelSpec<D>& spec) {
    if constexpr (D == 2) {
      return cache2_.get(active, spec);
    } else {
      static_assert(D == 3, "only 2D and 3D sparse tensors are supported");
      return cache3_.get(active, spec);
    }
  }

  template <int D>
  SparseVar<D> input(const SparseTensor<T, D>& t) {
    require(t.features.rows() == t.coords.size(), Errc::ShapeMismatch, "feature rows vs coords");
    return {t.active_set(), tape_.leaf(t.features)};
  }

  template <int D>
  SparseTensor<T, D> output(const SparseVar<D>& v) const {
    return {v.active->coords(), tape_.value(v.features), v.active->shape()};
  }

 private:
  GradTape<T>& tape_;
  const ParamStore<T>& store_;
  BnMode bn_mode_;
  std::map<std::string, Var> bound_;
  std::map<std::string, RunningStats<T>> running_updates_;
  detail::RulebookCache<2> cache2_;
  detail::RulebookCache<3> cache3_;
};

/// Writes the running statistics collected during a train-mode pass back
/// into the store.
template <typename T>
void commit_running_stats(const Context<T>& ctx, ParamStore<T>& store) {
  for (const auto& [prefix, stats] : ctx.running_updates()) {
    store.at(prefix + ".running_mean").data = stats.mean.values();
    store.at(prefix + ".running_var").data = stats.var.values();
  }
}

// Layer helpers bound to parameter names.

template <typename T>
Var linear(Context<T>& ctx, const std::string& prefix, Var x) {
  return linear(ctx.tape(), x, ctx.param(prefix + ".weight"), ctx.param(prefix + ".bias"));
}

template <typename T>
Var layer_norm(Context<T>& ctx, const std::string& prefix, Var x) {
  return layer_norm(ctx.tape(), x, ctx.param(prefix + ".weight"), ctx.param(prefix + ".bias"));
}

template <typename T>
Var batch_norm(Context<T>& ctx, const std::string& prefix, Var x) {
  RunningStats<T> updated;
  Var out = batch_norm(ctx.tape(), x, ctx.param(prefix + ".weight"), ctx.param(prefix + ".bias"),
                       ctx.bn_mode(), ctx.running(prefix), &updated);
  if (ctx.bn_mode() == BnMode::Train) ctx.record_running(prefix, std::move(updated));
  return out;
}

/// Single-hidden-layer MLP: fc1 -> GeLU -> fc2, no output activation.
template <typename T>
Var mlp_block(Context<T>& ctx, const std::string& prefix, Var x) {
  Var h = gelu(ctx.tape(), linear(ctx, prefix + ".fc1", x));
  return linear(ctx, prefix + ".fc2", h);
}

inline void declare_mlp(ParamSpecList& out, const std::string& prefix, std::size_t c, std::size_t hidden) {
  declare_linear(out, prefix + ".fc1", c, hidden);
  declare_linear(out, prefix + ".fc2", hidden, c);
}

/// Hidden width of an MLP with expansion ratio rho over C channels.
inline std::size_t mlp_hidden(std::size_t channels, double ratio) {
  double h = ratio * static_cast<double>(channels);
  auto rounded = static_cast<std::size_t>(std::llround(h));
  require(std::abs(h - static_cast<double>(rounded)) < 1e-9 && rounded >= 1, Errc::ConfigError,
          "mlp_ratio * channels must be a positive integer");
  return rounded;
}

/// Standalone mlp_block over a dense block, for callers without a tape.
template <typename T>
Dense<T> mlp_block(const Dense<T>& x, const ParamStore<T>& store, const std::string& prefix) {
  GradTape<T> tape(false);
  Context<T> ctx(tape, store);
  Var out = mlp_block(ctx, prefix, tape.leaf(x));
  return tape.value(out);
}

}  // namespace focalvox::nn
