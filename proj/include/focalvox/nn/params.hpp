// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "focalvox/core/dense.hpp"
#include "focalvox/core/error.hpp"
#include "focalvox/core/random.hpp"

namespace focalvox::nn {

enum class ParamKind { Parameter, Buffer };

enum class InitKind { Uniform, Zeros, Ones };

/// Declared tensor of a model: name, shape and how to initialise it.
struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  ParamKind kind = ParamKind::Parameter;
  InitKind init = InitKind::Zeros;
  std::size_t fan_in = 1;

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }
};

using ParamSpecList = std::vector<ParamSpec>;

template <typename T>
struct TensorRecord {
  std::vector<std::size_t> shape;
  std::vector<T> data;
  ParamKind kind = ParamKind::Parameter;

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }

  /// 2D view used on the tape: leading dims folded into rows, last dim = cols.
  Dense<T> as_dense() const {
    std::size_t cols = shape.empty() ? 1 : shape.back();
    std::size_t rows = cols == 0 ? 0 : numel() / cols;
    return Dense<T>(rows, cols, data);
  }
};

/// Insertion-ordered map from dotted name to tensor record.
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, std::vector<std::size_t> shape, std::vector<T> data,
           ParamKind kind = ParamKind::Parameter) {
    require(!index_.contains(name), Errc::ConfigError, "duplicate parameter name " + name);
    TensorRecord<T> rec{std::move(shape), std::move(data), kind};
    require(rec.data.size() == rec.numel(), Errc::ShapeMismatch,
            "payload length mismatch for " + name);
    for (const T& v : rec.data)
      require(std::isfinite(v), Errc::NonFiniteValue, "non-finite value in " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(rec));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const TensorRecord<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), Errc::ConfigError, "unknown parameter " + name);
    return entries_[it->second].second;
  }

  TensorRecord<T>& at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), Errc::ConfigError, "unknown parameter " + name);
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, TensorRecord<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count(ParamKind kind = ParamKind::Parameter) const {
    std::size_t n = 0;
    for (const auto& [name, rec] : entries_)
      if (rec.kind == kind) n += rec.numel();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& [na, ra] = a.entries_[i];
      const auto& [nb, rb] = b.entries_[i];
      if (na != nb || ra.shape != rb.shape || ra.data != rb.data) return false;
    }
    return true;
  }

 private:
  std::vector<std::pair<std::string, TensorRecord<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic initialisation in declaration order: weights uniform in
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, norm gains one.
template <typename T>
ParamStore<T> instantiate(const ParamSpecList& specs, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<T> store;
  for (const auto& spec : specs) {
    std::vector<T> data(spec.numel());
    switch (spec.init) {
      case InitKind::Zeros: break;
      case InitKind::Ones: std::fill(data.begin(), data.end(), T(1)); break;
      case InitKind::Uniform: {
        double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(spec.fan_in, 1)));
        for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
    }
    store.add(spec.name, spec.shape, std::move(data), spec.kind);
  }
  return store;
}

inline std::size_t param_count(const ParamSpecList& specs) {
  std::size_t n = 0;
  for (const auto& s : specs)
    if (s.kind == ParamKind::Parameter) n += s.numel();
  return n;
}

// Declaration helpers shared by all layers.

inline void declare_linear(ParamSpecList& out, const std::string& prefix, std::size_t cin,
                           std::size_t cout) {
  out.push_back({prefix + ".weight", {cin, cout}, ParamKind::Parameter, InitKind::Uniform, cin});
  out.push_back({prefix + ".bias", {cout}, ParamKind::Parameter, InitKind::Zeros, cin});
}

inline void declare_layer_norm(ParamSpecList& out, const std::string& prefix, std::size_t c) {
  out.push_back({prefix + ".weight", {c}, ParamKind::Parameter, InitKind::Ones, 1});
  out.push_back({prefix + ".bias", {c}, ParamKind::Parameter, InitKind::Zeros, 1});
}

inline void declare_batch_norm(ParamSpecList& out, const std::string& prefix, std::size_t c) {
  out.push_back({prefix + ".weight", {c}, ParamKind::Parameter, InitKind::Ones, 1});
  out.push_back({prefix + ".bias", {c}, ParamKind::Parameter, InitKind::Zeros, 1});
  out.push_back({prefix + ".running_mean", {c}, ParamKind::Buffer, InitKind::Zeros, 1});
  out.push_back({prefix + ".running_var", {c}, ParamKind::Buffer, InitKind::Ones, 1});
}

inline void declare_conv(ParamSpecList& out, const std::string& prefix, std::size_t volume,
                         std::size_t cin, std::size_t cout) {
  out.push_back({prefix + ".weight", {volume, cin, cout}, ParamKind::Parameter, InitKind::Uniform,
                 volume * cin});
  out.push_back({prefix + ".bias", {cout}, ParamKind::Parameter, InitKind::Zeros, volume * cin});
}

}  // namespace focalvox::nn
