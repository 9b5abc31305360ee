// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "focalvox/bench/attention.hpp"
#include "focalvox/core/random.hpp"
#include "focalvox/sfm/sfm.hpp"
#include "focalvox/sparse/rulebook.hpp"

namespace focalvox::bench {

enum class MixerKind { Sfm, LocalAttention };

inline std::string to_string(MixerKind k) { return k == MixerKind::Sfm ? "sfm" : "local-attention"; }

inline MixerKind parse_mixer(const std::string& s) {
  if (s == "sfm") return MixerKind::Sfm;
  if (s == "local-attention" || s == "attention") return MixerKind::LocalAttention;
  fail(Errc::ConfigError, "mixer must be sfm or local-attention, got '" + s + "'");
}

/// What is being counted: the SFM focal levels, or the attention window edge.
struct MixerConfig {
  sfm::SFMConfig sfm;
  int window = 5;
  std::size_t channels = 16;  // only enters the bytes model
  double voxel_edge = 0.1;    // meters per voxel, for the report
};

/// Exact interaction count from coordinates alone.
///   sfm:       sum over levels of submanifold rulebook pairs + N*L gates + N modulations
///   attention: sum_q n_w(q) query-key products + the same number of weight-value products
template <int D>
nn::InteractionCounter count_interactions(MixerKind kind, const std::shared_ptr<const ActiveSet<D>>& active,
                                          const MixerConfig& cfg) {
  nn::InteractionCounter n;
  const std::uint64_t voxels = active->size();
  if (kind == MixerKind::Sfm) {
    cfg.sfm.validate();
    for (std::size_t l = 0; l < cfg.sfm.levels(); ++l)
      n.conv_pairs += build_rulebook_submanifold<D>(active, sfm::level_spec<D>(cfg.sfm, l)).pair_count();
    n.gate = voxels * cfg.sfm.levels();
    n.modulation = voxels;
  } else {
    for (const auto& m : window_members<D>(*active, cfg.window)) {
      n.qk += m.size();
      n.av += m.size();
    }
  }
  return n;
}

/// Analytic peak-intermediate bytes (float32) of one mixer pass.
///   sfm:       projection N(2C+L), L level maps NC, context NC
///   attention: q, k, v 3NC, logits sum_q n_w(q), output NC
inline std::uint64_t bytes_model(MixerKind kind, std::uint64_t n, const nn::InteractionCounter& count,
                                 const MixerConfig& cfg) {
  const std::uint64_t c = cfg.channels;
  if (kind == MixerKind::Sfm) {
    const std::uint64_t l = cfg.sfm.levels();
    return 4 * (n * (2 * c + l) + l * n * c + n * c);
  }
  return 4 * (3 * n * c + count.qk + n * c);
}

/// Exactly `n` distinct cells of an edge^3 grid, drawn uniformly.
inline std::shared_ptr<const ActiveSet<3>> uniform_scene(std::size_t n, int edge, std::uint64_t seed) {
  const std::size_t cells = static_cast<std::size_t>(edge) * edge * edge;
  require(n >= 1 && n <= cells, Errc::ConfigError,
          std::to_string(n) + " voxels do not fit a " + std::to_string(edge) + "^3 grid");
  Rng rng(seed);
  std::vector<std::uint32_t> pool(cells);
  for (std::size_t i = 0; i < cells; ++i) pool[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.below(cells - i)]);
  std::vector<std::uint32_t> picked(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(picked.begin(), picked.end());
  std::vector<VoxelCoord<3>> coords;
  coords.reserve(n);
  for (auto lin : picked) {
    const int i = static_cast<int>(lin);
    coords.push_back({0, {i / (edge * edge), (i / edge) % edge, i % edge}});
  }
  return std::make_shared<const ActiveSet<3>>(std::move(coords), Extent<3>{edge, edge, edge});
}

/// Edge of the cube holding n voxels at the given occupancy.
inline int edge_for(std::size_t n, double density) {
  require(density > 0 && density <= 1, Errc::ConfigError, "density must lie in (0, 1]");
  return std::max(1, static_cast<int>(std::lround(std::cbrt(static_cast<double>(n) / density))));
}

struct BenchRecord {
  MixerKind mixer = MixerKind::Sfm;
  std::uint64_t n = 0;
  int edge_voxels = 0;  // SFM: ERF edge; attention: window edge
  double edge_m = 0;
  std::uint64_t interaction_pairs = 0;
  std::uint64_t bytes_model = 0;
  std::int64_t wall_ns = 0;
  double occupancy = 0;  // mean active voxels per window (attention only)
};

struct ScalingResult {
  std::vector<BenchRecord> records;
  std::string x_axis;  // "n" or "mean_window_occupancy"
  std::vector<double> x;
  std::vector<double> y;
  double slope = 0;
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), Errc::ShapeMismatch, "fit needs paired samples");
  std::set<double> distinct(x.begin(), x.end());
  require(distinct.size() >= 2, Errc::DegenerateFit, "need at least two distinct x values to fit a slope");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0 && y[i] > 0, Errc::DegenerateFit, "log-log fit needs positive samples");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

/// SFM: one scene per N at fixed density, pairs fitted against N.
/// Attention: one fixed grid, sized so the largest N sits at `density`, so the
/// occupancy grows with N; pairs per window fitted against the mean number of
/// active voxels per window (window volume x occupancy).
inline ScalingResult scaling_experiment(MixerKind kind, const std::vector<std::size_t>& n_list, double density,
                                        std::uint64_t seed, const MixerConfig& cfg, bool timing = false) {
  std::set<std::size_t> distinct(n_list.begin(), n_list.end());
  require(distinct.size() >= 2, Errc::DegenerateFit, "scaling needs at least two distinct N");
  ScalingResult out;
  out.x_axis = kind == MixerKind::Sfm ? "n" : "mean_window_occupancy";
  const int fixed_edge = edge_for(*distinct.rbegin(), density);
  const int erf_edge = sfm::effective_receptive_field(cfg.sfm).voxels;

  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const std::size_t n = n_list[i];
    const int edge = kind == MixerKind::Sfm ? edge_for(n, density) : fixed_edge;
    auto scene = uniform_scene(n, edge, seed + i);
    const auto t0 = std::chrono::steady_clock::now();
    const auto count = count_interactions<3>(kind, scene, cfg);
    const auto t1 = std::chrono::steady_clock::now();

    BenchRecord r;
    r.mixer = kind;
    r.n = n;
    r.edge_voxels = kind == MixerKind::Sfm ? erf_edge : cfg.window;
    r.edge_m = r.edge_voxels * cfg.voxel_edge;
    r.interaction_pairs = count.total();
    r.bytes_model = bytes_model(kind, n, count, cfg);
    r.wall_ns = timing ? std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() : 0;
    if (kind == MixerKind::Sfm) {
      out.x.push_back(static_cast<double>(n));
      out.y.push_back(static_cast<double>(r.interaction_pairs));
    } else {
      const double window_cells = std::pow(static_cast<double>(cfg.window), 3);
      const double windows = std::pow(static_cast<double>(edge), 3) / window_cells;
      r.occupancy = static_cast<double>(n) / windows;
      out.x.push_back(r.occupancy);
      out.y.push_back(static_cast<double>(r.interaction_pairs) / windows);
    }
    out.records.push_back(r);
  }
  out.slope = loglog_slope(out.x, out.y);
  return out;
}

/// One JSON object per run, then one summary object carrying the fit.
inline std::string report_json_lines(const ScalingResult& res) {
  std::string out;
  for (const auto& r : res.records) {
    nlohmann::ordered_json j;
    j["mixer"] = to_string(r.mixer);
    j["n"] = r.n;
    if (r.mixer == MixerKind::Sfm) {
      j["erf_voxels"] = r.edge_voxels;
      j["erf_m"] = r.edge_m;
    } else {
      j["window_voxels"] = r.edge_voxels;
      j["window_m"] = r.edge_m;
    }
    j["interaction_pairs"] = r.interaction_pairs;
    j["bytes_model"] = r.bytes_model;
    j["wall_ns"] = r.wall_ns;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json s;
  s["fit"] = "loglog";
  s["mixer"] = res.records.empty() ? "" : to_string(res.records.front().mixer);
  s["x"] = res.x_axis;
  s["x_values"] = res.x;
  s["slope"] = res.slope;
  out += s.dump() + "\n";
  return out;
}

}  // namespace focalvox::bench
