// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. `run` is the whole program minus main(), so the
// unit suite can drive it in-process.
//
// Exit codes: 0 success, 1 validation or usage error, 2 file / format error.
#pragma once

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "acceptance/criteria.hpp"
#include "focalvox/backbone/network.hpp"
#include "focalvox/bench/interactions.hpp"
#include "focalvox/erf/pgm.hpp"
#include "focalvox/erf/probe.hpp"
#include "focalvox/io/config_json.hpp"
#include "focalvox/io/points.hpp"
#include "focalvox/io/weights.hpp"

namespace focalvox::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitIo = 2;

/// Bad flag values that CLI11 cannot see (malformed lists, plane names).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int exit_code(Errc code) {
  switch (code) {
    case Errc::IoError:
    case Errc::BadMagic:
    case Errc::VersionMismatch:
    case Errc::TruncatedPayload:
    case Errc::ParseError:
      return kExitIo;
    default:
      return kExitInvalid;
  }
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::vector<long long> parse_int_list(const std::string& s, const std::string& flag, std::size_t expect = 0) {
  std::vector<long long> out;
  std::stringstream in(s);
  std::string field;
  while (std::getline(in, field, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != field.size()) throw UsageError(flag + ": '" + field + "' is not an integer");
    out.push_back(v);
  }
  if (out.empty() || (expect && out.size() != expect))
    throw UsageError(flag + " expects " + (expect ? std::to_string(expect) + " " : "a list of ") + "comma-separated integers");
  return out;
}

inline erf::Plane parse_plane(const std::string& s) {
  if (s == "bev") return erf::Plane::bev();
  if (s.rfind("z:", 0) == 0) return erf::Plane::slab(static_cast<int>(parse_int_list(s.substr(2), "--plane", 1)[0]));
  throw UsageError("--plane must be bev or z:K, got '" + s + "'");
}

// ---- shared inputs -------------------------------------------------------------

struct ModelArgs {
  std::string points, config, weights;
  std::optional<std::uint64_t> init_seed;
};

inline void add_model_flags(CLI::App* sub, ModelArgs& m, bool need_weights) {
  sub->add_option("--points", m.points, "point cloud (.csv, or .bin packed float32 x,y,z,intensity)")->required();
  sub->add_option("--config", m.config, "network config JSON")->required();
  auto* w = sub->add_option("--weights", m.weights, "weights file");
  auto* s = sub->add_option("--init-seed", m.init_seed, "synthesize weights from this seed instead");
  w->excludes(s);
  s->excludes(w);
  if (need_weights) sub->callback([w, s] {
      if (w->count() + s->count() == 0) throw CLI::ValidationError("--weights or --init-seed is required");
    });
}

template <typename T>
nn::ParamStore<T> load_model(const ModelArgs& m, const backbone::NetworkConfig& cfg) {
  const auto specs = backbone::declare_network(cfg);
  if (!m.weights.empty()) return io::load_weights<T>(m.weights, specs);
  return nn::instantiate<T>(specs, m.init_seed.value_or(cfg.seed));
}

template <typename T>
SparseTensor<T, 3> decorated_voxels(const ModelArgs& m, const backbone::NetworkConfig& cfg) {
  auto v = io::voxelize(io::load_points(m.points), cfg.voxelizer);
  require(v.size() > 0, Errc::EmptyScene, "no points fall inside the voxelizer range");
  return {v.coords, v.features.template cast<T>(), v.spatial_shape};
}

template <typename T, int D>
std::string dump_csv(const SparseTensor<T, D>& t) {
  std::string out = "b";
  const char* axes = "xyz";
  for (int d = 0; d < D; ++d) out += std::string(",") + axes[d];
  for (std::size_t c = 0; c < t.channels(); ++c) out += ",f" + std::to_string(c);
  out += "\n";
  for (std::size_t r = 0; r < t.size(); ++r) {
    out += std::to_string(t.coords[r].batch);
    for (int d = 0; d < D; ++d) out += "," + std::to_string(t.coords[r].ijk[d]);
    for (std::size_t c = 0; c < t.channels(); ++c) out += "," + num(static_cast<double>(t.features(r, c)));
    out += "\n";
  }
  return out;
}

// ---- subcommands ---------------------------------------------------------------

struct VoxelizeArgs {
  ModelArgs model;
  std::string out;
  bool raw = false;
};

template <typename T>
int voxelize_cmd(const VoxelizeArgs& a, const backbone::NetworkConfig& cfg, std::ostream& out) {
  auto voxels = decorated_voxels<T>(a.model, cfg);
  SparseTensor<T, 3> result = voxels;
  if (!a.raw) {
    // Only the VFE layer is read; the rest of the store is unused here.
    auto store = load_model<T>(a.model, cfg);
    nn::GradTape<T> tape(false);
    nn::Context<T> ctx(tape, store);
    result = ctx.output(backbone::encode_to_stage(ctx, cfg, ctx.input(voxels), 0));
  }
  io::write_file_atomic(a.out, dump_csv(result));
  out << result.size() << " voxels, " << result.channels() << " channels -> " << a.out << "\n";
  return kExitOk;
}

struct ForwardArgs {
  ModelArgs model;
  std::string dump;
};

template <typename T>
int forward_cmd(const ForwardArgs& a, const backbone::NetworkConfig& cfg, std::ostream& out) {
  auto store = load_model<T>(a.model, cfg);
  auto voxels = decorated_voxels<T>(a.model, cfg);
  nn::GradTape<T> tape(false);
  nn::Context<T> ctx(tape, store);
  auto trace = backbone::sfmnet_forward(ctx, cfg, voxels);
  SparseTensor<T, 2> logits{trace.bev2d.active->coords(), tape.value(trace.logits), trace.bev2d.active->shape()};
  require(logits.features.all_finite(), Errc::NonFiniteValue, "forward pass produced non-finite logits");

  std::vector<double> mean(logits.channels(), 0.0);
  for (std::size_t r = 0; r < logits.size(); ++r)
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += static_cast<double>(logits.features(r, c));
  out << voxels.size() << " voxels";
  for (std::size_t s = 0; s < trace.stages.size(); ++s) out << " -> stage" << s + 1 << " " << trace.stages[s].size();
  out << " -> bev " << logits.size() << "\nmean logits";
  for (double m : mean) out << " " << num(m / static_cast<double>(std::max<std::size_t>(logits.size(), 1)));
  out << "\n";
  if (!a.dump.empty()) io::write_file_atomic(a.dump, dump_csv(logits));
  return kExitOk;
}

struct ErfArgs {
  ModelArgs model;
  std::string query, plane = "bev", out_pgm, out_csv;
  std::optional<std::uint64_t> seed;
  std::size_t stage = 1;
};

template <typename T>
int erf_cmd(const ErfArgs& a, const backbone::NetworkConfig& cfg, std::ostream& out) {
  const auto plane = parse_plane(a.plane);
  auto store = load_model<T>(a.model, cfg);
  auto scene = decorated_voxels<T>(a.model, cfg);
  auto stack = [&](nn::Context<T>& ctx, const nn::SparseVar<3>& x) { return backbone::encode_to_stage(ctx, cfg, x, a.stage); };

  VoxelCoord<3> query{};
  if (!a.query.empty()) {
    auto q = parse_int_list(a.query, "--query", 3);
    query = {0, {static_cast<int>(q[0]), static_cast<int>(q[1]), static_cast<int>(q[2])}};
  } else {
    // Draw among the voxels active at the probed stage.
    nn::GradTape<T> tape(false);
    nn::Context<T> ctx(tape, store);
    auto probed = stack(ctx, ctx.input(scene));
    SparseTensor<T, 3> active{probed.active->coords(), Dense<T>(probed.size(), 0), probed.active->shape()};
    query = erf::select_query(active, *a.seed);
  }

  auto map = erf::erf_gradient_map(store, stack, scene, query);
  erf::emit_pgm(map, plane, a.out_pgm, a.out_csv);
  out << "query " << to_string(query) << " at stage " << a.stage << ": support radius " << map.support_radius()
      << " input voxels, max " << num(map.max) << " -> " << a.out_pgm << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string mixer = "sfm", n_list, report, kernels = "3,3", dilations = "1,3";
  double density = 0.3, voxel_edge = 0.1;
  std::uint64_t seed = 1;
  int window = 5;
  bool timing = false;
};

inline int bench_cmd(const BenchArgs& a, std::ostream& out) {
  bench::MixerConfig cfg;
  cfg.window = a.window;
  cfg.voxel_edge = a.voxel_edge;
  cfg.sfm.kernels.clear();
  cfg.sfm.dilations.clear();
  for (auto k : parse_int_list(a.kernels, "--kernels")) cfg.sfm.kernels.push_back(static_cast<int>(k));
  for (auto d : parse_int_list(a.dilations, "--dilations")) cfg.sfm.dilations.push_back(static_cast<int>(d));
  std::vector<std::size_t> n_list;
  for (auto n : parse_int_list(a.n_list, "--n-list")) {
    if (n < 1) throw UsageError("--n-list entries must be positive");
    n_list.push_back(static_cast<std::size_t>(n));
  }
  auto res = bench::scaling_experiment(bench::parse_mixer(a.mixer), n_list, a.density, a.seed, cfg, a.timing);
  const auto report = bench::report_json_lines(res);
  if (a.report.empty() || a.report == "-") {
    out << report;
  } else {
    io::write_file_atomic(a.report, report);
    out << bench::to_string(res.records.front().mixer) << " slope " << num(res.slope) << " vs " << res.x_axis << " -> "
        << a.report << "\n";
  }
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::string module = "all";
};

inline int gradcheck_cmd(const GradcheckArgs& a, std::ostream& out) {
  const auto w = acceptance::gradcheck_seed(a.seed);
  struct Row {
    const char* name;
    double err, tol;
  };
  const std::vector<Row> rows{{"linear", w.linear, 1e-6}, {"ln", w.ln, 1e-6},        {"bn", w.bn, 1e-6},
                              {"gelu", w.gelu, 1e-6},     {"conv", w.conv, 1e-6},    {"sfm", w.module, 1e-4},
                              {"block", w.block, 1e-4},   {"srb", w.srb, 1e-4}};
  bool ok = true, any = false;
  for (const auto& r : rows) {
    if (a.module != "all" && a.module != r.name) continue;
    any = true;
    ok = ok && r.err < r.tol;
    out << r.name << " " << num(r.err) << (r.err < r.tol ? " ok" : " FAIL") << " (tol " << num(r.tol) << ")\n";
  }
  if (!any) throw UsageError("--module must be all, linear, ln, bn, gelu, conv, sfm, block or srb");
  return ok ? kExitOk : kExitInvalid;
}

// ---- dispatch ------------------------------------------------------------------

template <typename Fn>
int with_precision(const std::string& config_path, Fn&& fn) {
  auto cfg = io::load_config(config_path);
  if (cfg.precision == backbone::Precision::Check64) return fn(cfg, double{});
  return fn(cfg, float{});
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"focalvox: sparse voxel backbone with focal modulation"};
  app.require_subcommand(1);

  VoxelizeArgs vox;
  auto* c_vox = app.add_subcommand("voxelize", "voxelize points and apply the voxel feature encoder");
  add_model_flags(c_vox, vox.model, false);
  c_vox->add_option("--out", vox.out, "voxel dump CSV: b,x,y,z,f0..")->required();
  c_vox->add_flag("--raw", vox.raw, "dump the decorated features before the encoder");

  ForwardArgs fwd;
  auto* c_fwd = app.add_subcommand("forward", "run the full network");
  add_model_flags(c_fwd, fwd.model, true);
  c_fwd->add_option("--dump", fwd.dump, "write BEV logits as CSV: b,x,y,f0..");

  ErfArgs erfa;
  auto* c_erf = app.add_subcommand("erf", "gradient receptive field of one voxel");
  add_model_flags(c_erf, erfa.model, true);
  auto* q = c_erf->add_option("--query", erfa.query, "x,y,z of the query in stage voxels");
  auto* qs = c_erf->add_option("--seed", erfa.seed, "pick the query among active voxels with this seed");
  q->excludes(qs);
  qs->excludes(q);
  c_erf->add_option("--stage", erfa.stage, "probe the output of this stage (0 = encoder only)")
      ->check(CLI::Range(0, 4));
  c_erf->add_option("--plane", erfa.plane, "bev or z:K");
  c_erf->add_option("--out-pgm", erfa.out_pgm)->required();
  c_erf->add_option("--out-csv", erfa.out_csv);
  c_erf->callback([q, qs] {
    if (q->count() + qs->count() == 0) throw CLI::ValidationError("--query or --seed is required");
  });

  BenchArgs ba;
  auto* c_bench = app.add_subcommand("bench", "interaction counts and log-log scaling fit");
  c_bench->add_option("--mixer", ba.mixer, "sfm or local-attention");
  c_bench->add_option("--n-list", ba.n_list, "comma-separated voxel counts")->required();
  c_bench->add_option("--density", ba.density, "grid occupancy");
  c_bench->add_option("--seed", ba.seed);
  c_bench->add_option("--report", ba.report, "JSON-lines output (stdout if omitted)");
  c_bench->add_option("--window", ba.window, "attention window edge in voxels");
  c_bench->add_option("--kernels", ba.kernels, "SFM kernel sizes");
  c_bench->add_option("--dilations", ba.dilations, "SFM dilations");
  c_bench->add_option("--voxel-edge", ba.voxel_edge, "meters per voxel, for the report");
  c_bench->add_flag("--timing", ba.timing, "record wall-clock time (output is then not reproducible)");

  GradcheckArgs ga;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable layer");
  c_grad->add_option("--seed", ga.seed);
  c_grad->add_option("--module", ga.module, "all, linear, ln, bn, gelu, conv, sfm, block or srb");

  auto* c_self = app.add_subcommand("selftest", "run the acceptance checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }

  try {
    if (*c_vox)
      return with_precision(vox.model.config, [&](const auto& cfg, auto t) { return voxelize_cmd<decltype(t)>(vox, cfg, out); });
    if (*c_fwd)
      return with_precision(fwd.model.config, [&](const auto& cfg, auto t) { return forward_cmd<decltype(t)>(fwd, cfg, out); });
    if (*c_erf)
      return with_precision(erfa.model.config, [&](const auto& cfg, auto t) { return erf_cmd<decltype(t)>(erfa, cfg, out); });
    if (*c_bench) return bench_cmd(ba, out);
    if (*c_grad) return gradcheck_cmd(ga, out);
    if (*c_self) return acceptance::run_all(out) == 0 ? kExitOk : kExitInvalid;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace focalvox::cli
