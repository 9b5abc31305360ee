// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "focalvox/backbone/config.hpp"
#include "focalvox/io/files.hpp"

// Network configuration as JSON. Every object rejects keys it does not know;
// "mlp_ratio" and "gate" are optional inside a stage, everything else is
// required. docs/config_schema.json describes the same layout.

namespace focalvox::io {

using json = nlohmann::json;

inline std::string to_string(sfm::GateMode g) {
  switch (g) {
    case sfm::GateMode::Raw: return "raw";
    case sfm::GateMode::Sigmoid: return "sigmoid";
    case sfm::GateMode::Softmax: return "softmax";
  }
  return "raw";
}

inline sfm::GateMode parse_gate(const std::string& s) {
  if (s == "raw") return sfm::GateMode::Raw;
  if (s == "sigmoid") return sfm::GateMode::Sigmoid;
  if (s == "softmax") return sfm::GateMode::Softmax;
  fail(Errc::ConfigError, "gate must be raw, sigmoid or softmax, got '" + s + "'");
}

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional = {}) {
  require(j.is_object(), Errc::ConfigError, where + " must be an object");
  std::set<std::string> known;
  for (const char* k : required) {
    known.insert(k);
    require(j.contains(k), Errc::ConfigError, where + " is missing \"" + k + "\"");
  }
  for (const char* k : optional) known.insert(k);
  for (const auto& [k, v] : j.items())
    require(known.contains(k), Errc::ConfigError, where + " has unknown key \"" + k + "\"");
}

template <typename U>
U get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<U>();
  } catch (const json::exception&) {
    fail(Errc::ConfigError, where + "." + key + " has the wrong type");
  }
}

inline std::size_t get_count(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), Errc::ConfigError,
          where + "." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

template <std::size_t N>
std::array<double, N> get_triple(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  require(v.is_array() && v.size() == N, Errc::ConfigError,
          where + "." + key + " must be an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    require(v[i].is_number(), Errc::ConfigError, where + "." + key + " must hold numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

inline std::vector<int> get_ints(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  require(v.is_array(), Errc::ConfigError, where + "." + key + " must be an array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    require(e.is_number_integer(), Errc::ConfigError, where + "." + key + " must hold integers");
    out.push_back(e.get<int>());
  }
  return out;
}

inline json stage_to_json(const backbone::StageConfig& s) {
  return json{{"n_sfm", s.n_sfm},         {"n_srb", s.n_srb},         {"channels", s.channels},
              {"kernels", s.kernels},     {"dilations", s.dilations}, {"mlp_ratio", s.mlp_ratio},
              {"gate", to_string(s.gate)}};
}

inline backbone::StageConfig stage_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"n_sfm", "n_srb", "channels", "kernels", "dilations"}, {"mlp_ratio", "gate"});
  backbone::StageConfig s;
  s.n_sfm = get_count(j, "n_sfm", where);
  s.n_srb = get_count(j, "n_srb", where);
  s.channels = get_count(j, "channels", where);
  s.kernels = get_ints(j, "kernels", where);
  s.dilations = get_ints(j, "dilations", where);
  if (j.contains("mlp_ratio")) {
    require(j["mlp_ratio"].is_number(), Errc::ConfigError, where + ".mlp_ratio must be a number");
    s.mlp_ratio = j["mlp_ratio"].get<double>();
  }
  if (j.contains("gate")) s.gate = parse_gate(get<std::string>(j, "gate", where));
  return s;
}

}  // namespace detail

inline json config_to_json(const backbone::NetworkConfig& cfg) {
  json stages = json::array();
  for (const auto& s : cfg.stages) stages.push_back(detail::stage_to_json(s));
  const auto& v = cfg.voxelizer;
  return json{{"voxelizer",
               {{"voxel_size", v.voxel_size},
                {"range_min", v.range_min},
                {"range_max", v.range_max},
                {"out_channels", v.out_channels}}},
              {"stages", stages},
              {"downsample_channels", cfg.downsample_channels},
              {"bev", {{"channels", cfg.bev_channels}}},
              {"backbone2d", detail::stage_to_json(cfg.backbone2d)},
              {"precision", backbone::to_string(cfg.precision)},
              {"seed", cfg.seed}};
}

/// Parses and validates; every failure is a ConfigError naming the key.
inline backbone::NetworkConfig config_from_json(const json& j) {
  using detail::check_keys;
  check_keys(j, "config", {"voxelizer", "stages", "downsample_channels", "bev", "backbone2d", "precision", "seed"});
  backbone::NetworkConfig cfg;

  const json& vox = j["voxelizer"];
  check_keys(vox, "voxelizer", {"voxel_size", "range_min", "range_max", "out_channels"});
  cfg.voxelizer.voxel_size = detail::get_triple<3>(vox, "voxel_size", "voxelizer");
  cfg.voxelizer.range_min = detail::get_triple<3>(vox, "range_min", "voxelizer");
  cfg.voxelizer.range_max = detail::get_triple<3>(vox, "range_max", "voxelizer");
  cfg.voxelizer.out_channels = detail::get_count(vox, "out_channels", "voxelizer");

  const json& stages = j["stages"];
  require(stages.is_array() && stages.size() == 4, Errc::ConfigError, "stages must be an array of 4 objects");
  for (std::size_t s = 0; s < 4; ++s)
    cfg.stages[s] = detail::stage_from_json(stages[s], "stages[" + std::to_string(s) + "]");

  const json& down = j["downsample_channels"];
  require(down.is_array() && down.size() == 3, Errc::ConfigError, "downsample_channels must hold 3 integers");
  for (std::size_t s = 0; s < 3; ++s) {
    require(down[s].is_number_unsigned(), Errc::ConfigError, "downsample_channels must hold non-negative integers");
    cfg.downsample_channels[s] = down[s].get<std::size_t>();
  }

  check_keys(j["bev"], "bev", {"channels"});
  cfg.bev_channels = detail::get_count(j["bev"], "channels", "bev");
  cfg.backbone2d = detail::stage_from_json(j["backbone2d"], "backbone2d");
  cfg.precision = backbone::parse_precision(detail::get<std::string>(j, "precision", "config"));
  require(j["seed"].is_number_unsigned(), Errc::ConfigError, "seed must be a non-negative integer");
  cfg.seed = j["seed"].get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

inline std::string encode_config(const backbone::NetworkConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

inline backbone::NetworkConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline backbone::NetworkConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

inline void save_config(const backbone::NetworkConfig& cfg, const std::string& path) {
  write_file_atomic(path, encode_config(cfg));
}

}  // namespace focalvox::io
