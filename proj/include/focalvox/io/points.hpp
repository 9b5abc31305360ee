// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "focalvox/io/files.hpp"

namespace focalvox::io {

struct Point {
  double x = 0, y = 0, z = 0;
  double intensity = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
};

enum class PointFormat { Csv, Bin };

/// ".bin" selects the packed float32 layout, anything else is CSV.
inline PointFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? PointFormat::Bin : PointFormat::Csv;
}

namespace detail {

inline bool parse_double(const std::string& field, double& out) {
  std::size_t b = field.find_first_not_of(" \t\r");
  std::size_t e = field.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  std::string trimmed = field.substr(b, e - b + 1);
  char* end = nullptr;
  out = std::strtod(trimmed.c_str(), &end);
  return end == trimmed.c_str() + trimmed.size();
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline float load_f32_le(const unsigned char* p) {
  std::uint32_t u = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                    std::uint32_t(p[3]) << 24;
  return std::bit_cast<float>(u);
}

inline void store_f32_le(std::string& out, float v) {
  auto u = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

}  // namespace detail

/// Lines "x,y,z[,intensity]"; a first line with a non-numeric field is taken
/// as a header.
/// Row indices in errors are 0-based over data rows.
inline PointCloud parse_points_csv(const std::string& text) {
  PointCloud cloud;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0, row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_commas(line);
    double v[4] = {0, 0, 0, 0};
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      double scratch = 0;
      numeric = numeric && detail::parse_double(fields[i], i < 4 ? v[i] : scratch);
    }
    if (!numeric || (fields.size() != 3 && fields.size() != 4)) {
      if (line_no == 1 && !numeric) continue;
      fail(Errc::ParseError, "row " + std::to_string(row) + ": expected x,y,z[,intensity], got '" + line + "'");
    }
    for (double c : v)
      require(std::isfinite(c), Errc::ParseError, "row " + std::to_string(row) + ": non-finite value");
    cloud.points.push_back({v[0], v[1], v[2], v[3]});
    ++row;
  }
  return cloud;
}

inline PointCloud parse_points_bin(const std::string& bytes) {
  require(bytes.size() % 16 == 0, Errc::ParseError,
          "binary point file size " + std::to_string(bytes.size()) + " is not a multiple of 16");
  PointCloud cloud;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t row = 0; row < bytes.size() / 16; ++row) {
    double v[4];
    for (int i = 0; i < 4; ++i) v[i] = detail::load_f32_le(p + row * 16 + 4 * i);
    for (double c : v)
      require(std::isfinite(c), Errc::ParseError, "row " + std::to_string(row) + ": non-finite value");
    cloud.points.push_back({v[0], v[1], v[2], v[3]});
  }
  return cloud;
}

inline PointCloud load_points(const std::filesystem::path& path, PointFormat format) {
  std::string bytes = read_file(path);
  return format == PointFormat::Bin ? parse_points_bin(bytes) : parse_points_csv(bytes);
}

inline PointCloud load_points(const std::filesystem::path& path) { return load_points(path, format_for(path)); }

inline std::string encode_points_csv(const PointCloud& cloud) {
  std::string out = "x,y,z,intensity\n";
  char buf[128];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.x, p.y, p.z, p.intensity);
    out += buf;
  }
  return out;
}

inline std::string encode_points_bin(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 16);
  for (const auto& p : cloud.points) {
    detail::store_f32_le(out, static_cast<float>(p.x));
    detail::store_f32_le(out, static_cast<float>(p.y));
    detail::store_f32_le(out, static_cast<float>(p.z));
    detail::store_f32_le(out, static_cast<float>(p.intensity));
  }
  return out;
}

inline void save_points(const PointCloud& cloud, const std::filesystem::path& path) {
  write_file_atomic(path, format_for(path) == PointFormat::Bin ? encode_points_bin(cloud) : encode_points_csv(cloud));
}

}  // namespace focalvox::io
