// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace focalvox {

enum class Errc {
  DuplicateCoordinate,
  OutOfRange,
  InvalidSpec,
  ShapeMismatch,
  EmptyBatch,
  NonFiniteGradient,
  NonFiniteValue,
  EmptyScene,
  InactiveQuery,
  DegenerateFit,
  ParseError,
  IoError,
  BadMagic,
  VersionMismatch,
  TruncatedPayload,
  ConfigError,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::DuplicateCoordinate: return "DuplicateCoordinate";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::EmptyScene: return "EmptyScene";
    case Errc::InactiveQuery: return "InactiveQuery";
    case Errc::DegenerateFit: return "DegenerateFit";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// All library failures surface as this exception; `code()` identifies the
/// failure class so callers (and the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace focalvox
